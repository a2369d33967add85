//! Mean-square power-series solutions of random second-order linear ODEs
//!
//! ```text
//! X''(t) + A(t) X'(t) + B(t) X(t) = C(t),   X(t0) = Y0,   X'(t0) = Y1
//! ```
//!
//! with analytic random inputs. Coefficients of the solution series are exact
//! polynomials in the random symbols; means and variances of the truncated
//! series follow exactly from a moment oracle, a majorant sequence bounds the
//! truncation error, and Monte Carlo runs cross-check the result.

pub mod bundled;
pub mod csvio;
pub mod frobenius;
pub mod mcengine;
pub mod polyalg;
pub mod randmodel;
pub mod specdoc;
pub mod uqstats;
