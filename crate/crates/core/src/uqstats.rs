//! Exact mean/variance curves, the majorant sequence and the Lipschitz
//! diagnostic.

use std::collections::HashMap;

use ethnum::I256;
use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;
use thiserror::Error;

use crate::frobenius::{ProblemSpec, SeriesSolution};
use crate::polyalg::{f64_to_rational, rational_to_f64, Monomial, Poly, Rational};
use crate::randmodel::{EssSup, ModelError, MomentOracle, RandomModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UqError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{0} is not essentially bounded")]
    Unbounded(String),
    #[error("s = {s} must lie in (0, {radius})")]
    SOutOfRange { s: f64, radius: f64 },
    #[error("t = {t} lies outside ({lo}, {hi})")]
    OutsideInterval { t: f64, lo: f64, hi: f64 },
    #[error("majorant has order {have}; need more than {need}")]
    InsufficientOrder { have: usize, need: usize },
}

/// Above this many term pairs, `E[X_n X_m]` is accumulated pair by pair
/// instead of through the product polynomial.
pub const PRODUCT_PAIR_THRESHOLD: usize = 100_000;

/// `e_n = E[X_n]` and `mu_nm = E[X_n X_m]`, exact.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentMatrix {
    pub means: Vec<Rational>,
    /// Full symmetric matrix.
    pub second: Vec<Vec<Rational>>,
}

impl MomentMatrix {
    pub fn order(&self) -> usize {
        self.means.len() - 1
    }

    /// Restriction to `X_0..X_n`.
    pub fn truncate(&self, n: usize) -> MomentMatrix {
        MomentMatrix {
            means: self.means[..=n].to_vec(),
            second: self.second[..=n].iter().map(|row| row[..=n].to_vec()).collect(),
        }
    }

    /// Exact (mean, variance) of the truncated series at offset `tau`.
    pub fn exact_at(&self, tau: &Rational) -> (Rational, Rational) {
        let n = self.means.len();
        let mut mean = Rational::zero();
        for e in self.means.iter().rev() {
            mean = mean * tau + e;
        }
        // anti-diagonal sums: sum_{n+m=k} mu_nm
        let mut diag = vec![Rational::zero(); 2 * n - 1];
        for (i, row) in self.second.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                diag[i + j] += v;
            }
        }
        let mut second = Rational::zero();
        for d in diag.iter().rev() {
            second = second * tau + d;
        }
        let var = second - &mean * &mean;
        (mean, var)
    }
}

/// `p` as `(1/d) * sum n_a m_a` with integer `n_a`, when every numerator
/// fits in an `i128`.
fn scaled_terms(p: &Poly) -> Option<(BigInt, Vec<(&Monomial, I256)>)> {
    let d = p.terms().fold(BigInt::one(), |d, (_, c)| d.lcm(c.denom()));
    let terms = p
        .terms()
        .map(|(m, c)| (c.numer() * (&d / c.denom())).to_i128().map(|n| (m, I256::from(n))))
        .collect::<Option<Vec<_>>>()?;
    Some((d, terms))
}

fn to_bigint(v: I256) -> BigInt {
    BigInt::from_signed_bytes_le(&v.to_le_bytes())
}

/// `E[p*q]` with fixed-width integer accumulation per product monomial.
/// `None` on overflow.
fn fast_second_moment(oracle: &MomentOracle, p: &Poly, q: &Poly) -> Result<Option<Rational>, ModelError> {
    let (Some((dp, tp)), Some((dq, tq))) = (scaled_terms(p), scaled_terms(q)) else {
        return Ok(None);
    };
    let mut sums: HashMap<Monomial, I256> = HashMap::new();
    for (ma, na) in &tp {
        for (mb, nb) in &tq {
            let slot = sums.entry(ma.mul(mb)).or_insert(I256::ZERO);
            match na.checked_mul(*nb).and_then(|v| slot.checked_add(v)) {
                Some(v) => *slot = v,
                None => return Ok(None),
            }
        }
    }
    // group by moment denominator so the final sum needs few gcds
    let mut by_denom: HashMap<BigInt, BigInt> = HashMap::new();
    for (m, s) in sums {
        if s == I256::ZERO {
            continue;
        }
        let mu = oracle.factorized(&m)?;
        if mu.is_zero() {
            continue;
        }
        *by_denom.entry(mu.denom().clone()).or_default() += mu.numer() * to_bigint(s);
    }
    let total = by_denom
        .into_iter()
        .fold(Rational::zero(), |acc, (d, n)| acc + Rational::new(n, d));
    Ok(Some(total / Rational::from_integer(dp * dq)))
}

fn second_moment(oracle: &MomentOracle, p: &Poly, q: &Poly) -> Result<Rational, ModelError> {
    if let Some(v) = fast_second_moment(oracle, p, q)? {
        return Ok(v);
    }
    if p.len() * q.len() > PRODUCT_PAIR_THRESHOLD {
        oracle.expect_product(p, q)
    } else {
        oracle.expect(&(p * q))
    }
}

/// All first and second moments of the solution coefficients.
pub fn moment_matrix(sol: &SeriesSolution, model: &RandomModel) -> Result<MomentMatrix, ModelError> {
    let oracle = MomentOracle::new(model);
    let x = &sol.coeffs;
    let n = x.len();
    let one = Poly::one();
    let means = x
        .par_iter()
        .map(|p| second_moment(&oracle, p, &one))
        .collect::<Result<Vec<_>, _>>()?;
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let values = pairs
        .par_iter()
        .map(|&(i, j)| second_moment(&oracle, &x[i], &x[j]))
        .collect::<Result<Vec<_>, _>>()?;
    let mut second = vec![vec![Rational::zero(); n]; n];
    for (&(i, j), v) in pairs.iter().zip(values) {
        second[j][i] = v.clone();
        second[i][j] = v;
    }
    Ok(MomentMatrix { means, second })
}

/// Mean and variance on a time grid, optionally with 95% half-widths (Monte
/// Carlo curves only).
#[derive(Clone, Debug, PartialEq)]
pub struct StatCurve {
    pub label: String,
    pub grid: Vec<f64>,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub ci_halfwidth: Option<Vec<f64>>,
    /// Half-width for the variance estimate; not part of the CSV schema.
    pub variance_ci_halfwidth: Option<Vec<f64>>,
}

impl StatCurve {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }
}

/// Evaluates `mean(t) = sum e_n tau^n` and
/// `var(t) = sum mu_nm tau^(n+m) - mean(t)^2` exactly, then rounds once.
pub fn stat_curves(mm: &MomentMatrix, grid: &[f64], t0: f64, radius: f64, label: &str) -> StatCurve {
    let t0q = f64_to_rational(t0);
    let rows: Vec<(f64, f64)> = grid
        .par_iter()
        .map(|&t| {
            if (t - t0).abs() >= radius {
                log::warn!("t = {t} lies outside the declared radius {radius} around {t0}");
            }
            let tau = f64_to_rational(t) - &t0q;
            let (mean, var) = mm.exact_at(&tau);
            let mut v = rational_to_f64(&var);
            if v < 0.0 {
                if v < -1e-12 {
                    log::warn!("negative variance {v:e} at t = {t}; clamped to 0");
                }
                v = 0.0;
            }
            (rational_to_f64(&mean), v)
        })
        .collect();
    StatCurve {
        label: label.to_string(),
        grid: grid.to_vec(),
        mean: rows.iter().map(|r| r.0).collect(),
        variance: rows.iter().map(|r| r.1).collect(),
        ci_halfwidth: None,
        variance_ci_halfwidth: None,
    }
}

/// Deterministic sequence dominating `||X_n||_{L2}`.
#[derive(Clone, Debug, PartialEq)]
pub struct MajorantSeq {
    pub s: f64,
    pub d_s: f64,
    pub h: Vec<f64>,
    /// Highest input index that entered `d_s`.
    pub input_order: usize,
}

impl MajorantSeq {
    /// `H_n s^n`
    pub fn scaled(&self) -> Vec<f64> {
        self.h
            .iter()
            .enumerate()
            .map(|(n, h)| h * self.s.powi(n as i32))
            .collect()
    }
}

/// Seeds `H_0, H_1`, `H_2 = (D/2)(H_1 + H_0 + 1)` and runs the second-order
/// recurrence `H_{n+2} = (n/((n+2)s) + D/(n+2)) H_{n+1} + D/((n+2)(n+1)) H_n`.
pub fn majorant_from_parts(d_s: f64, s: f64, h0: f64, h1: f64, order: usize) -> Vec<f64> {
    let mut h = vec![h0, h1, d_s / 2.0 * (h1 + h0 + 1.0)];
    for n in 1..order.saturating_sub(1) {
        let nf = n as f64;
        let next = (nf / ((nf + 2.0) * s) + d_s / (nf + 2.0)) * h[n + 1] + d_s / ((nf + 2.0) * (nf + 1.0)) * h[n];
        h.push(next);
    }
    h.truncate(order + 1);
    h
}

fn bound_of(model: &RandomModel, name: String, p: &Poly) -> Result<f64, UqError> {
    match model.poly_linfty_bound(p)? {
        EssSup::Bounded(r) => Ok(rational_to_f64(&r)),
        EssSup::Unbounded => Err(UqError::Unbounded(name)),
    }
}

/// Builds `H_0..H_K` with `D_s` taken over the (truncated) input coefficients.
pub fn majorant_sequence(spec: &ProblemSpec, s: f64, order: usize) -> Result<MajorantSeq, UqError> {
    if !(s > 0.0 && s < spec.radius) {
        return Err(UqError::SOutOfRange { s, radius: spec.radius });
    }
    let oracle = MomentOracle::new(&spec.model);
    let mut d_s = 0.0f64;
    let mut input_order = 0;
    for (label, series) in [("A", &spec.a), ("B", &spec.b)] {
        for (n, p) in series.entries() {
            if p.is_zero() {
                continue;
            }
            let v = bound_of(&spec.model, format!("{label}_{n}"), p)?;
            d_s = d_s.max(v * s.powi(n as i32));
            input_order = input_order.max(n);
        }
    }
    if let Some(c) = &spec.c {
        for (n, p) in c.entries() {
            if p.is_zero() {
                continue;
            }
            d_s = d_s.max(oracle.l2_norm(p)? * s.powi(n as i32));
            input_order = input_order.max(n);
        }
    }
    let h0 = oracle.l2_norm(&spec.y0)?;
    let h1 = oracle.l2_norm(&spec.y1)?;
    Ok(MajorantSeq {
        s,
        d_s,
        h: majorant_from_parts(d_s, s, h0, h1, order),
        input_order,
    })
}

/// Upper estimate of `sum_{n>N} ||X_n|| |t - t0|^n`.
#[derive(Clone, Debug, PartialEq)]
pub struct TailBound {
    pub value: f64,
    /// Explicit part `sum_{n=N+1}^{K} H_n |tau|^n`.
    pub partial: f64,
    /// Empirical ratio `|tau| H_K / H_{K-1}` used for the geometric remainder.
    pub ratio: f64,
    /// False when the ratio is at or above the 0.999 threshold; `value` is
    /// then infinite.
    pub convergent: bool,
    /// True when the term ratios are non-increasing at the end of the
    /// sequence, so the geometric remainder dominates; otherwise an estimate.
    pub certified: bool,
}

pub const TAIL_RATIO_THRESHOLD: f64 = 0.999;

pub fn tail_bound(maj: &MajorantSeq, t: f64, t0: f64, n: usize) -> Result<TailBound, UqError> {
    let tau = (t - t0).abs();
    if tau >= maj.s {
        return Err(UqError::OutsideInterval {
            t,
            lo: t0 - maj.s,
            hi: t0 + maj.s,
        });
    }
    let k = maj.h.len() - 1;
    if k < n + 2 {
        return Err(UqError::InsufficientOrder { have: k, need: n + 1 });
    }
    if tau == 0.0 {
        return Ok(TailBound {
            value: 0.0,
            partial: 0.0,
            ratio: 0.0,
            convergent: true,
            certified: true,
        });
    }
    let h = &maj.h;
    let partial: f64 = (n + 1..=k).map(|i| h[i] * tau.powi(i as i32)).sum();
    let ratio_at = |i: usize| {
        if h[i - 1] > 0.0 {
            tau * h[i] / h[i - 1]
        } else if h[i] == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    };
    let ratio = ratio_at(k);
    let prev = ratio_at(k - 1);
    if ratio >= TAIL_RATIO_THRESHOLD {
        return Ok(TailBound {
            value: f64::INFINITY,
            partial,
            ratio,
            convergent: false,
            certified: false,
        });
    }
    let remainder = h[k] * tau.powi(k as i32) * ratio / (1.0 - ratio);
    Ok(TailBound {
        value: partial + remainder,
        partial,
        ratio,
        convergent: true,
        certified: ratio <= prev,
    })
}

/// Triangle-inequality bound on `max{1, ||A(t)||_inf + ||B(t)||_inf}` from the
/// truncated input series.
pub fn lipschitz_k(spec: &ProblemSpec, t: f64) -> Result<f64, UqError> {
    let tau = (t - spec.t0).abs();
    if tau >= spec.radius {
        return Err(UqError::OutsideInterval {
            t,
            lo: spec.t0 - spec.radius,
            hi: spec.t0 + spec.radius,
        });
    }
    let mut total = 0.0;
    for (label, series) in [("A", &spec.a), ("B", &spec.b)] {
        for (n, p) in series.entries() {
            if !p.is_zero() {
                total += bound_of(&spec.model, format!("{label}_{n}"), p)? * tau.powi(n as i32);
            }
        }
    }
    Ok(total.max(1.0))
}

/// `sqrt(mu_nn)` for every coefficient.
pub fn coefficient_l2_norms(mm: &MomentMatrix) -> Vec<f64> {
    (0..mm.means.len())
        .map(|i| rational_to_f64(&mm.second[i][i]).max(0.0).sqrt())
        .collect()
}

/// Exact mean and variance at `t = t0`, i.e. of `X_0`.
pub fn exact_at_origin(mm: &MomentMatrix) -> (Rational, Rational) {
    let e0 = mm.means.first().cloned().unwrap_or_else(Rational::zero);
    let mu = mm
        .second
        .first()
        .and_then(|r| r.first())
        .cloned()
        .unwrap_or_else(Rational::zero);
    let var = mu - &e0 * &e0;
    (e0, var)
}
