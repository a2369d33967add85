//! Problem specification, coefficient recursion and hypothesis checks.
//!
//! Substituting `X(t) = sum X_n (t - t0)^n` into
//! `X'' + A(t) X' + B(t) X = C(t)` and matching powers of `(t - t0)` gives
//!
//! ```text
//! X_0 = Y0,  X_1 = Y1,
//! (n+2)(n+1) X_{n+2} = -sum_{m=0}^{n} [ (m+1) A_{n-m} X_{m+1} + B_{n-m} X_m ] + C_n.
//! ```
//!
//! Every `X_n` is an exact polynomial in the model's symbols. Symbols are
//! never reduced by distributional identities here (a Bernoulli `A^2` stays
//! `A^2`); the moment oracle accounts for that when expectations are taken.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_traits::One;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::polyalg::{rational_to_f64, Poly, Rational};
use crate::randmodel::{Distribution, EssSup, ModelError, MomentOracle, RandomModel};
use crate::specdoc::{
    invalid, lit_poly, lit_radius, lit_rational, DistDecl, GeneratorDecl, SeriesEntry, SpecDocument, SpecError,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FrobError {
    #[error("truncation order must be at least 2, got {0}")]
    OrderTooSmall(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Coefficients of an input series `sum c_n (t - t0)^n`. Missing indices are
/// zero. Series produced by a generator rule remember their family and the
/// input-truncation order `M`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SeriesProcess {
    coeffs: BTreeMap<usize, Poly>,
    family: Option<String>,
    truncation: Option<usize>,
}

impl SeriesProcess {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_terms(terms: impl IntoIterator<Item = (usize, Poly)>) -> Self {
        let mut s = Self::new();
        for (n, p) in terms {
            s.set(n, p);
        }
        s
    }

    pub fn set(&mut self, n: usize, p: Poly) {
        self.coeffs.insert(n, p);
    }

    pub fn get(&self, n: usize) -> Option<&Poly> {
        self.coeffs.get(&n).filter(|p| !p.is_zero())
    }

    /// Explicit entries, including stored zeros of an expanded family.
    pub fn entries(&self) -> impl Iterator<Item = (usize, &Poly)> {
        self.coeffs.iter().map(|(&n, p)| (n, p))
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.values().all(Poly::is_zero)
    }

    pub fn family(&self) -> Option<&str> {
        self.family.as_deref()
    }

    pub fn truncation(&self) -> Option<usize> {
        self.truncation
    }

    pub fn max_index(&self) -> Option<usize> {
        self.coeffs.iter().rev().find(|(_, p)| !p.is_zero()).map(|(&n, _)| n)
    }
}

/// The random IVP `X'' + A X' + B X = C`, `X(t0) = Y0`, `X'(t0) = Y1`.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub a: SeriesProcess,
    pub b: SeriesProcess,
    /// `None` for the homogeneous equation.
    pub c: Option<SeriesProcess>,
    pub y0: Poly,
    pub y1: Poly,
    pub t0: f64,
    /// Declared radius of analyticity; `f64::INFINITY` for entire inputs.
    pub radius: f64,
    pub model: RandomModel,
    /// Default truncation order for solves.
    pub order: usize,
}

impl ProblemSpec {
    pub fn new(model: RandomModel, y0: Poly, y1: Poly) -> Self {
        Self {
            a: SeriesProcess::new(),
            b: SeriesProcess::new(),
            c: None,
            y0,
            y1,
            t0: 0.0,
            radius: f64::INFINITY,
            model,
            order: 20,
        }
    }

    pub fn source(&self, n: usize) -> Option<&Poly> {
        self.c.as_ref().and_then(|c| c.get(n))
    }
}

/// Coefficients `X_0..X_N` of the truncated solution series.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesSolution {
    pub coeffs: Vec<Poly>,
    pub t0: f64,
}

impl SeriesSolution {
    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }
}

// acc += scale * p * q, without materializing p * q
fn add_scaled_product(acc: &mut Poly, scale: &Rational, p: &Poly, q: &Poly) {
    for (mp, cp) in p.terms() {
        let c = scale * cp;
        for (mq, cq) in q.terms() {
            acc.add_term(&c * cq, mp.mul(mq));
        }
    }
}

fn int(n: usize) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// `sum_{m=0}^{n} [(m+1) A_{n-m} X_{m+1} + B_{n-m} X_m]`
fn convolution(spec: &ProblemSpec, x: &[Poly], n: usize) -> Poly {
    let mut acc = Poly::zero();
    for m in 0..=n {
        if let Some(a) = spec.a.get(n - m) {
            add_scaled_product(&mut acc, &int(m + 1), a, &x[m + 1]);
        }
        if let Some(b) = spec.b.get(n - m) {
            add_scaled_product(&mut acc, &Rational::one(), b, &x[m]);
        }
    }
    acc
}

/// Runs the coefficient recursion up to order `n_max` with exact division.
pub fn compute_coeffs(spec: &ProblemSpec, n_max: usize) -> Result<SeriesSolution, FrobError> {
    if n_max < 2 {
        return Err(FrobError::OrderTooSmall(n_max));
    }
    let mut x = Vec::with_capacity(n_max + 1);
    x.push(spec.y0.clone());
    x.push(spec.y1.clone());
    for n in 0..=n_max - 2 {
        let mut rhs = -convolution(spec, &x, n);
        if let Some(c) = spec.source(n) {
            rhs = &rhs + c;
        }
        x.push(rhs.scale(&(int((n + 2) * (n + 1))).recip()));
    }
    Ok(SeriesSolution { coeffs: x, t0: spec.t0 })
}

/// The source-free recursion `X_{n+2} = -1/((n+2)(n+1)) sum[...]`; ignores
/// `spec.c` entirely.
pub fn homogeneous_coeffs(spec: &ProblemSpec, n_max: usize) -> Result<SeriesSolution, FrobError> {
    if n_max < 2 {
        return Err(FrobError::OrderTooSmall(n_max));
    }
    let mut x = vec![spec.y0.clone(), spec.y1.clone()];
    for n in 0..=n_max - 2 {
        let factor = -(int((n + 2) * (n + 1)).recip());
        x.push(convolution(spec, &x, n).scale(&factor));
    }
    Ok(SeriesSolution { coeffs: x, t0: spec.t0 })
}

/// `R_n = (n+2)(n+1) X_{n+2} + sum[...] - C_n` for `0 <= n <= N-2`. Every
/// entry is the zero polynomial for a solution of `spec`.
pub fn residual_coefficients(sol: &SeriesSolution, spec: &ProblemSpec) -> Vec<Poly> {
    let x = &sol.coeffs;
    (0..x.len().saturating_sub(2))
        .map(|n| {
            let mut r = &x[n + 2].scale(&int((n + 2) * (n + 1))) + &convolution(spec, x, n);
            if let Some(c) = spec.source(n) {
                r = &r - c;
            }
            r
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Warn,
    Fail,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum NormKind {
    #[serde(rename = "Linf")]
    Linfty,
    L2,
}

fn ser_extended<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_str("inf")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoefficientCheck {
    pub name: String,
    pub norm: NormKind,
    /// Upper bound for `Linf` (exact for a scaled single symbol), exact for `L2`.
    #[serde(serialize_with = "ser_extended")]
    pub value: f64,
    pub ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HypothesisReport {
    pub coefficients: Vec<CoefficientCheck>,
    #[serde(serialize_with = "ser_extended")]
    pub radius_a: f64,
    #[serde(serialize_with = "ser_extended")]
    pub radius_b: f64,
    #[serde(serialize_with = "ser_extended")]
    pub radius_c: f64,
    #[serde(serialize_with = "ser_extended")]
    pub radius_estimate: f64,
    #[serde(serialize_with = "ser_extended")]
    pub declared_radius: f64,
    pub warnings: Vec<String>,
    pub violations: Vec<String>,
    pub verdict: Verdict,
}

impl HypothesisReport {
    pub fn to_human(&self) -> String {
        let fmt_r = |r: f64| {
            if r.is_finite() {
                format!("{r:.6}")
            } else {
                "inf".to_string()
            }
        };
        let mut out = String::new();
        out.push_str(&format!("verdict: {:?}\n", self.verdict).to_lowercase());
        out.push_str(&format!(
            "radius estimate: {} (A: {}, B: {}, C: {}); declared: {}\n",
            fmt_r(self.radius_estimate),
            fmt_r(self.radius_a),
            fmt_r(self.radius_b),
            fmt_r(self.radius_c),
            fmt_r(self.declared_radius)
        ));
        let checked = self.coefficients.len();
        let bad = self.coefficients.iter().filter(|c| !c.ok).count();
        out.push_str(&format!("coefficients checked: {checked}, failing: {bad}\n"));
        for v in &self.violations {
            out.push_str(&format!("violation: {v}\n"));
        }
        for w in &self.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        out
    }
}

/// Root-test radius of `sum norm_n s^n`. Finitely many explicit terms give
/// an infinite radius; generator families use the upper half of the expanded
/// indices as the tail.
fn root_test_radius(series: &SeriesProcess, norms: &BTreeMap<usize, f64>) -> f64 {
    if series.family().is_none() {
        return f64::INFINITY;
    }
    let top = norms.keys().copied().max().unwrap_or(0);
    let lo = top.div_ceil(2);
    let limsup = norms
        .range(lo.max(1)..)
        .filter(|(_, &v)| v > 0.0)
        .map(|(&n, &v)| v.powf(1.0 / n as f64))
        .fold(0.0, f64::max);
    if limsup == 0.0 {
        f64::INFINITY
    } else {
        1.0 / limsup
    }
}

/// Checks the boundedness and square-integrability hypotheses and estimates
/// the convergence radius of the input series.
pub fn validate_hypotheses(spec: &ProblemSpec) -> HypothesisReport {
    let oracle = MomentOracle::new(&spec.model);
    let mut coefficients = Vec::new();
    let mut violations = Vec::new();
    let mut warnings = Vec::new();

    let mut bounded_norms = |label: &str, series: &SeriesProcess, violations: &mut Vec<String>| {
        let mut norms = BTreeMap::new();
        for (n, p) in series.entries() {
            let name = format!("{label}_{n}");
            let (value, ok) = match spec.model.poly_linfty_bound(p) {
                Ok(EssSup::Bounded(r)) => (rational_to_f64(&r), true),
                Ok(EssSup::Unbounded) => (f64::INFINITY, false),
                Err(e) => {
                    violations.push(format!("{name}: {e}"));
                    (f64::NAN, false)
                }
            };
            if !ok && value.is_infinite() {
                violations.push(format!("{name} not essentially bounded"));
            }
            if ok {
                norms.insert(n, value);
            }
            coefficients.push(CoefficientCheck {
                name,
                norm: NormKind::Linfty,
                value,
                ok,
            });
        }
        norms
    };
    let norms_a = bounded_norms("A", &spec.a, &mut violations);
    let norms_b = bounded_norms("B", &spec.b, &mut violations);

    let mut l2 = |name: String, p: &Poly, violations: &mut Vec<String>| -> f64 {
        let value = match oracle.l2_norm(p) {
            Ok(v) => v,
            Err(e) => {
                violations.push(format!("{name}: {e}"));
                f64::NAN
            }
        };
        let ok = value.is_finite();
        if !ok && !value.is_nan() {
            violations.push(format!("{name} not square integrable"));
        }
        coefficients.push(CoefficientCheck {
            name,
            norm: NormKind::L2,
            value,
            ok,
        });
        value
    };
    let mut norms_c = BTreeMap::new();
    if let Some(c) = &spec.c {
        for (n, p) in c.entries() {
            let v = l2(format!("C_{n}"), p, &mut violations);
            if v.is_finite() {
                norms_c.insert(n, v);
            }
        }
    }
    l2("Y0".to_string(), &spec.y0, &mut violations);
    l2("Y1".to_string(), &spec.y1, &mut violations);

    let radius_a = root_test_radius(&spec.a, &norms_a);
    let radius_b = root_test_radius(&spec.b, &norms_b);
    let radius_c = spec
        .c
        .as_ref()
        .map(|c| root_test_radius(c, &norms_c))
        .unwrap_or(f64::INFINITY);
    let radius_estimate = radius_a.min(radius_b).min(radius_c);
    if spec.radius > radius_estimate * (1.0 + 1e-9) {
        warnings.push(format!(
            "declared radius {} exceeds the root-test estimate {radius_estimate:.6}",
            spec.radius
        ));
    }
    for block in spec.model.blocks() {
        if matches!(block.dist, Distribution::Gamma { .. }) {
            let names: Vec<&str> = block.symbols.iter().map(|&s| spec.model.symbols().name(s)).collect();
            let used_in_coefficients = spec
                .a
                .entries()
                .chain(spec.b.entries())
                .any(|(_, p)| p.symbols().iter().any(|s| block.symbols.contains(s)));
            if used_in_coefficients {
                warnings.push(format!(
                    "{} has unbounded support; replace it by a bounded surrogate (uniform or discrete) to satisfy the hypotheses",
                    names.join(", ")
                ));
            }
        }
    }
    let verdict = if !violations.is_empty() {
        Verdict::Fail
    } else if !warnings.is_empty() {
        Verdict::Warn
    } else {
        Verdict::Pass
    };
    HypothesisReport {
        coefficients,
        radius_a,
        radius_b,
        radius_c,
        radius_estimate,
        declared_radius: spec.radius,
        warnings,
        violations,
        verdict,
    }
}

fn param<'a>(d: &'a DistDecl, name: &str, key: &str) -> Result<&'a serde_json::Value, SpecError> {
    d.params
        .get(name)
        .ok_or_else(|| invalid(key, format!("missing parameter `{name}` for `{}`", d.kind)))
}

fn parse_dist(d: &DistDecl, key: &str) -> Result<Distribution, SpecError> {
    let allowed: &[&str] = match d.kind.as_str() {
        "point" => &["value"],
        "bernoulli" => &["p"],
        "binomial" => &["n", "p"],
        "beta" => &["alpha", "beta"],
        "gamma" => &["shape", "rate"],
        "uniform" => &["a", "b"],
        "discrete" => &["points", "probs"],
        "multinomial" => &["n", "probs"],
        other => {
            return Err(invalid(
                format!("{key}.kind"),
                format!(
                    "unknown distribution kind `{other}` (expected point, bernoulli, binomial, beta, gamma, uniform, discrete or multinomial)"
                ),
            ))
        }
    };
    if let Some(extra) = d.params.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(invalid(
            format!("{key}.{extra}"),
            format!("unknown parameter for `{}` (expected {})", d.kind, allowed.join(", ")),
        ));
    }
    let num = |name: &str| -> Result<Rational, SpecError> {
        let k = format!("{key}.{name}");
        lit_rational(param(d, name, key)?, &k)
    };
    let count = |name: &str| -> Result<u64, SpecError> {
        let k = format!("{key}.{name}");
        param(d, name, key)?
            .as_u64()
            .ok_or_else(|| invalid(k, "expected a nonnegative integer"))
    };
    let list = |name: &str| -> Result<Vec<Rational>, SpecError> {
        let k = format!("{key}.{name}");
        param(d, name, key)?
            .as_array()
            .ok_or_else(|| invalid(&k, "expected an array"))?
            .iter()
            .enumerate()
            .map(|(i, v)| lit_rational(v, &format!("{k}[{i}]")))
            .collect()
    };
    let dist = match d.kind.as_str() {
        "point" => Distribution::PointMass(num("value")?),
        "bernoulli" => Distribution::Bernoulli(num("p")?),
        "binomial" => Distribution::Binomial {
            n: count("n")?,
            p: num("p")?,
        },
        "beta" => Distribution::Beta {
            alpha: num("alpha")?,
            beta: num("beta")?,
        },
        "gamma" => Distribution::Gamma {
            shape: num("shape")?,
            rate: num("rate")?,
        },
        "uniform" => Distribution::Uniform {
            a: num("a")?,
            b: num("b")?,
        },
        "discrete" => Distribution::FiniteDiscrete {
            points: list("points")?,
            probs: list("probs")?,
        },
        "multinomial" => Distribution::Multinomial {
            n: count("n")?,
            probs: list("probs")?,
        },
        _ => unreachable!("kind checked above"),
    };
    dist.validate().map_err(|e| invalid(key, e.to_string()))?;
    Ok(dist)
}

fn model_err(key: String, e: ModelError) -> SpecError {
    invalid(key, e.to_string())
}

fn expand_generator(
    label: &str,
    g: &GeneratorDecl,
    default_m: usize,
    model: &mut RandomModel,
    series: &mut SeriesProcess,
) -> Result<(), SpecError> {
    let key = format!("generators.{label}");
    let m = g.m.unwrap_or(default_m);
    let fields: [(&str, bool); 6] = [
        ("prefix", g.prefix.is_some()),
        ("dist", g.dist.is_some()),
        ("scale", g.scale.is_some()),
        ("power", g.power.is_some()),
        ("ratio", g.ratio.is_some()),
        ("value", g.value.is_some()),
    ];
    let allowed: &[&str] = match g.family.as_str() {
        "iid" => &["prefix", "dist"],
        "inverse_power" => &["scale", "power"],
        "geometric" => &["scale", "ratio"],
        "constant" => &["value"],
        other => {
            return Err(invalid(
                format!("{key}.family"),
                format!("unknown generator family `{other}` (expected iid, inverse_power, geometric or constant)"),
            ))
        }
    };
    if let Some((f, _)) = fields.iter().find(|(f, set)| *set && !allowed.contains(f)) {
        return Err(invalid(
            format!("{key}.{f}"),
            format!("not a parameter of family `{}`", g.family),
        ));
    }
    let scale = match &g.scale {
        Some(v) => lit_rational(v, &format!("{key}.scale"))?,
        None => Rational::one(),
    };
    let default_from = if g.family == "inverse_power" { 1 } else { 0 };
    let from = g.from.unwrap_or(default_from);
    for n in from..=m {
        let coeff = match g.family.as_str() {
            "iid" => {
                let prefix = g
                    .prefix
                    .as_deref()
                    .ok_or_else(|| invalid(&key, "iid family needs `prefix`"))?;
                let d = g
                    .dist
                    .as_ref()
                    .ok_or_else(|| invalid(&key, "iid family needs `dist`"))?;
                let dist = parse_dist(d, &format!("{key}.dist"))?;
                let name = format!("{prefix}_{n}");
                let id = model.add_scalar(&name, dist).map_err(|e| model_err(key.clone(), e))?;
                Poly::var(id)
            }
            "inverse_power" => {
                if n == 0 {
                    return Err(invalid(format!("{key}.from"), "inverse_power needs from >= 1"));
                }
                let p = g
                    .power
                    .ok_or_else(|| invalid(&key, "inverse_power family needs `power`"))?;
                let denom = num_traits::pow(int(n), p as usize);
                Poly::constant(&scale / denom)
            }
            "geometric" => {
                let ratio = g
                    .ratio
                    .as_ref()
                    .ok_or_else(|| invalid(&key, "geometric family needs `ratio`"))?;
                let r = lit_rational(ratio, &format!("{key}.ratio"))?;
                Poly::constant(&scale * num_traits::pow(r, n))
            }
            "constant" => {
                let v = g
                    .value
                    .as_ref()
                    .ok_or_else(|| invalid(&key, "constant family needs `value`"))?;
                lit_poly(v, model.symbols(), &format!("{key}.value"))?
            }
            _ => unreachable!("family checked above"),
        };
        series.set(n, coeff);
    }
    for n in 0..=m {
        series.coeffs.entry(n).or_default();
    }
    series.family = Some(g.family.clone());
    series.truncation = Some(m);
    Ok(())
}

fn explicit_entries(
    label: &str,
    entries: &[SeriesEntry],
    model: &RandomModel,
    series: &mut SeriesProcess,
) -> Result<(), SpecError> {
    let generated_to = series.truncation();
    let mut seen = std::collections::BTreeSet::new();
    for (i, e) in entries.iter().enumerate() {
        let key = format!("series.{label}[{i}]");
        if !seen.insert(e.n) {
            return Err(invalid(key, format!("index {} given twice", e.n)));
        }
        let p = lit_poly(&e.value, model.symbols(), &format!("{key}.value"))?;
        if generated_to.is_some() {
            if let Some(existing) = series.coeffs.get(&e.n) {
                if !existing.is_zero() {
                    return Err(invalid(
                        key,
                        format!("index {} is already produced by the generator", e.n),
                    ));
                }
            }
        }
        series.set(e.n, p);
    }
    Ok(())
}

/// Validates a document and expands it into a [`ProblemSpec`].
pub fn build_problem(doc: &SpecDocument) -> Result<ProblemSpec, SpecError> {
    let mut model = RandomModel::new();
    for (i, s) in doc.symbols.iter().enumerate() {
        let key = format!("symbols[{i}]");
        let dist = parse_dist(&s.dist, &format!("{key}.dist"))?;
        model
            .add_scalar(&s.name, dist)
            .map_err(|e| model_err(format!("{key}.name"), e))?;
    }
    for (i, b) in doc.blocks.iter().enumerate() {
        let key = format!("blocks[{i}]");
        let dist = parse_dist(&b.dist, &format!("{key}.dist"))?;
        let names: Vec<&str> = b.names.iter().map(String::as_str).collect();
        model
            .add_block(&names, dist)
            .map_err(|e| model_err(format!("{key}.names"), e))?;
    }
    let order = doc.problem.order;
    let default_m = 2 * order;
    for label in doc.generators.keys() {
        if !matches!(label.as_str(), "A" | "B" | "C") {
            return Err(invalid(format!("generators.{label}"), "expected one of A, B, C"));
        }
    }
    let build_series = |label: &str, entries: &[SeriesEntry], model: &mut RandomModel| {
        let mut s = SeriesProcess::new();
        if let Some(g) = doc.generators.get(label) {
            expand_generator(label, g, default_m, model, &mut s)?;
        }
        explicit_entries(label, entries, model, &mut s)?;
        Ok::<_, SpecError>(s)
    };
    let a = build_series("A", &doc.series.a, &mut model)?;
    let b = build_series("B", &doc.series.b, &mut model)?;
    let c = if doc.series.c.is_some() || doc.generators.contains_key("C") {
        let entries = doc.series.c.clone().unwrap_or_default();
        Some(build_series("C", &entries, &mut model)?)
    } else {
        None
    };
    let y0 = lit_poly(&doc.initial.y0, model.symbols(), "initial.Y0")?;
    let y1 = lit_poly(&doc.initial.y1, model.symbols(), "initial.Y1")?;
    let t0 = rational_to_f64(&lit_rational(&doc.problem.t0, "problem.t0")?);
    let radius = lit_radius(&doc.problem.radius, "problem.radius")?;
    if order < 2 {
        return Err(invalid("problem.order", "order must be at least 2"));
    }
    Ok(ProblemSpec {
        a,
        b,
        c,
        y0,
        y1,
        t0,
        radius,
        model,
        order,
    })
}

/// Parses and builds in one step.
pub fn load_problem(text: &str) -> Result<ProblemSpec, SpecError> {
    build_problem(&SpecDocument::parse(text)?)
}

/// True when every coefficient is zero.
pub fn is_zero_solution(sol: &SeriesSolution) -> bool {
    sol.coeffs.iter().all(Poly::is_zero)
}
