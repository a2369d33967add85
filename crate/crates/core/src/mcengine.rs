//! Monte Carlo validation.
//!
//! Two estimators share one sampling and aggregation path:
//!
//! * `series`: draw the symbols, evaluate `X_0..X_N` numerically and sum the
//!   truncated series on the grid;
//! * `rk4`: draw the symbols, instantiate the scalar coefficient functions
//!   `a(t)`, `b(t)`, `c(t)` and integrate `x'' + a x' + b x = c` with
//!   classical fixed-step RK4.
//!
//! Sample `i` always uses ChaCha8 stream `i` of the configured seed, samples
//! are grouped into fixed-size chunks, and chunk statistics are merged in a
//! fixed pairwise tree. Output is therefore bit-identical for any thread
//! count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::frobenius::{ProblemSpec, SeriesSolution};
use crate::polyalg::CompiledPoly;
use crate::randmodel::{ModelSampler, RandomModel};
use crate::uqstats::StatCurve;

/// Normal-approximation 95% multiplier.
pub const CI_MULTIPLIER: f64 = 1.96;
const CHUNK: usize = 1024;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum McError {
    #[error("sample count must be at least 1")]
    NoSamples,
    #[error("RK4 step must be positive, got {0}")]
    BadStep(f64),
    #[error("grid must be sorted ascending and start at or after t0 = {t0}")]
    GridOrder { t0: f64 },
    #[error("curves are on different grids: {0}")]
    GridMismatch(String),
    #[error("model does not cover every symbol of the solution")]
    MissingSymbols,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum McMethod {
    Series,
    Rk4,
}

#[derive(Clone, Debug, PartialEq)]
pub struct McConfig {
    pub samples: usize,
    pub seed: u64,
    pub method: McMethod,
    pub rk4_step: f64,
    /// Highest input-series index used by the RK4 path; `None` = all.
    pub input_truncation: Option<usize>,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            samples: 100_000,
            seed: 0,
            method: McMethod::Series,
            rk4_step: 1e-3,
            input_truncation: None,
        }
    }
}

impl McConfig {
    fn check(&self) -> Result<(), McError> {
        if self.samples == 0 {
            return Err(McError::NoSamples);
        }
        if !(self.rk4_step > 0.0 && self.rk4_step.is_finite()) {
            return Err(McError::BadStep(self.rk4_step));
        }
        Ok(())
    }
}

/// Random stream dedicated to sample `index`.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Count, mean and central power sums M2..M4 of one group of values.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl Moments {
    fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = neumaier(values.iter().copied()) / n;
        let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
        for &v in values {
            let d = v - mean;
            let d2 = d * d;
            m2 += d2;
            m3 += d2 * d;
            m4 += d2 * d2;
        }
        Self { n, mean, m2, m3, m4 }
    }

    // Pairwise update of central moments.
    fn merge(a: &Self, b: &Self) -> Self {
        let n = a.n + b.n;
        let d = b.mean - a.mean;
        let d2 = d * d;
        let mean = a.mean + d * b.n / n;
        let m2 = a.m2 + b.m2 + d2 * a.n * b.n / n;
        let m3 = a.m3 + b.m3 + d2 * d * a.n * b.n * (a.n - b.n) / (n * n) + 3.0 * d * (a.n * b.m2 - b.n * a.m2) / n;
        let m4 = a.m4
            + b.m4
            + d2 * d2 * a.n * b.n * (a.n * a.n - a.n * b.n + b.n * b.n) / (n * n * n)
            + 6.0 * d2 * (a.n * a.n * b.m2 + b.n * b.n * a.m2) / (n * n)
            + 4.0 * d * (a.n * b.m3 - b.n * a.m3) / n;
        Self { n, mean, m2, m3, m4 }
    }
}

fn neumaier(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

fn tree_merge(mut level: Vec<Vec<Moments>>) -> Vec<Moments> {
    while level.len() > 1 {
        level = level
            .chunks(2)
            .map(|pair| match pair {
                [a, b] => a.iter().zip(b).map(|(x, y)| Moments::merge(x, y)).collect(),
                [a] => a.clone(),
                _ => unreachable!(),
            })
            .collect();
    }
    level.pop().unwrap_or_default()
}

/// Runs `path(sample_index, out)` for every sample and aggregates per grid
/// point. `out` has one slot per grid point.
fn aggregate<F>(samples: usize, width: usize, label: &str, grid: &[f64], path: F) -> StatCurve
where
    F: Fn(u64, &mut [f64]) + Sync,
{
    let chunks = samples.div_ceil(CHUNK);
    let per_chunk: Vec<Vec<Moments>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(samples);
            let mut table = vec![0.0; (hi - lo) * width];
            for (k, i) in (lo..hi).enumerate() {
                path(i as u64, &mut table[k * width..(k + 1) * width]);
            }
            (0..width)
                .map(|g| {
                    let column: Vec<f64> = (0..hi - lo).map(|k| table[k * width + g]).collect();
                    Moments::of(&column)
                })
                .collect()
        })
        .collect();
    let stats = tree_merge(per_chunk);
    let n = samples as f64;
    if samples == 1 {
        log::warn!("a single sample has no variance; reporting 0");
    }
    let variance: Vec<f64> = stats
        .iter()
        .map(|m| if samples > 1 { (m.m2 / (n - 1.0)).max(0.0) } else { 0.0 })
        .collect();
    let ci = variance.iter().map(|v| CI_MULTIPLIER * (v / n).sqrt()).collect();
    let var_ci = stats
        .iter()
        .zip(&variance)
        .map(|(m, v)| {
            if samples < 4 {
                return 0.0;
            }
            let mu4 = m.m4 / n;
            let var_of_var = (mu4 - v * v * (n - 3.0) / (n - 1.0)) / n;
            CI_MULTIPLIER * var_of_var.max(0.0).sqrt()
        })
        .collect();
    StatCurve {
        label: label.to_string(),
        grid: grid.to_vec(),
        mean: stats.iter().map(|m| m.mean).collect(),
        variance,
        ci_halfwidth: Some(ci),
        variance_ci_halfwidth: Some(var_ci),
    }
}

/// Monte Carlo over the truncated series `sum_{n<=N} X_n tau^n`.
pub fn mc_series(
    sol: &SeriesSolution,
    model: &RandomModel,
    grid: &[f64],
    cfg: &McConfig,
) -> Result<StatCurve, McError> {
    cfg.check()?;
    let sampler = ModelSampler::new(model);
    let width = sampler.width();
    for p in &sol.coeffs {
        if p.symbols().iter().any(|s| s.index() >= width) {
            return Err(McError::MissingSymbols);
        }
    }
    let coeffs: Vec<CompiledPoly> = sol.coeffs.iter().map(CompiledPoly::new).collect();
    let taus: Vec<f64> = grid.iter().map(|t| t - sol.t0).collect();
    let label = format!("mc-series N={} samples={} seed={}", sol.order(), cfg.samples, cfg.seed);
    Ok(aggregate(cfg.samples, grid.len(), &label, grid, |i, out| {
        let mut rng = sample_rng(cfg.seed, i);
        let mut values = vec![0.0; width];
        sampler.draw(&mut rng, &mut values);
        let x: Vec<f64> = coeffs.iter().map(|p| p.eval(&values)).collect();
        for (slot, &tau) in out.iter_mut().zip(&taus) {
            *slot = x.iter().rev().fold(0.0, |acc, c| acc * tau + c);
        }
    }))
}

/// Scalar Taylor coefficients of one realization.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScalarProblem {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub y0: f64,
    pub y1: f64,
    pub t0: f64,
}

fn horner(coeffs: &[f64], tau: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * tau + c)
}

/// Fixed-step schedule: per grid segment, the step count nearest to
/// `delta / h` and the resulting exact step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepPlan {
    segments: Vec<(usize, f64)>,
    pub adjusted: bool,
}

impl StepPlan {
    pub fn new(t0: f64, grid: &[f64], h: f64) -> Result<Self, McError> {
        let mut prev = t0;
        let mut segments = Vec::with_capacity(grid.len());
        let mut adjusted = false;
        for &t in grid {
            if t < prev {
                return Err(McError::GridOrder { t0 });
            }
            let delta = t - prev;
            let steps = if delta == 0.0 {
                0
            } else {
                ((delta / h).round() as usize).max(1)
            };
            if steps > 0 && (steps as f64 * h - delta).abs() > 1e-9 * delta.max(1.0) {
                adjusted = true;
            }
            let step = if steps == 0 { 0.0 } else { delta / steps as f64 };
            segments.push((steps, step));
            prev = t;
        }
        Ok(Self { segments, adjusted })
    }
}

/// Integrates `x'' + a x' + b x = c` with classical RK4 and returns `x` at
/// each grid point.
pub fn rk4_solve(p: &ScalarProblem, grid: &[f64], plan: &StepPlan) -> Vec<f64> {
    let rhs = |t: f64, x: f64, v: f64| -> (f64, f64) {
        let tau = t - p.t0;
        (v, horner(&p.c, tau) - horner(&p.b, tau) * x - horner(&p.a, tau) * v)
    };
    let (mut t, mut x, mut v) = (p.t0, p.y0, p.y1);
    let mut out = Vec::with_capacity(grid.len());
    for (&target, &(steps, h)) in grid.iter().zip(&plan.segments) {
        let start = t;
        for k in 0..steps {
            let (k1x, k1v) = rhs(t, x, v);
            let (k2x, k2v) = rhs(t + h / 2.0, x + h / 2.0 * k1x, v + h / 2.0 * k1v);
            let (k3x, k3v) = rhs(t + h / 2.0, x + h / 2.0 * k2x, v + h / 2.0 * k2v);
            let (k4x, k4v) = rhs(t + h, x + h * k3x, v + h * k3v);
            x += h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
            v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
            t = start + (k + 1) as f64 * h;
        }
        t = target;
        out.push(x);
    }
    out
}

/// Monte Carlo with an RK4 solve per realization.
pub fn mc_rk4(spec: &ProblemSpec, grid: &[f64], cfg: &McConfig) -> Result<StatCurve, McError> {
    cfg.check()?;
    let plan = StepPlan::new(spec.t0, grid, cfg.rk4_step)?;
    if plan.adjusted {
        log::warn!(
            "step {} does not divide the grid spacing; using the nearest whole number of steps per segment",
            cfg.rk4_step
        );
    }
    let sampler = ModelSampler::new(&spec.model);
    let width = sampler.width();
    let limit = cfg.input_truncation.unwrap_or(usize::MAX);
    let compile = |s: Option<&crate::frobenius::SeriesProcess>| -> Vec<CompiledPoly> {
        let Some(s) = s else { return Vec::new() };
        let top = s.max_index().map(|m| m.min(limit));
        let Some(top) = top else { return Vec::new() };
        (0..=top)
            .map(|n| match s.get(n) {
                Some(p) => CompiledPoly::new(p),
                None => CompiledPoly::new(&crate::polyalg::Poly::zero()),
            })
            .collect()
    };
    let a = compile(Some(&spec.a));
    let b = compile(Some(&spec.b));
    let c = compile(spec.c.as_ref());
    let y0 = CompiledPoly::new(&spec.y0);
    let y1 = CompiledPoly::new(&spec.y1);
    let label = format!("mc-rk4 h={} samples={} seed={}", cfg.rk4_step, cfg.samples, cfg.seed);
    Ok(aggregate(cfg.samples, grid.len(), &label, grid, |i, out| {
        let mut rng = sample_rng(cfg.seed, i);
        let mut values = vec![0.0; width];
        sampler.draw(&mut rng, &mut values);
        let eval = |ps: &[CompiledPoly]| ps.iter().map(|p| p.eval(&values)).collect::<Vec<_>>();
        let problem = ScalarProblem {
            a: eval(&a),
            b: eval(&b),
            c: eval(&c),
            y0: y0.eval(&values),
            y1: y1.eval(&values),
            t0: spec.t0,
        };
        out.copy_from_slice(&rk4_solve(&problem, grid, &plan));
    }))
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurveComparison {
    pub max_abs_mean: f64,
    pub max_rel_mean: f64,
    pub max_abs_var: f64,
    pub max_rel_var: f64,
    /// Grid point of the largest mean deviation.
    pub worst_mean_t: f64,
    /// Grid points where a mean or variance deviation exceeds both `z_max`
    /// combined standard errors and the absolute tolerance.
    pub flagged: Vec<f64>,
    /// Largest |mean difference| / combined standard error, when either
    /// curve carries intervals.
    pub max_z_mean: Option<f64>,
    pub max_z_var: Option<f64>,
}

/// Combined standard error at point `i` from 95% half-widths.
fn combined(a: &Option<Vec<f64>>, b: &Option<Vec<f64>>, i: usize) -> Option<f64> {
    let pick = |c: &Option<Vec<f64>>| c.as_ref().map(|v| v[i]);
    match (pick(a), pick(b)) {
        (None, None) => None,
        (x, y) => {
            let (x, y) = (x.unwrap_or(0.0), y.unwrap_or(0.0));
            Some((x * x + y * y).sqrt() / CI_MULTIPLIER)
        }
    }
}

/// Pointwise comparison of two curves on the same grid. Points are flagged
/// only when at least one curve carries intervals. `abs_tol` keeps
/// degenerate (zero-variance) curves from being flagged over rounding.
pub fn compare_curves(a: &StatCurve, b: &StatCurve, z_max: f64, abs_tol: f64) -> Result<CurveComparison, McError> {
    if a.grid.len() != b.grid.len() {
        return Err(McError::GridMismatch(format!(
            "{} vs {} points",
            a.grid.len(),
            b.grid.len()
        )));
    }
    if let Some((x, y)) = a.grid.iter().zip(&b.grid).find(|(x, y)| (*x - *y).abs() > 1e-9) {
        return Err(McError::GridMismatch(format!("t = {x} vs t = {y}")));
    }
    let rel = |d: f64, r: f64| {
        if r != 0.0 {
            d / r.abs()
        } else if d == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    };
    let mut out = CurveComparison {
        max_abs_mean: 0.0,
        max_rel_mean: 0.0,
        max_abs_var: 0.0,
        max_rel_var: 0.0,
        worst_mean_t: a.grid.first().copied().unwrap_or(0.0),
        flagged: Vec::new(),
        max_z_mean: None,
        max_z_var: None,
    };
    for i in 0..a.grid.len() {
        let dm = (a.mean[i] - b.mean[i]).abs();
        let dv = (a.variance[i] - b.variance[i]).abs();
        if dm > out.max_abs_mean {
            out.max_abs_mean = dm;
            out.worst_mean_t = a.grid[i];
        }
        out.max_rel_mean = out.max_rel_mean.max(rel(dm, b.mean[i]));
        out.max_abs_var = out.max_abs_var.max(dv);
        out.max_rel_var = out.max_rel_var.max(rel(dv, b.variance[i]));
        let mut flag = false;
        if let Some(se) = combined(&a.ci_halfwidth, &b.ci_halfwidth, i) {
            let z = z_score(dm, se);
            flag |= z > z_max && dm > abs_tol;
            out.max_z_mean = Some(out.max_z_mean.unwrap_or(0.0).max(z));
        }
        if let Some(se) = combined(&a.variance_ci_halfwidth, &b.variance_ci_halfwidth, i) {
            let z = z_score(dv, se);
            flag |= z > z_max && dv > abs_tol;
            out.max_z_var = Some(out.max_z_var.unwrap_or(0.0).max(z));
        }
        if flag {
            out.flagged.push(a.grid[i]);
        }
    }
    Ok(out)
}

fn z_score(d: f64, se: f64) -> f64 {
    if se > 0.0 {
        d / se
    } else if d == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frobenius::{compute_coeffs, SeriesProcess};
    use crate::polyalg::{Poly, Rational};
    use crate::randmodel::Distribution;
    use crate::uqstats::{moment_matrix, stat_curves};

    fn oscillator() -> ScalarProblem {
        ScalarProblem {
            b: vec![1.0],
            y0: 1.0,
            ..Default::default()
        }
    }

    fn max_error(h: f64) -> f64 {
        let grid: Vec<f64> = (1..=8).map(|i| i as f64 * 0.25).collect();
        let plan = StepPlan::new(0.0, &grid, h).unwrap();
        rk4_solve(&oscillator(), &grid, &plan)
            .iter()
            .zip(&grid)
            .map(|(x, t)| (x - t.cos()).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn harmonic_oscillator() {
        let t = std::f64::consts::FRAC_PI_3;
        let plan = StepPlan::new(0.0, &[t], 1e-3).unwrap();
        assert!(plan.adjusted);
        let x = rk4_solve(&oscillator(), &[t], &plan)[0];
        assert!((x - 0.5).abs() < 1e-6);
    }

    #[test]
    fn rk4_is_fourth_order() {
        let e: Vec<f64> = [1e-2, 5e-3, 2.5e-3].iter().map(|&h| max_error(h)).collect();
        for w in e.windows(2) {
            let ratio = w[0] / w[1];
            assert!((12.0..=20.0).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn moments_merge_matches_direct() {
        let values: Vec<f64> = (0..3000).map(|i| ((i * 7919) % 1013) as f64 / 97.0 - 3.0).collect();
        let direct = Moments::of(&values);
        let parts: Vec<Vec<Moments>> = values.chunks(CHUNK).map(|c| vec![Moments::of(c)]).collect();
        let merged = tree_merge(parts)[0];
        for (x, y) in [
            (direct.mean, merged.mean),
            (direct.m2, merged.m2),
            (direct.m3, merged.m3),
            (direct.m4, merged.m4),
        ] {
            assert!((x - y).abs() <= 1e-9 * y.abs().max(1.0), "{x} vs {y}");
        }
    }

    fn q(n: i64, d: i64) -> Rational {
        Rational::new(n.into(), d.into())
    }

    #[test]
    fn point_mass_model_has_no_scatter() {
        let mut model = RandomModel::new();
        let a = model.add_scalar("A", Distribution::PointMass(q(1, 2))).unwrap();
        let y0 = model.add_scalar("Y0", Distribution::PointMass(q(2, 1))).unwrap();
        let mut spec = ProblemSpec::new(model, Poly::var(y0), Poly::zero());
        spec.b = SeriesProcess::from_terms([(1, Poly::var(a))]);
        let sol = compute_coeffs(&spec, 12).unwrap();
        let grid = [0.0, 0.5, 1.0];
        let cfg = McConfig {
            samples: 50,
            ..Default::default()
        };
        let mc = mc_series(&sol, &spec.model, &grid, &cfg).unwrap();
        let exact = stat_curves(
            &moment_matrix(&sol, &spec.model).unwrap(),
            &grid,
            0.0,
            f64::INFINITY,
            "exact",
        );
        for i in 0..grid.len() {
            assert!((mc.mean[i] - exact.mean[i]).abs() < 1e-12);
            assert!(mc.variance[i] < 1e-12);
        }
    }

    #[test]
    fn single_sample_reports_zero_variance() {
        let mut model = RandomModel::new();
        let y0 = model
            .add_scalar("Y0", Distribution::Uniform { a: q(0, 1), b: q(1, 1) })
            .unwrap();
        let spec = ProblemSpec::new(model, Poly::var(y0), Poly::zero());
        let sol = compute_coeffs(&spec, 3).unwrap();
        let cfg = McConfig {
            samples: 1,
            ..Default::default()
        };
        let mc = mc_series(&sol, &spec.model, &[0.0, 1.0], &cfg).unwrap();
        assert_eq!(mc.variance, vec![0.0, 0.0]);
        assert_eq!(
            mc_series(&sol, &spec.model, &[0.0], &McConfig { samples: 0, ..cfg }),
            Err(McError::NoSamples)
        );
    }

    #[test]
    fn zero_data_integrates_to_zero() {
        let mut model = RandomModel::new();
        let a = model
            .add_scalar("A", Distribution::Uniform { a: q(0, 1), b: q(1, 1) })
            .unwrap();
        let mut spec = ProblemSpec::new(model, Poly::zero(), Poly::zero());
        spec.b = SeriesProcess::from_terms([(0, Poly::var(a))]);
        let cfg = McConfig {
            samples: 20,
            method: McMethod::Rk4,
            rk4_step: 0.01,
            ..Default::default()
        };
        let mc = mc_rk4(&spec, &[0.5, 1.0], &cfg).unwrap();
        assert_eq!(mc.mean, vec![0.0, 0.0]);
        assert_eq!(mc.variance, vec![0.0, 0.0]);
        assert!(matches!(
            mc_rk4(&spec, &[1.0, 0.5], &cfg),
            Err(McError::GridOrder { .. })
        ));
    }

    #[test]
    fn comparison_basics() {
        let curve = StatCurve {
            label: "a".into(),
            grid: vec![0.0, 1.0],
            mean: vec![1.0, 2.0],
            variance: vec![0.5, 0.7],
            ci_halfwidth: None,
            variance_ci_halfwidth: None,
        };
        let c = compare_curves(&curve, &curve, 3.0, 0.0).unwrap();
        assert_eq!((c.max_abs_mean, c.max_abs_var), (0.0, 0.0));
        assert!(c.flagged.is_empty() && c.max_z_mean.is_none());
        let mut short = curve.clone();
        short.grid.pop();
        assert!(matches!(
            compare_curves(&curve, &short, 3.0, 0.0),
            Err(McError::GridMismatch(_))
        ));
        let mut mc = curve.clone();
        mc.mean[1] = 2.1;
        mc.ci_halfwidth = Some(vec![0.05, 0.05]);
        let c = compare_curves(&mc, &curve, 3.0, 0.0).unwrap();
        assert_eq!(c.flagged, vec![1.0]);
        assert!(compare_curves(&mc, &curve, 4.0, 0.0).unwrap().flagged.is_empty());
        assert!(compare_curves(&mc, &curve, 3.0, 0.2).unwrap().flagged.is_empty());
        assert!((c.max_abs_mean - 0.1).abs() < 1e-12);
        assert_eq!(c.worst_mean_t, 1.0);
    }
}
