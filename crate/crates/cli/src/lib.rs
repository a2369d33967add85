//! Command-line front end for `randfrob`.
//!
//! Exit status: 0 on success, 1 when a check or comparison fails, 2 on usage,
//! I/O or spec errors.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use num_traits::Signed;
use randfrob::bundled;
use randfrob::csvio::{self, FloatFormat};
use randfrob::frobenius::{compute_coeffs, load_problem, validate_hypotheses, ProblemSpec, Verdict};
use randfrob::mcengine::{compare_curves, mc_rk4, mc_series, McConfig, McMethod};
use randfrob::polyalg::{parse_rational, rational_to_f64, Rational};
use randfrob::uqstats::{majorant_sequence, moment_matrix, stat_curves, tail_bound};

#[derive(Parser, Debug)]
#[command(
    name = "randfrob",
    version,
    about = "Mean-square power series solutions of random second order linear ODEs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check the boundedness and integrability hypotheses of a spec.
    Check {
        spec: String,
        /// Also write the report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Compute X_0..X_N and write them as `n,polynomial`.
    Solve {
        spec: String,
        #[arg(long)]
        order: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact mean and variance of the truncated series on a grid.
    Stats {
        spec: String,
        #[arg(long)]
        order: Option<usize>,
        /// `start:end:step`, both ends included, or a single point.
        #[arg(long)]
        grid: String,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Shortest round-trip floats instead of 6 significant digits.
        #[arg(long)]
        full_precision: bool,
    },
    /// Monte Carlo estimate of mean and variance.
    Mc {
        spec: String,
        #[arg(long, value_enum, default_value_t = Method::Series)]
        method: Method,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// RK4 step.
        #[arg(long, default_value_t = 1e-3)]
        step: f64,
        /// Series truncation order for `--method series`.
        #[arg(long)]
        order: Option<usize>,
        #[arg(long)]
        grid: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        full_precision: bool,
    },
    /// Compare two stats CSV files point by point.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Flag points deviating by more than this many standard errors.
        #[arg(long, default_value_t = 3.0)]
        z: f64,
        /// Deviations at or below this are never flagged.
        #[arg(long, default_value_t = 0.0)]
        abs_tol: f64,
    },
    /// Majorant sequence H_n for a given s.
    Majorant {
        spec: String,
        #[arg(long)]
        s: f64,
        #[arg(long)]
        order: Option<usize>,
        /// Also report the tail bound at this t for truncation order N.
        #[arg(long)]
        t: Option<f64>,
        /// Truncation order used with `--t`.
        #[arg(long, default_value_t = 20)]
        n: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        full_precision: bool,
    },
    /// List the bundled specs, or print one.
    Specs { name: Option<String> },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Method {
    Series,
    Rk4,
}

/// Error with the exit status it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub msg: String,
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        msg: msg.into(),
    }
}

type CmdResult = Result<i32, Failure>;

/// Parses `argv` (including the program name) and runs the command.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            f.code
        }
    }
}

fn dispatch(cmd: Command) -> CmdResult {
    match cmd {
        Command::Check { spec, json } => check(&spec, json.as_deref()),
        Command::Solve { spec, order, out } => solve(&spec, order, out.as_deref()),
        Command::Stats {
            spec,
            order,
            grid,
            out,
            full_precision,
        } => stats(&spec, order, &grid, out.as_deref(), fmt(full_precision)),
        Command::Mc {
            spec,
            method,
            samples,
            seed,
            step,
            order,
            grid,
            out,
            full_precision,
        } => {
            let cfg = McConfig {
                samples,
                seed,
                method: match method {
                    Method::Series => McMethod::Series,
                    Method::Rk4 => McMethod::Rk4,
                },
                rk4_step: step,
                input_truncation: None,
            };
            mc(&spec, &cfg, order, &grid, out.as_deref(), fmt(full_precision))
        }
        Command::Compare { a, b, z, abs_tol } => compare(&a, &b, z, abs_tol),
        Command::Majorant {
            spec,
            s,
            order,
            t,
            n,
            out,
            full_precision,
        } => majorant(&spec, s, order, t.map(|t| (t, n)), out.as_deref(), fmt(full_precision)),
        Command::Specs { name } => specs(name.as_deref()),
    }
}

fn fmt(full: bool) -> FloatFormat {
    if full {
        FloatFormat::Full
    } else {
        FloatFormat::Sig6
    }
}

/// Reads a spec from a path, or from the bundled set when written `@name`.
pub fn read_spec(arg: &str) -> Result<ProblemSpec, Failure> {
    let text = match arg.strip_prefix('@') {
        Some(name) => bundled::get(name)
            .ok_or_else(|| usage(format!("no bundled spec `{name}`; available: {}", bundled_names())))?
            .to_string(),
        None => std::fs::read_to_string(arg).map_err(|e| {
            usage(format!(
                "cannot read spec `{arg}`: {e} (bundled specs are available as @name: {})",
                bundled_names()
            ))
        })?,
    };
    load_problem(&text).map_err(|e| usage(format!("{arg}: {e}")))
}

/// `read_spec`, plus a logged warning when the hypotheses do not hold.
fn read_checked(arg: &str) -> Result<ProblemSpec, Failure> {
    let problem = read_spec(arg)?;
    if validate_hypotheses(&problem).verdict == Verdict::Fail {
        log::warn!("{arg}: hypotheses fail (see `randfrob check`); results may not converge in mean square");
    }
    Ok(problem)
}

fn bundled_names() -> String {
    bundled::SPECS.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", ")
}

/// `start:end:step` with both ends included (1e-12 slack), or one point.
pub fn parse_grid(text: &str) -> Result<Vec<f64>, Failure> {
    let bad = |msg: &str| usage(format!("--grid `{text}`: {msg}"));
    let num = |s: &str| parse_rational(s.trim()).ok_or_else(|| bad(&format!("`{s}` is not a number")));
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        [single] => Ok(vec![rational_to_f64(&num(single)?)]),
        [start, end, step] => {
            let (start, end, step) = (num(start)?, num(end)?, num(step)?);
            if !step.is_positive() {
                return Err(bad("step must be positive"));
            }
            if end < start {
                return Err(bad("end is before start"));
            }
            let slack = Rational::new(1.into(), 1_000_000_000_000i64.into());
            let count = ((&end - &start + &slack) / &step).floor();
            let count: usize = rational_to_f64(&count) as usize;
            if count > 1_000_000 {
                return Err(bad("more than a million points"));
            }
            Ok((0..=count)
                .map(|k| rational_to_f64(&(&start + &step * Rational::from_integer(k.into()))))
                .collect())
        }
        _ => Err(bad("expected start:end:step")),
    }
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| usage(format!("cannot create `{}`: {e}", p.display())))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn io_fail(e: impl std::fmt::Display) -> Failure {
    usage(format!("write failed: {e}"))
}

fn check(spec: &str, json: Option<&Path>) -> CmdResult {
    let problem = read_spec(spec)?;
    let report = validate_hypotheses(&problem);
    print!("{}", report.to_human());
    if let Some(path) = json {
        let text = serde_json::to_string_pretty(&report).map_err(io_fail)?;
        std::fs::write(path, text + "\n").map_err(|e| usage(format!("cannot write `{}`: {e}", path.display())))?;
    }
    Ok(if report.verdict == Verdict::Fail { 1 } else { 0 })
}

fn solve(spec: &str, order: Option<usize>, out: Option<&Path>) -> CmdResult {
    let problem = read_checked(spec)?;
    let order = order.unwrap_or(problem.order);
    let sol = compute_coeffs(&problem, order).map_err(|e| usage(e.to_string()))?;
    csvio::write_coeffs(&sol, problem.model.symbols(), open_out(out)?).map_err(io_fail)?;
    Ok(0)
}

fn stats(spec: &str, order: Option<usize>, grid: &str, out: Option<&Path>, fmt: FloatFormat) -> CmdResult {
    let problem = read_checked(spec)?;
    let grid = parse_grid(grid)?;
    let order = order.unwrap_or(problem.order);
    let sol = compute_coeffs(&problem, order).map_err(|e| usage(e.to_string()))?;
    let mm = moment_matrix(&sol, &problem.model).map_err(|e| usage(e.to_string()))?;
    let curve = stat_curves(&mm, &grid, problem.t0, problem.radius, &format!("series N={order}"));
    csvio::write_stats(&curve, fmt, open_out(out)?).map_err(io_fail)?;
    Ok(0)
}

fn mc(spec: &str, cfg: &McConfig, order: Option<usize>, grid: &str, out: Option<&Path>, fmt: FloatFormat) -> CmdResult {
    let problem = read_checked(spec)?;
    let grid = parse_grid(grid)?;
    let order = order.unwrap_or(problem.order);
    let curve = match cfg.method {
        McMethod::Series => {
            let sol = compute_coeffs(&problem, order).map_err(|e| usage(e.to_string()))?;
            mc_series(&sol, &problem.model, &grid, cfg)
        }
        McMethod::Rk4 => mc_rk4(&problem, &grid, cfg),
    }
    .map_err(|e| usage(e.to_string()))?;
    csvio::write_stats(&curve, fmt, open_out(out)?).map_err(io_fail)?;
    Ok(0)
}

fn compare(a: &Path, b: &Path, z: f64, abs_tol: f64) -> CmdResult {
    let read = |p: &Path| {
        let f = File::open(p).map_err(|e| usage(format!("cannot read `{}`: {e}", p.display())))?;
        csvio::read_stats(f, &p.display().to_string()).map_err(|e| usage(format!("{}: {e}", p.display())))
    };
    let (ca, cb) = (read(a)?, read(b)?);
    let c = compare_curves(&ca, &cb, z, abs_tol).map_err(|e| usage(e.to_string()))?;
    println!("points: {}", ca.grid.len());
    println!(
        "max |mean diff|: {:e} at t = {} (relative {:e})",
        c.max_abs_mean, c.worst_mean_t, c.max_rel_mean
    );
    println!(
        "max |variance diff|: {:e} (relative {:e})",
        c.max_abs_var, c.max_rel_var
    );
    if let Some(zm) = c.max_z_mean {
        println!("max mean z: {zm:.3}");
    }
    if let Some(zv) = c.max_z_var {
        println!("max variance z: {zv:.3}");
    }
    if c.max_z_mean.is_none() && c.max_z_var.is_none() {
        println!("no confidence intervals in either file; nothing flagged");
    }
    if c.flagged.is_empty() {
        println!("within {z} standard errors at every point");
        Ok(0)
    } else {
        let ts: Vec<String> = c.flagged.iter().map(|t| t.to_string()).collect();
        println!("outside {z} standard errors at t = {}", ts.join(", "));
        Ok(1)
    }
}

fn majorant(
    spec: &str,
    s: f64,
    order: Option<usize>,
    tail: Option<(f64, usize)>,
    out: Option<&Path>,
    fmt: FloatFormat,
) -> CmdResult {
    let problem = read_checked(spec)?;
    let order = order.unwrap_or(problem.order);
    let maj = majorant_sequence(&problem, s, order).map_err(|e| usage(e.to_string()))?;
    eprintln!("D_s = {} (inputs up to index {})", maj.d_s, maj.input_order);
    if let Some((t, n)) = tail {
        match tail_bound(&maj, t, problem.t0, n) {
            Ok(b) if b.convergent => eprintln!(
                "tail bound at t = {t}, N = {n}: {:e} (ratio {:.4}{})",
                b.value,
                b.ratio,
                if b.certified { "" } else { ", estimate" }
            ),
            Ok(b) => eprintln!("tail bound at t = {t}, N = {n}: not available (ratio {:.4})", b.ratio),
            Err(e) => return Err(usage(e.to_string())),
        }
    }
    csvio::write_majorant(&maj, fmt, open_out(out)?).map_err(io_fail)?;
    Ok(0)
}

fn specs(name: Option<&str>) -> CmdResult {
    match name {
        None => {
            for (n, _) in bundled::SPECS {
                println!("{n}");
            }
        }
        Some(n) => {
            let text = bundled::get(n)
                .ok_or_else(|| usage(format!("no bundled spec `{n}`; available: {}", bundled_names())))?;
            print!("{text}");
        }
    }
    Ok(0)
}

/// Caps the worker pool from `RANDFROB_THREADS`.
pub fn init_threads() {
    let Ok(v) = std::env::var("RANDFROB_THREADS") else {
        return;
    };
    match v.trim().parse::<usize>() {
        Ok(n) if n > 0 => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                log::warn!("could not size the worker pool: {e}");
            }
        }
        _ => log::warn!("ignoring RANDFROB_THREADS={v}: expected a positive integer"),
    }
}
