use num_traits::{Signed, Zero};
use randfrob::bundled;
use randfrob::frobenius::{compute_coeffs, homogeneous_coeffs, load_problem, ProblemSpec};
use randfrob::mcengine::{compare_curves, mc_rk4, mc_series, McConfig, McMethod};
use randfrob::polyalg::{f64_to_rational, rational_to_f64, Poly, Rational};
use randfrob::randmodel::{expect_poly, Distribution, MomentOracle};
use randfrob::uqstats::{majorant_sequence, moment_matrix, stat_curves, tail_bound};

fn q(n: i64, d: i64) -> Rational {
    Rational::new(n.into(), d.into())
}

fn bundled_spec(name: &str) -> ProblemSpec {
    load_problem(bundled::get(name).unwrap()).unwrap()
}

/// Order used for the moment-matrix checks; the 41-symbol series example is
/// kept smaller so the suite stays quick.
fn check_order(name: &str) -> usize {
    if name == "beta_series" {
        12
    } else {
        20
    }
}

fn majorant_s(spec: &ProblemSpec) -> f64 {
    if spec.radius.is_finite() {
        spec.radius / 2.0
    } else {
        1.6
    }
}

#[test]
fn homogeneous_superposition() {
    let base = bundled_spec("hermite");
    let symbols = base.model.symbols();
    let u = Poly::var(symbols.lookup("Y0").unwrap());
    let v = Poly::var(symbols.lookup("Y1").unwrap());
    let (alpha, beta) = (q(-3, 7), q(5, 2));
    let with = |y0: Poly, y1: Poly| {
        let mut s = base.clone();
        s.y0 = y0;
        s.y1 = y1;
        compute_coeffs(&s, 20).unwrap()
    };
    let both = with(u.scale(&alpha), v.scale(&beta));
    let first = with(u.clone(), Poly::zero());
    let second = with(Poly::zero(), v.clone());
    for n in 0..=20 {
        assert_eq!(
            both.coeffs[n],
            &first.coeffs[n].scale(&alpha) + &second.coeffs[n].scale(&beta),
            "n = {n}"
        );
    }
}

#[test]
fn sourceless_specs_match_homogeneous_recursion() {
    for (name, text) in bundled::SPECS {
        let spec = load_problem(text).unwrap();
        if spec.c.is_some() {
            continue;
        }
        assert_eq!(
            compute_coeffs(&spec, 20).unwrap(),
            homogeneous_coeffs(&spec, 20).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn point_masses_reduce_to_deterministic_taylor_coefficients() {
    let spec = bundled_spec("polynomial_point");
    let sol = compute_coeffs(&spec, 20).unwrap();
    // x'' + (1/2 + t/4) x' + (1 - t/3) x = 0, x(0) = 1, x'(0) = 1/2
    let a = [q(1, 2), q(1, 4)];
    let b = [q(1, 1), q(-1, 3)];
    let mut x = vec![q(1, 1), q(1, 2)];
    for n in 0..=18usize {
        let mut acc = Rational::zero();
        for m in 0..=n {
            let k = n - m;
            if k < 2 {
                acc -= Rational::from_integer((m as i64 + 1).into()) * &a[k] * &x[m + 1] + &b[k] * &x[m];
            }
        }
        x.push(acc / Rational::from_integer((((n + 2) * (n + 1)) as i64).into()));
    }
    // with point masses, E[p] is p at the point
    for (n, p) in sol.coeffs.iter().enumerate() {
        assert_eq!(expect_poly(p, &spec.model).unwrap(), x[n], "n = {n}");
        assert_eq!(expect_poly(&(p * p), &spec.model).unwrap(), &x[n] * &x[n], "n = {n}");
    }
}

#[test]
fn stats_at_origin_are_initial_moments() {
    for (name, text) in bundled::SPECS {
        let spec = load_problem(text).unwrap();
        let sol = compute_coeffs(&spec, 4).unwrap();
        let (mean, var) = moment_matrix(&sol, &spec.model).unwrap().exact_at(&Rational::zero());
        let e = expect_poly(&spec.y0, &spec.model).unwrap();
        let e2 = expect_poly(&(&spec.y0 * &spec.y0), &spec.model).unwrap();
        assert_eq!(mean, e, "{name}");
        assert_eq!(var, e2 - &e * &e, "{name}");
    }
}

#[test]
fn majorant_dominates_coefficient_norms() {
    for (name, text) in bundled::SPECS {
        let spec = load_problem(text).unwrap();
        let order = check_order(name);
        let sol = compute_coeffs(&spec, order).unwrap();
        let mm = moment_matrix(&sol, &spec.model).unwrap();
        let maj = majorant_sequence(&spec, majorant_s(&spec), order).unwrap();
        for n in 0..=order {
            let norm = rational_to_f64(&mm.second[n][n]).sqrt();
            assert!(
                norm <= maj.h[n] * (1.0 + 1e-12),
                "{name}: ||X_{n}|| = {norm} > H_{n} = {}",
                maj.h[n]
            );
        }
    }
}

#[test]
fn truncation_consistency_and_variance_sign() {
    for (name, text) in bundled::SPECS {
        let spec = load_problem(text).unwrap();
        let order = check_order(name);
        let sol = compute_coeffs(&spec, order + 1).unwrap();
        let full = moment_matrix(&sol, &spec.model).unwrap();
        let trunc = full.truncate(order);
        let maj = majorant_sequence(&spec, majorant_s(&spec), order + 1).unwrap();
        let t_max = if spec.radius.is_finite() {
            spec.radius * 0.75
        } else {
            1.5
        };
        for k in 0..=6 {
            let tau = f64_to_rational(t_max * k as f64 / 6.0);
            let (m1, v1) = full.exact_at(&tau);
            let (m0, v0) = trunc.exact_at(&tau);
            let gap = rational_to_f64(&(m1 - m0).abs());
            let bound = maj.h[order + 1] * rational_to_f64(&tau).powi(order as i32 + 1);
            assert!(
                gap <= bound * (1.0 + 1e-9) + 1e-300,
                "{name} tau {tau}: {gap} > {bound}"
            );
            assert!(
                !v0.is_negative() && !v1.is_negative(),
                "{name}: negative variance at tau {tau}"
            );
        }
    }
}

#[test]
fn tail_bound_covers_the_truncation_error() {
    let spec = bundled_spec("hermite_forced");
    let sol = compute_coeffs(&spec, 40).unwrap();
    let mm = moment_matrix(&sol, &spec.model).unwrap();
    let maj = majorant_sequence(&spec, 1.6, 400).unwrap();
    for t in [0.25, 0.5, 0.75] {
        let tau = f64_to_rational(t);
        let (m40, _) = mm.exact_at(&tau);
        let (m20, _) = mm.truncate(20).exact_at(&tau);
        let b = tail_bound(&maj, t, 0.0, 20).unwrap();
        assert!(b.convergent, "t = {t}");
        assert!(rational_to_f64(&(m40 - m20).abs()) <= b.value, "t = {t}");
    }
}

#[test]
fn cached_and_uncached_moments_agree() {
    let spec = bundled_spec("hermite_forced");
    let sol = compute_coeffs(&spec, 12).unwrap();
    let cached = MomentOracle::new(&spec.model);
    let plain = MomentOracle::uncached(&spec.model);
    for p in &sol.coeffs {
        let sq = p * p;
        assert_eq!(cached.expect(&sq).unwrap(), plain.expect(&sq).unwrap());
        // a second cached query hits the cache
        assert_eq!(cached.expect(&sq).unwrap(), plain.expect(&sq).unwrap());
    }
}

#[test]
fn series_and_rk4_monte_carlo_agree_on_bundled_specs() {
    for (name, text) in bundled::SPECS {
        let spec = load_problem(text).unwrap();
        let order = check_order(name);
        let t_max = if spec.radius.is_finite() {
            0.75 * spec.radius
        } else {
            1.5
        };
        let grid: Vec<f64> = (0..=6).map(|k| t_max * k as f64 / 6.0).collect();
        let cfg = McConfig {
            samples: 4000,
            seed: 5,
            ..Default::default()
        };
        let sol = compute_coeffs(&spec, order).unwrap();
        let series = mc_series(&sol, &spec.model, &grid, &cfg).unwrap();
        let rk4 = mc_rk4(
            &spec,
            &grid,
            &McConfig {
                method: McMethod::Rk4,
                ..cfg
            },
        )
        .unwrap();
        let c = compare_curves(&series, &rk4, 3.0, 1e-8).unwrap();
        assert!(c.flagged.is_empty(), "{name}: {c:?}");
        assert!(series.variance.iter().chain(&rk4.variance).all(|v| *v >= 0.0), "{name}");
    }
}

#[test]
fn monte_carlo_is_independent_of_thread_count() {
    let spec = bundled_spec("hermite_forced");
    let sol = compute_coeffs(&spec, 20).unwrap();
    let grid = [0.0, 0.5, 1.0, 1.5];
    let cfg = McConfig {
        samples: 5000,
        seed: 42,
        ..Default::default()
    };
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            (
                mc_series(&sol, &spec.model, &grid, &cfg).unwrap(),
                mc_rk4(
                    &spec,
                    &grid,
                    &McConfig {
                        method: McMethod::Rk4,
                        rk4_step: 0.01,
                        ..cfg.clone()
                    },
                )
                .unwrap(),
            )
        })
    };
    let one = run(1);
    assert_eq!(one, run(1));
    assert_eq!(one, run(3));
    assert_eq!(one, run(8));
    let other_seed = mc_series(
        &sol,
        &spec.model,
        &grid,
        &McConfig {
            seed: 43,
            ..cfg.clone()
        },
    )
    .unwrap();
    assert_ne!(one.0.mean, other_seed.mean);
}

#[test]
fn exact_stats_agree_with_monte_carlo_on_airy() {
    let spec = bundled_spec("airy");
    let grid = [0.0, 0.5, 1.0, 1.5];
    let sol = compute_coeffs(&spec, 20).unwrap();
    let exact = stat_curves(
        &moment_matrix(&sol, &spec.model).unwrap(),
        &grid,
        0.0,
        spec.radius,
        "exact",
    );
    let mc = mc_series(
        &sol,
        &spec.model,
        &grid,
        &McConfig {
            samples: 20_000,
            seed: 1,
            ..Default::default()
        },
    )
    .unwrap();
    let c = compare_curves(&mc, &exact, 4.0, 0.0).unwrap();
    assert!(c.flagged.is_empty(), "{c:?}");
    assert!(matches!(spec.model.blocks()[0].dist, Distribution::Uniform { .. }));
}
