use super::*;
use crate::calculus::functionals::{running_integral, terminal_component, terminal_square, FnFunctional};
use crate::path::vertical_bump;
use crate::regression::PathFeature;
use crate::stats::log_log_slope;

fn start(x: f64) -> CadlagPath {
    CadlagPath::constant(&[x], 0.0).unwrap()
}

fn sim(steps: usize, n: usize, seed: u64) -> SimulationConfig {
    SimulationConfig::new(TimeGrid::new(0.0, 1.0, steps).unwrap(), 1, n, seed)
}

fn basis() -> RegressionBasis {
    RegressionBasis::default_for(1)
}

#[test]
fn martingale_terminal_value() {
    let phi = terminal_component(0);
    let cfg = sim(20, 4000, 7);
    let sol = solve_regression(&phi, &ZeroGenerator, start(0.7).view(), &cfg, &basis(), &SolverOptions::default()).unwrap();
    assert!((sol.y_root - 0.7).abs() <= 3.0 * sol.y_root_se, "{} ± {}", sol.y_root, sol.y_root_se);
    for k in 0..20 {
        let z = mean(&sol.z_at_step(k, 0));
        assert!((z - 1.0).abs() < 0.05, "step {k}: {z}");
    }

    // f = 0: the root is exactly the sample mean of Φ, and the last step is Φ itself
    let batch = simulate(&cfg).unwrap();
    let paths = cumulate(&batch, start(0.7).view()).unwrap();
    let phis: Vec<f64> = paths.iter().map(|p| p.terminal()[0]).collect();
    assert_eq!(sol.y_root, mean(&phis));
    for (i, v) in phis.iter().enumerate() {
        assert_eq!(sol.y(i, 20), *v);
    }
    assert_eq!(sol.diagnostics.condition_numbers.len(), 20);
}

#[test]
fn linear_generator_matches_exponential_factor() {
    let cfg = sim(25, 5000, 11);
    let f = LinearGenerator::constant(0.1);
    let sol = solve_regression(&terminal_square(), &f, start(0.0).view(), &cfg, &basis(), &SolverOptions::default()).unwrap();
    let exact = 0.1f64.exp();
    let tol = (3.0 * sol.y_root_se).max(0.01 * exact);
    assert!((sol.y_root - exact).abs() <= tol, "{} vs {exact}", sol.y_root);
}

#[test]
fn implicit_correction_stays_close_to_explicit() {
    let cfg = sim(10, 2000, 3);
    let f = LinearGenerator::constant(0.5);
    let explicit = solve_regression(&terminal_square(), &f, start(0.0).view(), &cfg, &basis(), &SolverOptions::default()).unwrap();
    let opts = SolverOptions {
        implicit_correction: true,
        ..Default::default()
    };
    let implicit = solve_regression(&terminal_square(), &f, start(0.0).view(), &cfg, &basis(), &opts).unwrap();
    // per step the correction multiplies by 1 + c dt (1 + c dt) instead of 1 + c dt
    assert!(implicit.y_root > explicit.y_root);
    let ratio = implicit.y_root / explicit.y_root;
    assert!((ratio - (1.0525f64 / 1.05).powi(10)).abs() < 1e-3, "{ratio}");
}

#[test]
fn picard_with_zero_generator_needs_one_iteration() {
    let cfg = sim(10, 1000, 5);
    let batch = simulate(&cfg).unwrap();
    let phi = terminal_square();
    let opts = SolverOptions::default();
    let pic = solve_picard_on(&phi, &ZeroGenerator, start(0.3).view(), &batch, &basis(), 10, 1e-12, &opts).unwrap();
    assert_eq!(pic.diagnostics.iterations, 1);
    let reg = solve_regression_on(&phi, &ZeroGenerator, start(0.3).view(), &batch, &basis(), &opts).unwrap();
    assert!((pic.y_root - reg.y_root).abs() < 1e-12);
}

#[test]
fn picard_agrees_with_closed_form_and_regression() {
    let cfg = sim(20, 4000, 13);
    let batch = simulate(&cfg).unwrap();
    let f = LinearGenerator::constant(0.1);
    let phi = terminal_square();
    let opts = SolverOptions::default();
    let pic = solve_picard_on(&phi, &f, start(0.0).view(), &batch, &basis(), 50, 1e-10, &opts).unwrap();
    let reg = solve_regression_on(&phi, &f, start(0.0).view(), &batch, &basis(), &opts).unwrap();
    let exact = 0.1f64.exp();
    assert!((pic.y_root - exact).abs() <= 3.0 * pic.y_root_se.max(0.01));
    let combined = (pic.y_root_se.powi(2) + reg.y_root_se.powi(2)).sqrt();
    assert!((pic.y_root - reg.y_root).abs() <= 3.0 * combined);

    // successive gaps contract
    let gaps = &pic.diagnostics.picard_gaps;
    assert!(gaps.len() >= 3);
    for w in gaps.windows(2).take(4) {
        assert!(w[1] < w[0], "{gaps:?}");
    }
}

#[test]
fn picard_reports_non_convergence_with_gaps() {
    let cfg = sim(10, 500, 2);
    let f = LinearGenerator::constant(1.0);
    let err = solve_picard(&terminal_square(), &f, start(0.0).view(), &cfg, &basis(), 2, 0.0, &SolverOptions::default())
        .unwrap_err();
    match err {
        Error::NotConverged { iterations, gaps, .. } => {
            assert_eq!(iterations, 2);
            assert_eq!(gaps.len(), 2);
        }
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn comparison_of_identical_and_shifted_inputs() {
    let cfg = sim(10, 1000, 21);
    let phi = terminal_square();
    let opts = SolverOptions::default();
    let same = comparison_check(&phi, &ZeroGenerator, &phi, &ZeroGenerator, start(0.2).view(), &cfg, &basis(), &opts).unwrap();
    assert_eq!(same.gap, 0.0);
    assert!(!same.violation);

    let shifted = FnFunctional::new("sq+1", 2.0, |p| p.terminal()[0].powi(2) + 1.0);
    let r = comparison_check(&phi, &ZeroGenerator, &shifted, &ZeroGenerator, start(0.2).view(), &cfg, &basis(), &opts).unwrap();
    assert!((r.gap - 1.0).abs() < 1e-12);
    assert!(r.se < 1e-12);
    assert!(!r.violation);
}

#[test]
fn singular_regression_names_the_step() {
    let cfg = sim(6, 200, 1);
    let b = RegressionBasis::new(
        vec![PathFeature::Terminal(0), PathFeature::custom("double", |p| 2.0 * p.terminal()[0])],
        1,
    )
    .unwrap();
    let opts = SolverOptions {
        max_condition: 1e6,
        ..Default::default()
    };
    let err = solve_regression(&terminal_square(), &ZeroGenerator, start(0.0).view(), &cfg, &b, &opts).unwrap_err();
    assert!(matches!(err, Error::SingularRegression { step: 5, .. }), "{err}");
}

#[test]
fn non_finite_terminal_names_the_path() {
    let cfg = sim(4, 50, 1);
    let phi = FnFunctional::new("log", 1.0, |p| p.terminal()[0].ln());
    let err = solve_regression(&phi, &ZeroGenerator, start(0.0).view(), &cfg, &basis(), &SolverOptions::default()).unwrap_err();
    match err {
        Error::NonFinite { source_name, step, .. } => {
            assert_eq!(source_name, "log");
            assert_eq!(step, 4);
        }
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn non_finite_generator_names_step() {
    let cfg = sim(4, 50, 1);
    let f = FnGenerator::new("nan", 0.0, 0.0, |_, _, _| f64::NAN);
    let err = solve_regression(&terminal_square(), &f, start(0.0).view(), &cfg, &basis(), &SolverOptions::default()).unwrap_err();
    assert!(matches!(err, Error::NonFinite { step: 3, .. }), "{err}");
}

#[test]
fn grid_must_start_at_the_horizon() {
    let cfg = sim(4, 50, 1);
    let prefix = CadlagPath::constant(&[0.0], 0.5).unwrap();
    assert!(solve_regression(&terminal_square(), &ZeroGenerator, prefix.view(), &cfg, &basis(), &SolverOptions::default()).is_err());
}

#[test]
fn z_for_integral_terminal_is_time_to_maturity() {
    let cfg = sim(20, 4000, 17);
    let phi = running_integral(0, 1.0);
    let sol = solve_regression(&phi, &ZeroGenerator, start(0.0).view(), &cfg, &basis(), &SolverOptions::default()).unwrap();
    for k in [2usize, 8, 14] {
        let s = cfg.grid.node(k);
        let z = mean(&sol.z_at_step(k, 0));
        // on the grid the exact discrete Z is the remaining time after the step
        let expected = 1.0 - s - cfg.grid.dt();
        assert!((z - expected).abs() < 0.05 * (1.0 - s), "step {k}: {z} vs {expected}");
    }
}

#[test]
fn moments_of_zero_solution_vanish() {
    let cfg = sim(5, 100, 1);
    let zero = FnFunctional::new("zero", 0.0, |_| 0.0);
    let m = moment_estimate(&zero, &ZeroGenerator, start(0.0).view(), &cfg, &basis(), 2.0, &SolverOptions::default()).unwrap();
    assert_eq!(m.sup_y, 0.0);
    assert_eq!(m.z_energy, 0.0);
    assert!(moment_estimate(&zero, &ZeroGenerator, start(0.0).view(), &cfg, &basis(), 1.5, &SolverOptions::default()).is_err());
}

#[test]
fn sup_moment_of_martingale_matches_direct_simulation() {
    let cfg = sim(20, 4000, 29);
    let phi = terminal_component(0);
    let m = moment_estimate(&phi, &ZeroGenerator, start(0.0).view(), &cfg, &basis(), 2.0, &SolverOptions::default()).unwrap();
    // independent batch: sup over grid nodes of B²
    let other = simulate(&SimulationConfig { seed: 30, ..cfg }).unwrap();
    let direct: Vec<f64> = (0..other.n_paths())
        .map(|i| {
            let mut b: f64 = 0.0;
            let mut s: f64 = 0.0;
            for k in 0..other.steps() {
                b += other.increment(i, k)[0];
                s = s.max(b * b);
            }
            s
        })
        .collect();
    let se = (m.sup_y_se.powi(2) + standard_error(&direct).powi(2)).sqrt();
    assert!((m.sup_y - mean(&direct)).abs() <= 3.0 * se + 0.03 * mean(&direct), "{} vs {}", m.sup_y, mean(&direct));
    // ∫ Z² ds = 1 for Z ≡ 1
    assert!((m.z_energy - 1.0).abs() < 0.05);
}

#[test]
fn moment_growth_is_polynomial_in_path_scale() {
    let cfg = sim(10, 1000, 4);
    let phi = terminal_square();
    let lambdas = [1.0, 2.0, 4.0, 8.0];
    let est: Vec<f64> = lambdas
        .iter()
        .map(|l| {
            let p = CadlagPath::constant(&[*l], 0.0).unwrap();
            moment_estimate(&phi, &ZeroGenerator, p.view(), &cfg, &basis(), 2.0, &SolverOptions::default())
                .unwrap()
                .sup_y
        })
        .collect();
    let slope = log_log_slope(&lambdas, &est);
    assert!(slope.is_finite() && slope <= 2.0 * 2.0 + 2.0, "{slope}");
}

#[test]
fn stability_modulus_trends() {
    let cfg = sim(16, 1000, 8);
    let base = start(0.3);
    let phi = terminal_square();
    let opts = SolverOptions::default();

    let same = stability_modulus(&phi, &ZeroGenerator, &[(base.clone(), base.clone())], &cfg, &basis(), 2.0, &opts).unwrap();
    assert_eq!(same[0].moment, 0.0);
    assert_eq!(same[0].ratio, 0.0);

    let bumps = [0.4, 0.2, 0.1, 0.05];
    let pairs: Vec<_> = bumps.iter().map(|x| (base.clone(), vertical_bump(base.view(), &[*x]).unwrap())).collect();
    let rows = stability_modulus(&phi, &ZeroGenerator, &pairs, &cfg, &basis(), 2.0, &opts).unwrap();
    let moments: Vec<f64> = rows.iter().map(|r| r.moment).collect();
    let order = log_log_slope(&bumps, &moments);
    assert!(order >= 2.0 * 0.7, "{order}");

    // horizon pairs: the later path is the flat extension of the earlier one
    let later: Vec<_> = [8usize, 4, 2, 1]
        .iter()
        .map(|k| (base.clone(), crate::path::horizontal_extension(base.view(), cfg.grid.node(*k)).unwrap()))
        .collect();
    let rows = stability_modulus(&phi, &ZeroGenerator, &later, &cfg, &basis(), 2.0, &opts).unwrap();
    let gaps: Vec<f64> = rows.iter().map(|r| r.horizon_gap).collect();
    let moments: Vec<f64> = rows.iter().map(|r| r.moment).collect();
    assert!(moments.windows(2).all(|w| w[1] < w[0]), "{moments:?}");
    assert!(log_log_slope(&gaps, &moments) > 0.5);
    assert!(rows.iter().all(|r| r.ratio.is_finite()));
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let cfg = sim(10, 500, 99);
    let f = LinearGenerator::constant(0.2);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| solve_regression(&terminal_square(), &f, start(0.1).view(), &cfg, &basis(), &SolverOptions::default()).unwrap())
    };
    let a = run(1);
    let b = run(4);
    assert_eq!(a.y_root.to_bits(), b.y_root.to_bits());
    assert_eq!(a.pathwise(), b.pathwise());
}

#[test]
fn step_summary_csv_layout() {
    let cfg = sim(3, 20, 1);
    let sol = solve_regression(&terminal_square(), &ZeroGenerator, start(0.0).view(), &cfg, &basis(), &SolverOptions::default()).unwrap();
    let mut buf = Vec::new();
    sol.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "step,time,y_mean,y_se,z_mean_0");
    assert_eq!(lines.len(), 5);
    assert!(lines[4].ends_with(','));
}
