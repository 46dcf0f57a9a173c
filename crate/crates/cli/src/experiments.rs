//! The named experiments.
//!
//! Each experiment turns a validated config into a [`Report`]. Nothing here
//! touches the filesystem except reading a configured prefix path; artifacts
//! are returned as bytes and written by the caller.

use std::fs::File;
use std::sync::Arc;

use pathfk::bsde::{comparison_check_on, solve_picard_on, solve_regression_on, FnGenerator};
use pathfk::calculus::functionals::{integral_plus_square, FnFunctional};
use pathfk::calculus::{ito_residual, QuadraticVariation};
use pathfk::cascade::{boundary_check, cascade_solve};
use pathfk::fixtures::{Fixture, FixtureKind};
use pathfk::ppde::{frozen_u, numeric_residual, ppde_residual, u_eval, write_residual_csv, MonteCarloFunctional};
use pathfk::regression::PathFeature;
use pathfk::stats::{log_log_slope, mean, standard_error};
use pathfk::{
    cumulate, simulate, BsdeSolution, CadlagPath, Functional, Generator, PathBatch, PpdeProblem, RegressionBasis,
    SimulationConfig, SolverOptions, TimeGrid,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{ExperimentConfig, ExperimentKind, QvMode, Scheme};
use crate::error::CliError;
use crate::report::{Report, ResultRow, Verdict};

/// Substreams for auxiliary randomness, far away from the per-path streams.
const RANDOM_PATH_STREAM: u64 = u64::MAX - 1;
const COMPARE_STREAM: u64 = u64::MAX - 2;

pub fn run(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    match cfg.kind {
        ExperimentKind::Solve => solve(cfg),
        ExperimentKind::VerifyPpde => verify_ppde(cfg),
        ExperimentKind::VerifyZ => verify_z(cfg),
        ExperimentKind::VerifyIto => verify_ito(cfg),
        ExperimentKind::FreezeConverge => freeze_converge(cfg),
        ExperimentKind::Compare => compare(cfg),
        ExperimentKind::Cascade => cascade(cfg),
    }
}

/// The path the experiment starts from.
pub fn start_path(cfg: &ExperimentConfig) -> Result<CadlagPath, CliError> {
    let grid = &cfg.raw.grid;
    let path = match &grid.prefix_csv {
        Some(p) => {
            let p = cfg.resolve(p);
            let file = File::open(&p).map_err(|e| CliError::Config(format!("cannot open {}: {e}", p.display())))?;
            CadlagPath::read_csv(file).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => CadlagPath::constant(&[grid.start_value], grid.start_time)?,
    };
    if path.dim() != 1 {
        return Err(CliError::Config(format!("prefix path must be scalar, got dimension {}", path.dim())));
    }
    if path.horizon() >= grid.horizon {
        return Err(CliError::Config(format!(
            "prefix path ends at {}, not before T={}",
            path.horizon(),
            grid.horizon
        )));
    }
    Ok(path)
}

pub fn simulation_config(cfg: &ExperimentConfig) -> Result<SimulationConfig, CliError> {
    let r = &cfg.raw;
    let grid = TimeGrid::new(0.0, r.grid.horizon, r.grid.steps)?;
    Ok(SimulationConfig::new(grid, 1, r.simulation.n_paths, r.simulation.seed).with_antithetic(r.simulation.antithetic))
}

fn solver_options(cfg: &ExperimentConfig) -> SolverOptions {
    SolverOptions {
        implicit_correction: cfg.raw.solver.implicit_correction,
        ..SolverOptions::default()
    }
}

fn basis(cfg: &ExperimentConfig) -> RegressionBasis {
    RegressionBasis::with_degree(1, cfg.raw.basis.degree)
}

/// Increments on `[t, T]` for a path ending at `t`.
pub fn batch_for(cfg: &ExperimentConfig, path: &CadlagPath) -> Result<PathBatch, CliError> {
    let sim = simulation_config(cfg)?;
    let grid = TimeGrid::new(path.horizon(), cfg.raw.grid.horizon, cfg.raw.grid.steps)?;
    Ok(simulate(&sim.with_grid(grid))?)
}

struct Setup {
    fixture: Fixture,
    horizon: f64,
    problem: PpdeProblem,
    path: CadlagPath,
    sim: SimulationConfig,
    basis: RegressionBasis,
    opts: SolverOptions,
}

impl Setup {
    fn new(cfg: &ExperimentConfig) -> Result<Self, CliError> {
        let horizon = cfg.raw.grid.horizon;
        Ok(Self {
            fixture: cfg.fixture.clone(),
            horizon,
            problem: cfg.fixture.problem(horizon)?,
            path: start_path(cfg)?,
            sim: simulation_config(cfg)?,
            basis: basis(cfg),
            opts: solver_options(cfg),
        })
    }

    /// `D_x u` from the fixture's exact bundle at node `k` of every spliced path.
    fn exact_dx(&self, spliced: &[CadlagPath], k: usize) -> Result<Vec<f64>, CliError> {
        let len = self.path.len() + k;
        spliced
            .par_iter()
            .map(|p| self.fixture.bundle(p.view().prefix(len), self.horizon).map(|b| b.vertical[0]))
            .collect::<Result<Vec<_>, _>>()
            .map_err(CliError::from)
    }
}

fn solve_on(cfg: &ExperimentConfig, s: &Setup, batch: &PathBatch) -> Result<BsdeSolution, CliError> {
    let phi = &*s.problem.terminal;
    let f = &*s.problem.generator;
    let sol = match cfg.raw.solver.scheme {
        Scheme::Regression => solve_regression_on(phi, f, s.path.view(), batch, &s.basis, &s.opts)?,
        Scheme::Picard => solve_picard_on(
            phi,
            f,
            s.path.view(),
            batch,
            &s.basis,
            cfg.raw.solver.picard_iterations,
            cfg.raw.solver.picard_tolerance,
            &s.opts,
        )?,
    };
    Ok(sol)
}

fn solver_diagnostics(report: &mut Report, sol: &BsdeSolution) {
    let d = &sol.diagnostics;
    report.diag("solver", "scheme", &d.scheme);
    report.diag("solver", "iterations", d.iterations);
    for (k, (c, dropped)) in d.condition_numbers.iter().zip(&d.dropped_features).enumerate() {
        report.diag(format!("step_{k}"), "condition_number", c);
        report.diag(format!("step_{k}"), "dropped_features", dropped);
    }
    for (m, g) in d.picard_gaps.iter().enumerate() {
        report.diag(format!("picard_{m}"), "gap", g);
    }
}

fn csv_bytes(write: impl FnOnce(&mut Vec<u8>) -> pathfk::Result<()>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

/// `y_root` against the closed form, and the mean `Z` per step against the
/// mean exact `D_x u` along the same paths.
fn solve(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let s = Setup::new(cfg)?;
    let tol = &cfg.raw.tolerance;
    let t = s.path.horizon();
    let batch = batch_for(cfg, &s.path)?;
    let sol = solve_on(cfg, &s, &batch)?;
    let mut report = Report::default();

    let reference = s.fixture.closed_form(s.path.view(), s.horizon)?;
    let allowed = (tol.se_factor * sol.y_root_se).max(tol.relative * reference.abs());
    report
        .rows
        .push(ResultRow::within("y_root", t, sol.y_root, reference, Some(sol.y_root_se), allowed));

    let spliced = cumulate(&batch, s.path.view())?;
    let grid = *sol.grid();
    for k in 0..grid.steps() {
        let z = sol.z_at_step(k, 0);
        let dx = s.exact_dx(&spliced, k)?;
        report.rows.push(ResultRow::within(
            "z_mean",
            grid.node(k),
            mean(&z),
            mean(&dx),
            Some(standard_error(&z)),
            tol.z_absolute,
        ));
    }
    solver_diagnostics(&mut report, &sol);
    report.artifacts.push(("solution.csv".into(), csv_bytes(|b| sol.write_csv(b))?));
    Ok(report)
}

/// Random step paths on `[0, t]` with `t` in `[0.05 T, 0.9 T)`.
pub fn random_paths(seed: u64, count: usize, horizon: f64) -> Result<Vec<CadlagPath>, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(RANDOM_PATH_STREAM);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let end = horizon * rng.random_range(0.05..0.9);
        let jumps = rng.random_range(0..5usize);
        let mut times: Vec<f64> = (0..jumps).map(|_| rng.random_range(0.0..end)).collect();
        times.sort_by(f64::total_cmp);
        times.insert(0, 0.0);
        times.push(end);
        times.dedup_by(|later, earlier| *later - *earlier < 1e-9);
        let values: Vec<f64> = times.iter().map(|_| rng.random_range(-1.5..1.5)).collect();
        out.push(CadlagPath::scalar(times, values)?);
    }
    Ok(out)
}

/// PPDE residual of the exact bundle on random paths, then of the
/// Monte-Carlo `u` on the first few of them.
fn verify_ppde(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let s = Setup::new(cfg)?;
    let pc = &cfg.raw.ppde;
    let paths = random_paths(cfg.seed(), pc.random_paths.max(pc.numeric_paths), s.horizon)?;
    let mut report = Report::default();
    for p in paths.iter().take(pc.random_paths) {
        let r = ppde_residual(&|q| s.fixture.bundle(q, s.horizon), &s.problem, p.view())?;
        report
            .rows
            .push(ResultRow::within("analytic_residual", p.horizon(), r, 0.0, None, pc.analytic_tolerance));
    }
    let mut u = MonteCarloFunctional::new(s.problem.clone(), s.sim, s.basis.clone());
    u.opts = s.opts;
    let mut numeric = Vec::new();
    for (i, p) in paths.iter().take(pc.numeric_paths).enumerate() {
        let rep = numeric_residual(&u, p.view(), cfg.raw.fd.h, cfg.raw.fd.delta)?;
        report.rows.push(ResultRow::within(
            "numeric_residual",
            rep.t,
            rep.residual,
            0.0,
            Some(rep.mc_se),
            pc.band_factor * rep.error_band,
        ));
        let label = format!("numeric_{i}");
        report.diag(&label, "mc_se", rep.mc_se);
        report.diag(&label, "fd_sensitivity", rep.fd_sensitivity);
        report.diag(&label, "grid_sensitivity", rep.grid_sensitivity);
        report.diag(&label, "error_band", rep.error_band);
        numeric.push(rep);
    }
    report
        .artifacts
        .push(("residuals.csv".into(), csv_bytes(|b| write_residual_csv(b, &numeric))?));
    Ok(report)
}

/// Mean regression `Z` against the mean exact `D_x u` at the configured times.
fn verify_z(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let s = Setup::new(cfg)?;
    let batch = batch_for(cfg, &s.path)?;
    let sol = solve_on(cfg, &s, &batch)?;
    let spliced = cumulate(&batch, s.path.view())?;
    let grid = *sol.grid();
    let rel = cfg.raw.z.relative_tolerance;
    let mut report = Report::default();
    for &time in &cfg.raw.z.times {
        let k = grid
            .index_of(time)
            .filter(|k| *k < grid.steps())
            .ok_or_else(|| CliError::Config(format!("z time {time} is not an interior node of the grid on [{}, {}]", grid.t0(), grid.end())))?;
        let z = sol.z_at_step(k, 0);
        let dx = s.exact_dx(&spliced, k)?;
        let (zm, dm) = (mean(&z), mean(&dx));
        report
            .rows
            .push(ResultRow::within("z_vs_dx", time, zm, dm, Some(standard_error(&z)), rel * dm.abs()));
        report.diag(format!("t={time}"), "relative_error", (zm - dm).abs() / dm.abs());
    }
    solver_diagnostics(&mut report, &sol);
    Ok(report)
}

fn value_functional(fx: &Fixture, horizon: f64) -> Arc<dyn Functional> {
    match fx.kind {
        FixtureKind::IntegralPlusSquare => Arc::new(integral_plus_square(horizon)),
        _ => {
            let fx = fx.clone();
            Arc::new(FnFunctional::new(format!("u[{}]", fx.id), 2.0, move |p| {
                fx.closed_form(p, horizon).unwrap_or(f64::NAN)
            }))
        }
    }
}

/// L² residual of the discrete functional Itô expansion across step sizes.
fn verify_ito(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let ic = &cfg.raw.ito;
    let horizon = cfg.raw.grid.horizon;
    let fx = &cfg.fixture;
    let path = start_path(cfg)?;
    let u = value_functional(fx, horizon);
    let qv = match ic.qv {
        QvMode::Calendar => QuadraticVariation::Calendar,
        QvMode::Pathwise => QuadraticVariation::Pathwise,
    };
    let mut report = Report::default();
    let (mut dts, mut l2s) = (Vec::new(), Vec::new());
    for &steps in &ic.steps {
        let grid = TimeGrid::new(path.horizon(), horizon, steps)?;
        let sim = SimulationConfig::new(grid, 1, ic.paths, cfg.seed());
        let batch = simulate(&sim)?;
        let spliced = cumulate(&batch, path.view())?;
        let squares = spliced
            .par_iter()
            .map(|p| ito_residual(&*u, &|q| fx.bundle(q, horizon), p.view(), &grid, qv).map(|r| r * r))
            .collect::<Result<Vec<f64>, _>>()?;
        let ms = mean(&squares);
        let l2 = ms.sqrt();
        let se = if l2 > 0.0 { standard_error(&squares) / (2.0 * l2) } else { 0.0 };
        report.rows.push(ResultRow {
            label: "ito_l2_residual".into(),
            t: grid.dt(),
            value: l2,
            reference: None,
            se: Some(se),
            tolerance: None,
            verdict: Verdict::from_bool(l2.is_finite()),
        });
        dts.push(grid.dt());
        l2s.push(l2);
    }
    let slope = log_log_slope(&dts, &l2s);
    report.rows.push(ResultRow {
        label: "ito_slope".into(),
        t: path.horizon(),
        value: slope,
        reference: Some(ic.min_slope),
        se: None,
        tolerance: None,
        verdict: Verdict::from_bool(slope >= ic.min_slope),
    });
    report.diag("ito", "quadratic_variation", format!("{:?}", ic.qv).to_lowercase());
    Ok(report)
}

/// `|u^(n) - u|` over the freezing levels: non-increasing up to the SE slack
/// and reduced by the configured factor from the first level to the last.
fn freeze_converge(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let s = Setup::new(cfg)?;
    let fc = &cfg.raw.freeze;
    let t = s.path.horizon();
    let reference = s.fixture.closed_form(s.path.view(), s.horizon)?;
    let mut report = Report::default();
    report.diag("reference", "u", reference);
    let mut errors = Vec::with_capacity(fc.levels.len());
    for &n in &fc.levels {
        let (v, se) = frozen_u(&s.problem, s.path.view(), n, &s.sim, &s.basis, &s.opts)?;
        let err = (v - reference).abs();
        let previous = errors.last().copied();
        report.rows.push(ResultRow {
            label: format!("freeze_error_n{n}"),
            t,
            value: err,
            reference: previous,
            se: Some(se),
            tolerance: Some(fc.se_slack * se),
            verdict: Verdict::from_bool(previous.is_none_or(|p| err <= p + fc.se_slack * se)),
        });
        report.diag(format!("n={n}"), "u_frozen", v);
        errors.push(err);
    }
    let (first, last) = (errors[0], *errors.last().expect("levels are non-empty"));
    report.rows.push(ResultRow {
        label: "freeze_reduction".into(),
        t,
        value: last,
        reference: Some(first),
        se: None,
        tolerance: Some(first / fc.reduction),
        verdict: Verdict::from_bool(last <= first / fc.reduction),
    });
    Ok(report)
}

/// One randomly drawn ordered pair around the fixture's data.
struct OrderedPair {
    phi1: FnFunctional,
    phi2: FnFunctional,
    f1: FnGenerator,
    f2: FnGenerator,
    description: String,
}

fn draw_pair(rng: &mut ChaCha8Rng, problem: &PpdeProblem, i: usize) -> OrderedPair {
    let a: f64 = rng.random_range(-1.0..1.0);
    let b: f64 = rng.random_range(-1.0..1.0);
    let c: f64 = rng.random_range(-0.5..0.5);
    let k: f64 = rng.random_range(-0.5..0.5);
    let g0: f64 = rng.random_range(-0.5..0.5);
    let phi_shape = rng.random_range(0..4u8);
    let f_shape = rng.random_range(0..4u8);
    let dphi: f64 = rng.random_range(0.0..0.3);
    let df: f64 = rng.random_range(0.0..0.3);

    let base_phi = Arc::clone(&problem.terminal);
    let phi1 = move |p: pathfk::PathView<'_>| {
        let x = p.terminal()[0];
        base_phi.evaluate(p).unwrap_or(f64::NAN) + a * x.sin() + b * x
    };
    let phi1 = Arc::new(phi1);
    let phi2 = {
        let phi1 = Arc::clone(&phi1);
        move |p: pathfk::PathView<'_>| {
            let x = p.terminal()[0];
            let bump = match phi_shape {
                0 => 0.0,
                1 => 1.0,
                2 => x * x,
                _ => x.abs(),
            };
            phi1(p) + dphi * bump
        }
    };
    let base_f = Arc::clone(&problem.generator);
    let (ly, lz) = (base_f.lipschitz_y() + c.abs(), base_f.lipschitz_z() + k.abs());
    let f1 = Arc::new(move |p: pathfk::PathView<'_>, y: f64, z: &[f64]| {
        base_f.evaluate(p, y, z) + c * y + k * z[0] + g0 * p.terminal()[0].cos()
    });
    let f2 = {
        let f1 = Arc::clone(&f1);
        move |p: pathfk::PathView<'_>, y: f64, z: &[f64]| {
            let bump = match f_shape {
                0 => 0.0,
                1 => 1.0,
                2 => z[0].abs(),
                _ => p.terminal()[0].cos().powi(2),
            };
            f1(p, y, z) + df * bump
        }
    };
    let phi1_fn = {
        let phi1 = Arc::clone(&phi1);
        move |p: pathfk::PathView<'_>| phi1(p)
    };
    let f1_fn = {
        let f1 = Arc::clone(&f1);
        move |p: pathfk::PathView<'_>, y: f64, z: &[f64]| f1(p, y, z)
    };
    OrderedPair {
        phi1: FnFunctional::new(format!("phi1_{i}"), 2.0, phi1_fn),
        phi2: FnFunctional::new(format!("phi2_{i}"), 2.0, phi2),
        f1: FnGenerator::new(format!("f1_{i}"), ly, lz, f1_fn),
        f2: FnGenerator::new(format!("f2_{i}"), ly, lz + df, f2),
        description: format!(
            "a={a} b={b} c={c} k={k} g0={g0} dphi={dphi} phi_shape={phi_shape} df={df} f_shape={f_shape}"
        ),
    }
}

/// Ordered pairs `Φ1 <= Φ2`, `f1 <= f2` solved on one batch; counts
/// `y1 > y2` beyond three paired standard errors.
fn compare(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let s = Setup::new(cfg)?;
    let batch = batch_for(cfg, &s.path)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed());
    rng.set_stream(COMPARE_STREAM);
    let mut report = Report::default();
    let t = s.path.horizon();
    let mut violations = 0usize;
    for i in 0..cfg.raw.compare.pairs {
        let pair = draw_pair(&mut rng, &s.problem, i);
        let rep = comparison_check_on(
            &pair.phi1,
            &pair.f1,
            &pair.phi2,
            &pair.f2,
            s.path.view(),
            &batch,
            &s.basis,
            &s.opts,
        )?;
        violations += usize::from(rep.violation);
        report.rows.push(ResultRow {
            label: format!("pair_{i}_gap"),
            t,
            value: rep.gap,
            reference: Some(0.0),
            se: Some(rep.se),
            tolerance: Some(3.0 * rep.se),
            verdict: Verdict::from_bool(!rep.violation),
        });
        report.diag(format!("pair_{i}"), "parameters", pair.description);
        report.diag(format!("pair_{i}"), "y1", rep.y1);
        report.diag(format!("pair_{i}"), "y2", rep.y2);
    }
    report.rows.push(ResultRow {
        label: "violations".into(),
        t,
        value: violations as f64,
        reference: Some(0.0),
        se: None,
        tolerance: Some(0.0),
        verdict: Verdict::from_bool(violations == 0),
    });
    Ok(report)
}

/// Two-stage finite-difference value against the closed form and against
/// the Monte-Carlo solve of the same problem.
fn cascade(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let s = Setup::new(cfg)?;
    let cc = &cfg.raw.cascade;
    let mut spec = s
        .fixture
        .cascade(s.horizon)
        .ok_or_else(|| CliError::Config(format!("fixture `{}` has no cascade form", s.fixture.id)))?;
    spec.nodes = cc.nodes;
    spec.dt = s.horizon / cc.time_steps as f64;
    let t = s.path.horizon();
    let sol = cascade_solve(&spec, s.path.view())?;
    let closed = s.fixture.closed_form(s.path.view(), s.horizon)?;
    let mut report = Report::default();
    report.rows.push(ResultRow::within(
        "cascade_vs_closed_form",
        t,
        sol.u,
        closed,
        None,
        cc.closed_form_tolerance * closed.abs(),
    ));

    // The split value is invisible to the default features once t < t̄.
    let split = spec.split;
    let mut features: Vec<PathFeature> = s.basis.features().to_vec();
    features.push(PathFeature::custom("value_at_split", move |p| {
        p.value_at(split.min(p.horizon())).map(|v| v[0]).unwrap_or(f64::NAN)
    }));
    let mc_basis = RegressionBasis::new(features, s.basis.degree())?;
    let (mc, se) = u_eval(&spec.to_problem()?, s.path.view(), &s.sim, &mc_basis, &s.opts)?;
    report.rows.push(ResultRow::within(
        "cascade_vs_mc",
        t,
        sol.u,
        mc,
        Some(se),
        (cc.mc_relative_tolerance * mc.abs()).max(3.0 * se),
    ));
    report.diag("cascade", "boundary_sensitivity", boundary_check(&spec, s.path.view())?);
    report.diag("cascade", "x_nodes", sol.x_nodes.len());
    report.diag("cascade", "y_nodes", sol.y_nodes.len());
    report.artifacts.push(("cascade_v1.csv".into(), csv_bytes(|b| sol.write_v1_csv(b))?));
    report.artifacts.push(("cascade_v2.csv".into(), csv_bytes(|b| sol.write_v2_csv(b))?));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(body: &str) -> ExperimentConfig {
        ExperimentConfig::parse(body, ".").unwrap()
    }

    #[test]
    fn random_paths_are_valid_and_seeded() {
        let a = random_paths(3, 50, 1.0).unwrap();
        let b = random_paths(3, 50, 1.0).unwrap();
        assert_eq!(a, b);
        for p in &a {
            assert!(p.horizon() >= 0.05 - 1e-9 && p.horizon() < 0.9);
            assert!(p.view().times().windows(2).all(|w| w[1] > w[0]));
        }
        assert_ne!(a, random_paths(4, 50, 1.0).unwrap());
    }

    #[test]
    fn small_solve_passes() {
        let cfg = config(
            "[experiment]\nkind = \"solve\"\nfixture = \"martingale-terminal\"\n\
             [grid]\nsteps = 10\nstart_value = 0.3\n[simulation]\nn_paths = 2000\n",
        );
        let report = run(&cfg).unwrap();
        assert_eq!(report.rows.len(), 11);
        assert!(report.passed(), "{:?}", report.rows);
    }

    #[test]
    fn prefix_must_end_before_horizon() {
        let cfg = config("[experiment]\nkind = \"solve\"\nfixture = \"martingale-terminal\"\n[grid]\nstart_time = 0.5\nhorizon = 1.0\n");
        assert!(start_path(&cfg).is_ok());
        let mut bad = cfg.clone();
        bad.raw.grid.start_time = 1.0;
        assert!(matches!(start_path(&bad), Err(CliError::Config(_))));
    }

    #[test]
    fn z_times_must_be_nodes() {
        let cfg = config(
            "[experiment]\nkind = \"verify-z\"\nfixture = \"martingale-terminal\"\n\
             [grid]\nsteps = 10\n[simulation]\nn_paths = 200\n[z]\ntimes = [0.15]\n",
        );
        assert!(matches!(run(&cfg), Err(CliError::Config(_))));
    }

    #[test]
    fn fixture_without_problem_is_a_config_error() {
        let cfg = config("[experiment]\nkind = \"solve\"\nfixture = \"integral-plus-square\"\n");
        assert!(matches!(run(&cfg), Err(CliError::Config(_))));
        let cfg = config("[experiment]\nkind = \"cascade\"\nfixture = \"heat-quadratic\"\n[simulation]\nn_paths = 100\n");
        assert!(matches!(run(&cfg), Err(CliError::Config(_))));
    }

    #[test]
    fn drawn_pairs_are_ordered() {
        let cfg = config("[experiment]\nkind = \"compare\"\nfixture = \"linear-c0.1-sq\"\n");
        let problem = cfg.fixture.problem(1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let paths = random_paths(9, 20, 1.0).unwrap();
        for i in 0..30 {
            let pair = draw_pair(&mut rng, &problem, i);
            for p in &paths {
                let (a, b) = (pair.phi1.evaluate(p.view()).unwrap(), pair.phi2.evaluate(p.view()).unwrap());
                assert!(a <= b, "{}", pair.description);
                for (y, z) in [(0.0, 0.0), (1.5, -2.0), (-3.0, 0.7)] {
                    assert!(pair.f1.evaluate(p.view(), y, &[z]) <= pair.f2.evaluate(p.view(), y, &[z]));
                }
            }
        }
    }
}
