//! The path-dependent PDE `D_t u + ½ tr D_xx u + f(γ_t, u, D_x u) = 0`, `u = Φ` at `T`,
//! and its Monte-Carlo solution `u(γ_t) = Y_{γ_t}(t)`.
//!
//! Every evaluation of `u` at a path with horizon `t` solves the BSDE on
//! `TimeGrid(t, T, N)` with the same `N`, path count and seed. Bumped and
//! extended paths therefore reuse the same normal variates (only their scale
//! changes with `T - t`), so finite differences of `u` are taken with common
//! random numbers.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use serde::Serialize;

use crate::brownian::{simulate, SimulationConfig};
use crate::bsde::{solve_regression_on, BsdeSolution, Generator, SolverOptions};
use crate::calculus::{
    default_horizontal_step, default_vertical_step, vertical_derivative, DerivativeBundle, Functional,
};
use crate::error::{Error, Result};
use crate::path::{freeze, horizontal_extension, times_match, vertical_bump, PathView, TimeGrid};
use crate::regression::RegressionBasis;
use crate::stats::{mean, standard_error};

/// Terminal functional, driver and horizon of a PPDE.
#[derive(Clone)]
pub struct PpdeProblem {
    pub terminal: Arc<dyn Functional>,
    pub generator: Arc<dyn Generator>,
    pub horizon: f64,
    pub dim: usize,
}

impl fmt::Debug for PpdeProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PpdeProblem")
            .field("terminal", &self.terminal.name())
            .field("generator", &self.generator.name())
            .field("horizon", &self.horizon)
            .field("dim", &self.dim)
            .finish()
    }
}

impl PpdeProblem {
    pub fn new(terminal: Arc<dyn Functional>, generator: Arc<dyn Generator>, horizon: f64, dim: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidConfig(format!("horizon must be positive, got {horizon}")));
        }
        if dim == 0 {
            return Err(Error::InvalidConfig("dimension must be positive".into()));
        }
        Ok(Self {
            terminal,
            generator,
            horizon,
            dim,
        })
    }

    fn check_path(&self, path: PathView<'_>) -> Result<()> {
        if path.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: path.dim(),
            });
        }
        let t = path.horizon();
        if t > self.horizon && !times_match(t, self.horizon) {
            return Err(Error::domain(format!("path horizon {t} exceeds T={}", self.horizon)));
        }
        Ok(())
    }

    /// `sim` re-anchored on `[t, T]` with its step count.
    pub fn grid_from(&self, sim: &SimulationConfig, t: f64) -> Result<SimulationConfig> {
        Ok(sim.with_grid(TimeGrid::new(t, self.horizon, sim.grid.steps())?))
    }
}

/// Full BSDE solution behind `u(γ_t)`, or `None` at `t = T`.
pub fn u_solution(
    problem: &PpdeProblem,
    path: PathView<'_>,
    sim: &SimulationConfig,
    basis: &RegressionBasis,
    opts: &SolverOptions,
) -> Result<Option<BsdeSolution>> {
    problem.check_path(path)?;
    let t = path.horizon();
    if times_match(t, problem.horizon) {
        return Ok(None);
    }
    let cfg = problem.grid_from(sim, t)?;
    let batch = simulate(&cfg)?;
    solve_regression_on(&*problem.terminal, &*problem.generator, path, &batch, basis, opts).map(Some)
}

/// `(u(γ_t), standard error)`; exactly `(Φ(γ_T), 0)` at the horizon.
pub fn u_eval(
    problem: &PpdeProblem,
    path: PathView<'_>,
    sim: &SimulationConfig,
    basis: &RegressionBasis,
    opts: &SolverOptions,
) -> Result<(f64, f64)> {
    match u_solution(problem, path, sim, basis, opts)? {
        Some(sol) => Ok((sol.y_root, sol.y_root_se)),
        None => Ok((problem.terminal.evaluate(path)?, 0.0)),
    }
}

/// `u` as a [`Functional`] backed by a fixed-seed Monte-Carlo solve.
#[derive(Debug, Clone)]
pub struct MonteCarloFunctional {
    pub problem: PpdeProblem,
    pub sim: SimulationConfig,
    pub basis: RegressionBasis,
    pub opts: SolverOptions,
}

impl MonteCarloFunctional {
    pub fn new(problem: PpdeProblem, sim: SimulationConfig, basis: RegressionBasis) -> Self {
        Self {
            problem,
            sim,
            basis,
            opts: SolverOptions::default(),
        }
    }

    pub fn value_and_se(&self, path: PathView<'_>) -> Result<(f64, f64)> {
        u_eval(&self.problem, path, &self.sim, &self.basis, &self.opts)
    }

    /// Per-path estimators (paired across paths with equal step counts and seeds).
    pub fn pathwise(&self, path: PathView<'_>) -> Result<Vec<f64>> {
        match u_solution(&self.problem, path, &self.sim, &self.basis, &self.opts)? {
            Some(sol) => Ok(sol.pathwise().to_vec()),
            None => Ok(vec![self.problem.terminal.evaluate(path)?; self.sim.n_paths]),
        }
    }
}

impl Functional for MonteCarloFunctional {
    fn name(&self) -> &str {
        "monte_carlo_u"
    }

    fn evaluate(&self, path: PathView<'_>) -> Result<f64> {
        self.value_and_se(path).map(|v| v.0)
    }

    fn growth_order(&self) -> f64 {
        self.problem.terminal.growth_order()
    }
}

/// `D_t u + ½ tr D_xx u + f(γ_t, u, D_x u)` from a derivative bundle at `γ_t`.
pub fn ppde_residual(
    bundle: &dyn Fn(PathView<'_>) -> Result<DerivativeBundle>,
    problem: &PpdeProblem,
    path: PathView<'_>,
) -> Result<f64> {
    problem.check_path(path)?;
    let b = bundle(path)?;
    Ok(b.horizontal + 0.5 * b.hessian_trace() + problem.generator.evaluate(path, b.value, &b.vertical))
}

/// Residual of the Monte-Carlo `u` with its error budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualReport {
    pub t: f64,
    pub residual: f64,
    /// `mc_se + fd_sensitivity + grid_sensitivity`.
    pub error_band: f64,
    pub mc_se: f64,
    /// `|r(h, δ) - r(h/2, δ/2)|`.
    pub fd_sensitivity: f64,
    /// `|r(N) - r(2N)|`.
    pub grid_sensitivity: f64,
}

impl ResidualReport {
    pub fn within(&self, factor: f64) -> bool {
        self.residual.abs() <= factor * self.error_band
    }
}

struct ResidualSample {
    residual: f64,
    se: f64,
}

fn residual_sample(u: &MonteCarloFunctional, path: PathView<'_>, h: f64, delta: f64) -> Result<ResidualSample> {
    let d = path.dim();
    let t = path.horizon();
    let horizon = u.problem.horizon;
    if t + delta > horizon && !times_match(t + delta, horizon) {
        return Err(Error::domain(format!("horizontal step {delta} from t={t} passes T={horizon}")));
    }
    let centre = u.pathwise(path)?;
    let ext = horizontal_extension(path, t + delta)?;
    let forward = u.pathwise(ext.view())?;
    let n = centre.len();
    let mut lin: Vec<f64> = (0..n).map(|i| (forward[i] - centre[i]) / delta).collect();
    let mut grads = vec![vec![0.0; n]; d];
    for c in 0..d {
        let mut e = vec![0.0; d];
        e[c] = h;
        let up = u.pathwise(vertical_bump(path, &e)?.view())?;
        e[c] = -h;
        let down = u.pathwise(vertical_bump(path, &e)?.view())?;
        for i in 0..n {
            lin[i] += 0.5 * (up[i] - 2.0 * centre[i] + down[i]) / (h * h);
            grads[c][i] = (up[i] - down[i]) / (2.0 * h);
        }
    }
    let value = mean(&centre);
    let grad: Vec<f64> = grads.iter().map(|g| mean(g)).collect();
    let f = &u.problem.generator;
    let residual = mean(&lin) + f.evaluate(path, value, &grad);
    let se = standard_error(&lin)
        + f.lipschitz_y() * standard_error(&centre)
        + f.lipschitz_z() * grads.iter().map(|g| standard_error(g).powi(2)).sum::<f64>().sqrt();
    Ok(ResidualSample { residual, se })
}

/// PPDE residual of the Monte-Carlo `u` by finite differences at `γ_t`.
///
/// Mixed second differences are not formed, so only the diagonal of `D_xx u`
/// enters (that is all the trace needs). `h` and `delta` default to
/// [`default_vertical_step`] and [`default_horizontal_step`].
pub fn numeric_residual(
    u: &MonteCarloFunctional,
    path: PathView<'_>,
    h: Option<f64>,
    delta: Option<f64>,
) -> Result<ResidualReport> {
    u.problem.check_path(path)?;
    let h = h.unwrap_or_else(|| default_vertical_step(path));
    let delta = delta.unwrap_or_else(|| default_horizontal_step(path, u.problem.horizon));
    let base = residual_sample(u, path, h, delta)?;
    let half = residual_sample(u, path, 0.5 * h, 0.5 * delta)?;
    let mut fine = u.clone();
    fine.sim = fine.sim.with_grid(TimeGrid::new(fine.sim.grid.t0(), fine.sim.grid.end(), 2 * fine.sim.grid.steps())?);
    let refined = residual_sample(&fine, path, h, delta)?;
    let fd_sensitivity = (base.residual - half.residual).abs();
    let grid_sensitivity = (base.residual - refined.residual).abs();
    Ok(ResidualReport {
        t: path.horizon(),
        residual: base.residual,
        error_band: base.se + fd_sensitivity + grid_sensitivity,
        mc_se: base.se,
        fd_sensitivity,
        grid_sensitivity,
    })
}

/// CSV `t,residual,error_band`.
pub fn write_residual_csv<W: Write>(writer: W, rows: &[ResidualReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t", "residual", "error_band"])?;
    for r in rows {
        w.write_record(&[format!("{:e}", r.t), format!("{:e}", r.residual), format!("{:e}", r.error_band)])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-time comparison of regression `Z` against `D_x u` of the nested estimate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZRow {
    pub step: usize,
    pub s: f64,
    pub z_regression: f64,
    pub dx_numeric: f64,
    pub relative_error: f64,
    /// Combined standard error of the two sample means.
    pub se: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZReport {
    pub rows: Vec<ZRow>,
    /// Set when the nested budget ran out before every requested time was done.
    pub partial: bool,
    pub inner_paths: usize,
    pub inner_paths_used: usize,
}

/// Settings for [`z_consistency`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NestedConfig {
    /// Outer paths per time at which `D_x u` is re-estimated.
    pub samples: usize,
    /// Inner batch size; `None` means `√(outer batch)`.
    pub inner_paths: Option<usize>,
    /// Cap on total inner paths simulated; `None` means unlimited.
    pub budget: Option<usize>,
    pub h: f64,
}

impl Default for NestedConfig {
    fn default() -> Self {
        Self {
            samples: 8,
            inner_paths: None,
            budget: None,
            h: 0.1,
        }
    }
}

/// Compares the solver's `Z` at grid steps `steps` with `D_x u` of a nested
/// Monte-Carlo `u` at the realized prefixes (component 0).
pub fn z_consistency(
    problem: &PpdeProblem,
    path: PathView<'_>,
    sim: &SimulationConfig,
    basis: &RegressionBasis,
    opts: &SolverOptions,
    steps: &[usize],
    nested: &NestedConfig,
) -> Result<ZReport> {
    problem.check_path(path)?;
    if times_match(path.horizon(), problem.horizon) {
        return Err(Error::domain("Z is undefined at the horizon"));
    }
    let batch = simulate(&problem.grid_from(sim, path.horizon())?)?;
    let outer = solve_regression_on(&*problem.terminal, &*problem.generator, path, &batch, basis, opts)?;
    let grid = *outer.grid();
    let spliced = crate::brownian::cumulate(&batch, path)?;
    let inner_n = nested
        .inner_paths
        .unwrap_or_else(|| (sim.n_paths as f64).sqrt().ceil() as usize)
        .max(2);
    let samples = nested.samples.min(outer.n_paths()).max(1);
    let mut rows = Vec::new();
    let mut used = 0usize;
    let mut partial = false;
    for &k in steps {
        if k == 0 || k >= grid.steps() {
            return Err(Error::domain(format!("step {k} is not an interior grid step")));
        }
        let cost = samples * 2 * inner_n;
        if nested.budget.is_some_and(|b| used + cost > b) {
            partial = true;
            break;
        }
        used += cost;
        let s = grid.node(k);
        let inner = MonteCarloFunctional {
            problem: problem.clone(),
            sim: SimulationConfig {
                n_paths: inner_n,
                seed: sim.seed.wrapping_add(1 + k as u64),
                antithetic: false,
                ..sim.with_grid(TimeGrid::new(s, problem.horizon, grid.steps() - k)?)
            },
            basis: basis.clone(),
            opts: *opts,
        };
        let mut zs = Vec::with_capacity(samples);
        let mut dxs = Vec::with_capacity(samples);
        for (i, full) in spliced.iter().take(samples).enumerate() {
            let prefix = full.view().prefix(path.len() + k);
            zs.push(outer.z(i, k)[0]);
            dxs.push(vertical_derivative(&inner, prefix, nested.h)?[0]);
        }
        let z = mean(&zs);
        let dx = mean(&dxs);
        rows.push(ZRow {
            step: k,
            s,
            z_regression: z,
            dx_numeric: dx,
            relative_error: (z - dx).abs() / dx.abs().max(f64::MIN_POSITIVE),
            se: (standard_error(&zs).powi(2) + standard_error(&dxs).powi(2)).sqrt(),
            samples,
        });
    }
    Ok(ZReport {
        rows,
        partial,
        inner_paths: inner_n,
        inner_paths_used: used,
    })
}

/// `Φ ∘ freeze`: the inner functional evaluated at the frozen path.
#[derive(Clone)]
pub struct FrozenFunctional {
    inner: Arc<dyn Functional>,
    anchor: f64,
    horizon: f64,
    n: usize,
    name: String,
}

impl FrozenFunctional {
    pub fn new(inner: Arc<dyn Functional>, anchor: f64, horizon: f64, n: usize) -> Self {
        let name = format!("{}@freeze{n}", inner.name());
        Self {
            inner,
            anchor,
            horizon,
            n,
            name,
        }
    }
}

impl Functional for FrozenFunctional {
    fn name(&self) -> &str {
        &self.name
    }

    fn evaluate(&self, path: PathView<'_>) -> Result<f64> {
        let frozen = freeze(path, self.anchor, self.horizon, self.n)?;
        self.inner.evaluate(frozen.view())
    }

    fn growth_order(&self) -> f64 {
        self.inner.growth_order()
    }
}

/// `f ∘ freeze` on every prefix.
#[derive(Clone)]
pub struct FrozenGenerator {
    inner: Arc<dyn Generator>,
    anchor: f64,
    horizon: f64,
    n: usize,
}

impl FrozenGenerator {
    pub fn new(inner: Arc<dyn Generator>, anchor: f64, horizon: f64, n: usize) -> Self {
        Self {
            inner,
            anchor,
            horizon,
            n,
        }
    }
}

impl Generator for FrozenGenerator {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn evaluate(&self, path: PathView<'_>, y: f64, z: &[f64]) -> f64 {
        match freeze(path, self.anchor, self.horizon, self.n) {
            Ok(p) => self.inner.evaluate(p.view(), y, z),
            Err(_) => f64::NAN,
        }
    }

    fn lipschitz_y(&self) -> f64 {
        self.inner.lipschitz_y()
    }

    fn lipschitz_z(&self) -> f64 {
        self.inner.lipschitz_z()
    }

    fn growth_order(&self) -> f64 {
        self.inner.growth_order()
    }
}

/// `u^{(n)}(γ_t)`: the problem with terminal and driver composed with the
/// `n`-cell freeze anchored at `t`.
pub fn frozen_u(
    problem: &PpdeProblem,
    path: PathView<'_>,
    n: usize,
    sim: &SimulationConfig,
    basis: &RegressionBasis,
    opts: &SolverOptions,
) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::domain("freezing level n must be positive"));
    }
    let t = path.horizon();
    let frozen = PpdeProblem {
        terminal: Arc::new(FrozenFunctional::new(Arc::clone(&problem.terminal), t, problem.horizon, n)),
        generator: Arc::new(FrozenGenerator::new(Arc::clone(&problem.generator), t, problem.horizon, n)),
        ..problem.clone()
    };
    u_eval(&frozen, path, sim, basis, opts)
}
