//! Backward solvers for BSDEs driven by a spliced path.
//!
//! For a prefix `γ_t` the forward process is `B^{γ_t}`: the prefix followed by
//! `γ(t) + B(s) - B(t)`. On a uniform grid `t = s_0 < ... < s_N = T` the
//! pair `(Y, Z)` solves
//!
//! ```text
//! Y(s) = Φ(B^{γ_t}) + ∫_s^T f(B^{γ_t}_r, Y(r), Z(r)) dr - ∫_s^T Z(r) dB(r)
//! ```
//!
//! Two independent schemes are provided. [`solve_regression`] runs the
//! explicit backward Euler recursion
//!
//! ```text
//! Y_k = E_k[Y_{k+1}] + dt f(prefix_k, E_k[Y_{k+1}], Z_k)
//! Z_k = E_k[(Y_{k+1} - E_k[Y_{k+1}]) ΔB_k] / m_k
//! ```
//!
//! with `E_k` the least-squares projection on path features of the prefix up
//! to `s_k`. Subtracting `E_k[Y_{k+1}]` inside the `Z` projection does not
//! change its expectation and removes most of its variance. The normalizer
//! `m_k` is the sample mean of `ΔB_k²` rather than `dt`: both have the same
//! limit, but the sample moment cancels the chi-square noise of the batch, so
//! a constant `Z` is recovered exactly in the mean.
//!
//! By default ([`RegressionTarget::Pathwise`]) the realization of `Y_{k+1}`
//! fed to `E_k` is `Φ + Σ_{j>k} f_j dt - Σ_{j>k} Z_j ΔB_j` along each path,
//! which equals `Y_{k+1}` when the later `Z_j` are exact. Regressing this
//! instead of the previous fitted values keeps in-sample fitting errors from
//! compounding step after step. [`RegressionTarget::NextValue`] gives the
//! plain one-step recursion. [`solve_picard`] iterates the integral form
//! over whole paths instead.
//!
//! All paths share the prefix at `s_0`, so the step-0 projection is the
//! sample mean. Reductions run in path-index order, which makes every result
//! independent of the rayon thread count.

pub mod generators;

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::brownian::{cumulate, simulate, PathBatch, SimulationConfig};
use crate::calculus::Functional;
use crate::error::{Error, Result};
use crate::path::{d_infinity, CadlagPath, PathView, TimeGrid};
use crate::regression::{Projection, RegressionBasis};
use crate::stats::{mean, standard_error};

pub use generators::{FnGenerator, LinearGenerator, Polynomial, ZeroGenerator};

/// The driver `f(γ_s, y, z)` of the BSDE (scalar `y`, `z ∈ R^d`).
///
/// The current time `s` is the horizon of the path prefix.
pub trait Generator: Send + Sync {
    fn name(&self) -> &str;

    fn evaluate(&self, path: PathView<'_>, y: f64, z: &[f64]) -> f64;

    fn lipschitz_y(&self) -> f64;

    fn lipschitz_z(&self) -> f64;

    fn growth_order(&self) -> f64 {
        0.0
    }
}

impl<G: Generator + ?Sized> Generator for &G {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn evaluate(&self, path: PathView<'_>, y: f64, z: &[f64]) -> f64 {
        (**self).evaluate(path, y, z)
    }
    fn lipschitz_y(&self) -> f64 {
        (**self).lipschitz_y()
    }
    fn lipschitz_z(&self) -> f64 {
        (**self).lipschitz_z()
    }
    fn growth_order(&self) -> f64 {
        (**self).growth_order()
    }
}

impl<G: Generator + ?Sized> Generator for std::sync::Arc<G> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn evaluate(&self, path: PathView<'_>, y: f64, z: &[f64]) -> f64 {
        (**self).evaluate(path, y, z)
    }
    fn lipschitz_y(&self) -> f64 {
        (**self).lipschitz_y()
    }
    fn lipschitz_z(&self) -> f64 {
        (**self).lipschitz_z()
    }
    fn growth_order(&self) -> f64 {
        (**self).growth_order()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Ridge as a fraction of the Gram-matrix trace.
    pub ridge: f64,
    /// Largest accepted condition number of the ridged normal equations.
    pub max_condition: f64,
    /// Re-evaluate the generator once at the explicit `Y_k` (one fixed-point step).
    pub implicit_correction: bool,
    pub target: RegressionTarget,
}

/// What the step-`k` regression projects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RegressionTarget {
    /// The fitted `Y_{k+1}` of the previous step.
    NextValue,
    /// `Φ + Σ_{j>k} f_j dt - Σ_{j>k} Z_j ΔB_j` along each path.
    #[default]
    Pathwise,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            ridge: 1e-10,
            max_condition: 1e12,
            implicit_correction: false,
            target: RegressionTarget::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub scheme: String,
    /// Per grid step `0..N`, condition number of the standardized Gram matrix.
    pub condition_numbers: Vec<f64>,
    /// Per grid step, regressors dropped as constant.
    pub dropped_features: Vec<usize>,
    pub iterations: usize,
    /// Picard: max-over-steps L² change of `Y` per iteration.
    pub picard_gaps: Vec<f64>,
}

/// Discretized `(Y, Z)` per path plus the root estimate.
#[derive(Debug, Clone)]
pub struct BsdeSolution {
    pub y_root: f64,
    pub y_root_se: f64,
    grid: TimeGrid,
    n_paths: usize,
    dim: usize,
    y_grid: Vec<f64>,
    z_grid: Vec<f64>,
    pathwise: Vec<f64>,
    pub diagnostics: Diagnostics,
}

/// One row of the per-step solution export.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepSummary {
    pub step: usize,
    pub time: f64,
    pub y_mean: f64,
    pub y_se: f64,
    pub z_mean: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentEstimate {
    /// `E[sup_s |Y(s)|^p]`.
    pub sup_y: f64,
    pub sup_y_se: f64,
    /// `E[(∫ |Z|² ds)^{p/2}]`.
    pub z_energy: f64,
    pub z_energy_se: f64,
}

impl BsdeSolution {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `Y` of path `i` at node `k` (`0..=N`).
    pub fn y(&self, i: usize, k: usize) -> f64 {
        self.y_grid[i * (self.grid.steps() + 1) + k]
    }

    /// `Z` of path `i` on step `k` (`0..N`).
    pub fn z(&self, i: usize, k: usize) -> &[f64] {
        let o = (i * self.grid.steps() + k) * self.dim;
        &self.z_grid[o..o + self.dim]
    }

    /// Per-path estimator `Φ + Σ_k f_k dt` whose sample mean estimates `Y(t)`.
    ///
    /// Two solutions on the same batch pair up index by index, so standard
    /// errors of differences can be read off these.
    pub fn pathwise(&self) -> &[f64] {
        &self.pathwise
    }

    pub fn y_at_step(&self, k: usize) -> Vec<f64> {
        (0..self.n_paths).map(|i| self.y(i, k)).collect()
    }

    pub fn z_at_step(&self, k: usize, component: usize) -> Vec<f64> {
        (0..self.n_paths).map(|i| self.z(i, k)[component]).collect()
    }

    pub fn step_summary(&self) -> Vec<StepSummary> {
        (0..=self.grid.steps())
            .map(|k| {
                let ys = self.y_at_step(k);
                let z_mean = if k < self.grid.steps() {
                    (0..self.dim).map(|c| mean(&self.z_at_step(k, c))).collect()
                } else {
                    Vec::new()
                };
                StepSummary {
                    step: k,
                    time: self.grid.node(k),
                    y_mean: mean(&ys),
                    y_se: standard_error(&ys),
                    z_mean,
                }
            })
            .collect()
    }

    /// CSV `step,time,y_mean,y_se,z_mean_0,...`; the terminal row has empty `z` cells.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["step".to_string(), "time".into(), "y_mean".into(), "y_se".into()];
        header.extend((0..self.dim).map(|c| format!("z_mean_{c}")));
        w.write_record(&header)?;
        for row in self.step_summary() {
            let mut rec = vec![
                row.step.to_string(),
                format!("{:e}", row.time),
                format!("{:e}", row.y_mean),
                format!("{:e}", row.y_se),
            ];
            if row.z_mean.is_empty() {
                rec.extend((0..self.dim).map(|_| String::new()));
            } else {
                rec.extend(row.z_mean.iter().map(|v| format!("{v:e}")));
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn moments(&self, p: f64) -> Result<MomentEstimate> {
        if !(p >= 2.0) {
            return Err(Error::domain(format!("moment order must be >= 2, got {p}")));
        }
        let n = self.grid.steps();
        let dt = self.grid.dt();
        let sups: Vec<f64> = (0..self.n_paths)
            .map(|i| (0..=n).map(|k| self.y(i, k).abs().powf(p)).fold(0.0, f64::max))
            .collect();
        let energies: Vec<f64> = (0..self.n_paths)
            .map(|i| {
                let e: f64 = (0..n).map(|k| self.z(i, k).iter().map(|z| z * z).sum::<f64>() * dt).sum();
                e.powf(0.5 * p)
            })
            .collect();
        Ok(MomentEstimate {
            sup_y: mean(&sups),
            sup_y_se: standard_error(&sups),
            z_energy: mean(&energies),
            z_energy_se: standard_error(&energies),
        })
    }
}

// Spliced paths of one batch and views of their grid prefixes.
struct Setup {
    paths: Vec<CadlagPath>,
    base: usize,
    grid: TimeGrid,
    n: usize,
    steps: usize,
    dim: usize,
}

impl Setup {
    fn new(prefix: PathView<'_>, batch: &PathBatch) -> Result<Self> {
        let paths = cumulate(batch, prefix)?;
        Ok(Self {
            paths,
            base: prefix.len(),
            grid: *batch.grid(),
            n: batch.n_paths(),
            steps: batch.steps(),
            dim: batch.dim(),
        })
    }

    fn prefix(&self, i: usize, k: usize) -> PathView<'_> {
        self.paths[i].view().prefix(self.base + k)
    }

    fn projection(&self, basis: &RegressionBasis, k: usize, opts: &SolverOptions) -> Result<Projection> {
        if k == 0 {
            return Ok(Projection::mean_only(self.n));
        }
        let p = basis.width();
        let rows: Vec<Vec<f64>> = (0..self.n)
            .into_par_iter()
            .map(|i| {
                let mut r = Vec::with_capacity(p);
                basis.design_row(self.prefix(i, k), &mut r);
                r
            })
            .collect();
        Projection::fit(&rows.concat(), self.n, p, k, opts.ridge, opts.max_condition)
    }

    fn terminal_values(&self, phi: &dyn Functional) -> Result<Vec<f64>> {
        let steps = self.steps;
        (0..self.n)
            .into_par_iter()
            .map(|i| {
                let non_finite = || Error::NonFinite {
                    source_name: phi.name().to_string(),
                    path: i,
                    step: steps,
                };
                match phi.evaluate(self.paths[i].view()) {
                    Ok(v) if v.is_finite() => Ok(v),
                    Ok(_) | Err(Error::Evaluation { .. }) => Err(non_finite()),
                    Err(e) => Err(e),
                }
            })
            .collect()
    }

    fn generator_values(&self, f: &dyn Generator, k: usize, y: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim;
        (0..self.n)
            .into_par_iter()
            .map(|i| {
                let v = f.evaluate(self.prefix(i, k), y[i], &z[i * d..(i + 1) * d]);
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::NonFinite {
                        source_name: f.name().to_string(),
                        path: i,
                        step: k,
                    })
                }
            })
            .collect()
    }

    // Z_k = E_k[(target - E_k[target]) ΔB_k] / m_k with m_k the sample mean of
    // ΔB_k² (whose expectation is dt), row-major n × d.
    fn z_projection(&self, batch: &PathBatch, proj: &Projection, k: usize, target: &[f64], fitted: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut z = vec![0.0; self.n * d];
        for c in 0..d {
            let second = (0..self.n).map(|i| batch.increment(i, k)[c].powi(2)).sum::<f64>() / self.n as f64;
            let w: Vec<f64> = (0..self.n)
                .map(|i| (target[i] - fitted[i]) * batch.increment(i, k)[c] / second)
                .collect();
            for (i, v) in proj.project(&w).into_iter().enumerate() {
                z[i * d + c] = v;
            }
        }
        z
    }
}

fn check_start(prefix: PathView<'_>, batch: &PathBatch) -> Result<()> {
    if batch.grid().index_of(prefix.horizon()) != Some(0) {
        return Err(Error::domain(format!(
            "simulation grid starts at {} but the path horizon is {}",
            batch.grid().t0(),
            prefix.horizon()
        )));
    }
    Ok(())
}

/// Least-squares Monte-Carlo solution on a fresh batch drawn from `sim`.
pub fn solve_regression(
    phi: &dyn Functional,
    f: &dyn Generator,
    prefix: PathView<'_>,
    sim: &SimulationConfig,
    basis: &RegressionBasis,
    opts: &SolverOptions,
) -> Result<BsdeSolution> {
    let batch = simulate(sim)?;
    solve_regression_on(phi, f, prefix, &batch, basis, opts)
}

/// [`solve_regression`] on a given batch (common random numbers).
pub fn solve_regression_on(
    phi: &dyn Functional,
    f: &dyn Generator,
    prefix: PathView<'_>,
    batch: &PathBatch,
    basis: &RegressionBasis,
    opts: &SolverOptions,
) -> Result<BsdeSolution> {
    check_start(prefix, batch)?;
    let s = Setup::new(prefix, batch)?;
    let (n, steps, d) = (s.n, s.steps, s.dim);
    let dt = s.grid.dt();

    let terminal = s.terminal_values(phi)?;
    let mut y_grid = vec![0.0; n * (steps + 1)];
    let mut z_grid = vec![0.0; n * steps * d];
    for (i, v) in terminal.iter().enumerate() {
        y_grid[i * (steps + 1) + steps] = *v;
    }
    let mut pathwise = terminal.clone();
    let mut next = terminal;
    // Σ_{j>k} Z_j·ΔB_j per path
    let mut martingale = vec![0.0; n];
    let mut conditions = vec![1.0; steps];
    let mut dropped = vec![0; steps];

    for k in (0..steps).rev() {
        let proj = s.projection(basis, k, opts)?;
        conditions[k] = proj.condition();
        dropped[k] = proj.dropped();
        let target: Vec<f64> = match opts.target {
            RegressionTarget::NextValue => next.clone(),
            RegressionTarget::Pathwise => pathwise.iter().zip(&martingale).map(|(p, m)| p - m).collect(),
        };
        let fitted = proj.project(&target);
        let z = s.z_projection(batch, &proj, k, &target, &fitted);
        let mut fvals = s.generator_values(f, k, &fitted, &z)?;
        let mut current: Vec<f64> = fitted.iter().zip(&fvals).map(|(e, g)| e + dt * g).collect();
        if opts.implicit_correction {
            fvals = s.generator_values(f, k, &current, &z)?;
            current = fitted.iter().zip(&fvals).map(|(e, g)| e + dt * g).collect();
        }
        for i in 0..n {
            y_grid[i * (steps + 1) + k] = current[i];
            pathwise[i] += dt * fvals[i];
            martingale[i] += z[i * d..(i + 1) * d].iter().zip(batch.increment(i, k)).map(|(a, b)| a * b).sum::<f64>();
            let o = (i * steps + k) * d;
            z_grid[o..o + d].copy_from_slice(&z[i * d..(i + 1) * d]);
        }
        next = current;
    }
    // Projections preserve means, so mean(Y_0) and the pathwise mean agree up
    // to round-off; the pathwise form makes f = 0 reproduce mean(Φ) exactly.
    let y_root = mean(&pathwise);
    for i in 0..n {
        y_grid[i * (steps + 1)] = y_root;
    }

    Ok(BsdeSolution {
        y_root,
        y_root_se: standard_error(&pathwise),
        grid: s.grid,
        n_paths: n,
        dim: d,
        y_grid,
        z_grid,
        pathwise,
        diagnostics: Diagnostics {
            scheme: "regression".into(),
            condition_numbers: conditions,
            dropped_features: dropped,
            iterations: 1,
            picard_gaps: Vec::new(),
        },
    })
}

/// Picard iteration on the integral form, on a fresh batch drawn from `sim`.
#[allow(clippy::too_many_arguments)]
pub fn solve_picard(
    phi: &dyn Functional,
    f: &dyn Generator,
    prefix: PathView<'_>,
    sim: &SimulationConfig,
    basis: &RegressionBasis,
    max_iter: usize,
    tol: f64,
    opts: &SolverOptions,
) -> Result<BsdeSolution> {
    let batch = simulate(sim)?;
    solve_picard_on(phi, f, prefix, &batch, basis, max_iter, tol, opts)
}

/// [`solve_picard`] on a given batch.
///
/// Iterate `m + 1` projects `Φ + Σ_{j >= k} f(prefix_j, Y^m_j, Z^m_j) dt` on
/// the step-`k` features, starting from `Y^0 = Z^0 = 0`. Stops once the
/// largest per-step L² change of `Y` drops below `tol`.
#[allow(clippy::too_many_arguments)]
pub fn solve_picard_on(
    phi: &dyn Functional,
    f: &dyn Generator,
    prefix: PathView<'_>,
    batch: &PathBatch,
    basis: &RegressionBasis,
    max_iter: usize,
    tol: f64,
    opts: &SolverOptions,
) -> Result<BsdeSolution> {
    if max_iter == 0 {
        return Err(Error::InvalidConfig("max_iter must be positive".into()));
    }
    check_start(prefix, batch)?;
    let s = Setup::new(prefix, batch)?;
    let (n, steps, d) = (s.n, s.steps, s.dim);
    let dt = s.grid.dt();
    let terminal = s.terminal_values(phi)?;
    let projections: Vec<Projection> = (0..steps)
        .map(|k| s.projection(basis, k, opts))
        .collect::<Result<_>>()?;

    // step-major: y[k][i], z[k][i * d + c]
    let mut y: Vec<Vec<f64>> = vec![vec![0.0; n]; steps + 1];
    y[steps] = terminal.clone();
    let mut z: Vec<Vec<f64>> = vec![vec![0.0; n * d]; steps];
    let mut gaps = Vec::new();

    for m in 1..=max_iter {
        let fvals: Vec<Vec<f64>> = (0..steps)
            .map(|k| s.generator_values(f, k, &y[k], &z[k]))
            .collect::<Result<_>>()?;
        // targets[k] = Φ + Σ_{j >= k} f_j dt
        let mut targets = vec![terminal.clone(); steps + 1];
        for k in (0..steps).rev() {
            let acc: Vec<f64> = targets[k + 1].iter().zip(&fvals[k]).map(|(a, g)| a + dt * g).collect();
            targets[k] = acc;
        }
        let mut new_y = vec![Vec::new(); steps + 1];
        new_y[steps] = terminal.clone();
        let mut new_z = vec![Vec::new(); steps];
        for k in 0..steps {
            let proj = &projections[k];
            new_y[k] = proj.project(&targets[k]);
            let fitted_next = proj.project(&targets[k + 1]);
            new_z[k] = s.z_projection(batch, proj, k, &targets[k + 1], &fitted_next);
        }
        let change = (0..steps)
            .map(|k| {
                let ms = new_y[k].iter().zip(&y[k]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n as f64;
                ms.sqrt()
            })
            .fold(0.0, f64::max);
        gaps.push(change);
        y = new_y;
        z = new_z;
        let root_target = std::mem::take(&mut targets[0]);
        if change < tol {
            let mut y_grid = vec![0.0; n * (steps + 1)];
            let mut z_grid = vec![0.0; n * steps * d];
            for i in 0..n {
                for k in 0..=steps {
                    y_grid[i * (steps + 1) + k] = y[k][i];
                }
                for (k, zk) in z.iter().enumerate() {
                    let o = (i * steps + k) * d;
                    z_grid[o..o + d].copy_from_slice(&zk[i * d..(i + 1) * d]);
                }
            }
            return Ok(BsdeSolution {
                y_root: mean(&root_target),
                y_root_se: standard_error(&root_target),
                grid: s.grid,
                n_paths: n,
                dim: d,
                y_grid,
                z_grid,
                pathwise: root_target,
                diagnostics: Diagnostics {
                    scheme: "picard".into(),
                    condition_numbers: projections.iter().map(|p| p.condition()).collect(),
                    dropped_features: projections.iter().map(|p| p.dropped()).collect(),
                    iterations: (m - 1).max(1),
                    picard_gaps: gaps,
                },
            });
        }
    }
    Err(Error::NotConverged {
        iterations: max_iter,
        last_change: *gaps.last().unwrap_or(&f64::INFINITY),
        gaps,
    })
}

/// Outcome of solving two ordered problems with common random numbers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub y1: f64,
    pub y2: f64,
    /// `y2 - y1`, expected to be non-negative.
    pub gap: f64,
    /// Standard error of the gap from the paired per-path estimators.
    pub se: f64,
    /// `y1 - y2 > 3 se` (beyond round-off).
    pub violation: bool,
}

/// Solves `(Φ1, f1)` and `(Φ2, f2)` on one batch and checks `y1 <= y2` up to 3 standard errors.
#[allow(clippy::too_many_arguments)]
pub fn comparison_check(
    phi1: &dyn Functional,
    f1: &dyn Generator,
    phi2: &dyn Functional,
    f2: &dyn Generator,
    prefix: PathView<'_>,
    sim: &SimulationConfig,
    basis: &RegressionBasis,
    opts: &SolverOptions,
) -> Result<ComparisonReport> {
    let batch = simulate(sim)?;
    comparison_check_on(phi1, f1, phi2, f2, prefix, &batch, basis, opts)
}

#[allow(clippy::too_many_arguments)]
pub fn comparison_check_on(
    phi1: &dyn Functional,
    f1: &dyn Generator,
    phi2: &dyn Functional,
    f2: &dyn Generator,
    prefix: PathView<'_>,
    batch: &PathBatch,
    basis: &RegressionBasis,
    opts: &SolverOptions,
) -> Result<ComparisonReport> {
    let s1 = solve_regression_on(phi1, f1, prefix, batch, basis, opts)?;
    let s2 = solve_regression_on(phi2, f2, prefix, batch, basis, opts)?;
    let diff: Vec<f64> = s2.pathwise().iter().zip(s1.pathwise()).map(|(a, b)| a - b).collect();
    let se = standard_error(&diff);
    let roundoff = 1e-12 * (1.0 + s1.y_root.abs().max(s2.y_root.abs()));
    Ok(ComparisonReport {
        y1: s1.y_root,
        y2: s2.y_root,
        gap: s2.y_root - s1.y_root,
        se,
        violation: s1.y_root - s2.y_root > 3.0 * se + roundoff,
    })
}

/// `E[sup |Y|^p]` and `E[(∫|Z|²)^{p/2}]` from a regression solve.
pub fn moment_estimate(
    phi: &dyn Functional,
    f: &dyn Generator,
    prefix: PathView<'_>,
    sim: &SimulationConfig,
    basis: &RegressionBasis,
    p: f64,
    opts: &SolverOptions,
) -> Result<MomentEstimate> {
    if !(p >= 2.0) {
        return Err(Error::domain(format!("moment order must be >= 2, got {p}")));
    }
    solve_regression(phi, f, prefix, sim, basis, opts)?.moments(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityRow {
    pub distance: f64,
    pub horizon_gap: f64,
    /// `E[sup_u |Y_γ(u) - Y_γ̄(u)|^p]`.
    pub moment: f64,
    pub moment_se: f64,
    /// `d∞^p + |t - t̄|^{p/2}`.
    pub driver: f64,
    /// `moment / driver` (0 when both vanish).
    pub ratio: f64,
}

/// Path-stability table for pairs `(γ_t, γ̄_t̄)`.
///
/// Both horizons of every pair must be nodes of `sim.grid`; each path is
/// continued by the same Brownian motion from its own horizon, and
/// `Y(u) = Y(u ∨ t)` before a path's horizon.
pub fn stability_modulus(
    phi: &dyn Functional,
    f: &dyn Generator,
    pairs: &[(CadlagPath, CadlagPath)],
    sim: &SimulationConfig,
    basis: &RegressionBasis,
    p: f64,
    opts: &SolverOptions,
) -> Result<Vec<StabilityRow>> {
    if !(p >= 2.0) {
        return Err(Error::domain(format!("moment order must be >= 2, got {p}")));
    }
    let batch = simulate(sim)?;
    let grid = *batch.grid();
    let offset = |path: &CadlagPath| -> Result<usize> {
        match grid.index_of(path.horizon()) {
            Some(k) if k < grid.steps() => Ok(k),
            _ => Err(Error::domain(format!(
                "path horizon {} is not an interior node of the simulation grid",
                path.horizon()
            ))),
        }
    };
    pairs
        .iter()
        .map(|(a, b)| {
            let (ja, jb) = (offset(a)?, offset(b)?);
            let sa = solve_regression_on(phi, f, a.view(), &batch.tail(ja)?, basis, opts)?;
            let sb = solve_regression_on(phi, f, b.view(), &batch.tail(jb)?, basis, opts)?;
            let start = ja.min(jb);
            let value = |sol: &BsdeSolution, j: usize, i: usize, k: usize| {
                if k < j {
                    sol.y_root
                } else {
                    sol.y(i, k - j)
                }
            };
            let sups: Vec<f64> = (0..batch.n_paths())
                .map(|i| {
                    (start..=grid.steps())
                        .map(|k| (value(&sa, ja, i, k) - value(&sb, jb, i, k)).abs().powf(p))
                        .fold(0.0, f64::max)
                })
                .collect();
            let distance = d_infinity(a.view(), b.view())?;
            let horizon_gap = (a.horizon() - b.horizon()).abs();
            let driver = distance.powf(p) + horizon_gap.powf(0.5 * p);
            let moment = mean(&sups);
            Ok(StabilityRow {
                distance,
                horizon_gap,
                moment,
                moment_se: standard_error(&sups),
                driver,
                ratio: if moment == 0.0 { 0.0 } else { moment / driver },
            })
        })
        .collect()
}

#[cfg(test)]
mod tests;
