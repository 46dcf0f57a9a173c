//! Finite-difference functional Itô calculus on step paths.
//!
//! The vertical derivatives bump only the terminal value of the path
//! (`γ_t^x`), the horizontal derivative extends the path flat in time
//! (`γ_{t,t+δ}`). Both act on any [`Functional`]; smoothness is the caller's
//! concern, the functions here only difference evaluations.

pub mod functionals;

use std::io::Write;

use crate::error::{Error, Result};
use crate::path::{horizontal_extension, times_match, vertical_bump, PathView, TimeGrid};

/// A real-valued map on paths.
///
/// Implementations must be deterministic and re-entrant: the same path always
/// yields the same value, from any thread.
pub trait Functional: Send + Sync {
    fn name(&self) -> &str;

    fn evaluate(&self, path: PathView<'_>) -> Result<f64>;

    /// Declared polynomial growth exponent `q` in `|u(γ)| <= C (1 + ||γ||^q)`.
    fn growth_order(&self) -> f64 {
        0.0
    }

    /// The constant `C` of the growth bound, when known.
    fn growth_constant(&self) -> Option<f64> {
        None
    }
}

impl<F: Functional + ?Sized> Functional for &F {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn evaluate(&self, path: PathView<'_>) -> Result<f64> {
        (**self).evaluate(path)
    }
    fn growth_order(&self) -> f64 {
        (**self).growth_order()
    }
    fn growth_constant(&self) -> Option<f64> {
        (**self).growth_constant()
    }
}

impl<F: Functional + ?Sized> Functional for std::sync::Arc<F> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn evaluate(&self, path: PathView<'_>) -> Result<f64> {
        (**self).evaluate(path)
    }
    fn growth_order(&self) -> f64 {
        (**self).growth_order()
    }
    fn growth_constant(&self) -> Option<f64> {
        (**self).growth_constant()
    }
}

/// Value and first/second functional derivatives at one path.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeBundle {
    pub value: f64,
    /// `D_x u`, length `d`.
    pub vertical: Vec<f64>,
    /// `D_xx u`, row-major `d × d`, symmetric.
    pub hessian: Vec<f64>,
    /// `D_t u`.
    pub horizontal: f64,
    pub step_vertical: f64,
    pub step_horizontal: f64,
}

impl DerivativeBundle {
    pub fn dim(&self) -> usize {
        self.vertical.len()
    }

    pub fn hessian_at(&self, i: usize, j: usize) -> f64 {
        self.hessian[i * self.dim() + j]
    }

    pub fn hessian_trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.hessian_at(i, i)).sum()
    }

    pub fn csv_header(dim: usize) -> Vec<String> {
        let mut h: Vec<String> = ["name", "t", "value", "D_t"].iter().map(|s| s.to_string()).collect();
        h.extend((0..dim).map(|i| format!("D_x_{i}")));
        for i in 0..dim {
            for j in 0..dim {
                h.push(format!("D_xx_{i}{j}"));
            }
        }
        h.push("h".into());
        h.push("delta".into());
        h
    }

    pub fn csv_record(&self, name: &str, t: f64) -> Vec<String> {
        let mut r = vec![name.to_string(), format!("{t:e}"), format!("{:e}", self.value), format!("{:e}", self.horizontal)];
        r.extend(self.vertical.iter().map(|v| format!("{v:e}")));
        r.extend(self.hessian.iter().map(|v| format!("{v:e}")));
        r.push(format!("{:e}", self.step_vertical));
        r.push(format!("{:e}", self.step_horizontal));
        r
    }
}

/// Writes derivative reports as CSV rows `name,t,value,D_t,D_x_..,D_xx_..,h,delta`.
pub fn write_derivative_csv<W: Write>(writer: W, rows: &[(String, f64, DerivativeBundle)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let dim = rows.first().map(|r| r.2.dim()).unwrap_or(1);
    w.write_record(DerivativeBundle::csv_header(dim))?;
    for (name, t, b) in rows {
        w.write_record(b.csv_record(name, *t))?;
    }
    w.flush()?;
    Ok(())
}

/// `1e-4 (1 + ||γ_t||)`.
pub fn default_vertical_step(path: PathView<'_>) -> f64 {
    1e-4 * (1.0 + path.sup_norm())
}

/// `1e-3 (T - t)`.
pub fn default_horizontal_step(path: PathView<'_>, horizon: f64) -> f64 {
    1e-3 * (horizon - path.horizon()).max(0.0)
}

fn check_step(h: f64, what: &str) -> Result<()> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::domain(format!("{what} step must be positive, got {h}")));
    }
    Ok(())
}

fn bumped(u: &dyn Functional, path: PathView<'_>, x: &[f64], direction: usize, sign: i8) -> Result<f64> {
    let p = vertical_bump(path, x)?;
    u.evaluate(p.view()).map_err(|e| Error::Bump {
        direction,
        sign,
        source: Box::new(e),
    })
}

fn unit(d: usize, i: usize, h: f64) -> Vec<f64> {
    let mut e = vec![0.0; d];
    e[i] = h;
    e
}

/// Central difference `(u(γ^{h e_i}) - u(γ^{-h e_i})) / 2h` per component.
pub fn vertical_derivative(u: &dyn Functional, path: PathView<'_>, h: f64) -> Result<Vec<f64>> {
    check_step(h, "vertical")?;
    let d = path.dim();
    (0..d)
        .map(|i| {
            let up = bumped(u, path, &unit(d, i, h), i, 1)?;
            let down = bumped(u, path, &unit(d, i, -h), i, -1)?;
            Ok((up - down) / (2.0 * h))
        })
        .collect()
}

/// Second-order central stencil for `D_xx u`, symmetrized.
pub fn vertical_hessian(u: &dyn Functional, path: PathView<'_>, h: f64) -> Result<Vec<f64>> {
    check_step(h, "vertical")?;
    let d = path.dim();
    let centre = u.evaluate(path)?;
    let mut hess = vec![0.0; d * d];
    for i in 0..d {
        let up = bumped(u, path, &unit(d, i, h), i, 1)?;
        let down = bumped(u, path, &unit(d, i, -h), i, -1)?;
        hess[i * d + i] = (up - 2.0 * centre + down) / (h * h);
        for j in (i + 1)..d {
            let mut pp = vec![0.0; d];
            let mut corner = |si: f64, sj: f64| {
                pp.iter_mut().for_each(|v| *v = 0.0);
                pp[i] = si * h;
                pp[j] = sj * h;
                bumped(u, path, &pp, i, if si > 0.0 { 1 } else { -1 })
            };
            let mixed = (corner(1.0, 1.0)? - corner(1.0, -1.0)? - corner(-1.0, 1.0)? + corner(-1.0, -1.0)?)
                / (4.0 * h * h);
            hess[i * d + j] = mixed;
            hess[j * d + i] = mixed;
        }
    }
    for i in 0..d {
        for j in (i + 1)..d {
            let s = 0.5 * (hess[i * d + j] + hess[j * d + i]);
            hess[i * d + j] = s;
            hess[j * d + i] = s;
        }
    }
    Ok(hess)
}

/// One-sided `(u(γ_{t,t+δ}) - u(γ_t)) / δ`, optionally Richardson-extrapolated
/// with `δ/2`. Requires `t + δ <= horizon`.
pub fn horizontal_derivative(
    u: &dyn Functional,
    path: PathView<'_>,
    delta: f64,
    horizon: f64,
    richardson: bool,
) -> Result<f64> {
    check_step(delta, "horizontal")?;
    let t = path.horizon();
    if t + delta > horizon && !times_match(t + delta, horizon) {
        return Err(Error::domain(format!(
            "horizontal step {delta} from t={t} passes the horizon {horizon}"
        )));
    }
    let base = u.evaluate(path)?;
    let forward = |step: f64| -> Result<f64> {
        let ext = horizontal_extension(path, t + step)?;
        Ok((u.evaluate(ext.view())? - base) / step)
    };
    let coarse = forward(delta)?;
    if richardson {
        Ok(2.0 * forward(0.5 * delta)? - coarse)
    } else {
        Ok(coarse)
    }
}

/// All finite-difference derivatives of `u` at `path`.
pub fn numeric_bundle(
    u: &dyn Functional,
    path: PathView<'_>,
    h: f64,
    delta: f64,
    horizon: f64,
) -> Result<DerivativeBundle> {
    Ok(DerivativeBundle {
        value: u.evaluate(path)?,
        vertical: vertical_derivative(u, path, h)?,
        hessian: vertical_hessian(u, path, h)?,
        horizontal: horizontal_derivative(u, path, delta, horizon, false)?,
        step_vertical: h,
        step_horizontal: delta,
    })
}

/// How `d⟨X⟩` is realized on a grid step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QuadraticVariation {
    /// `ΔX ΔXᵀ` along the sampled path.
    #[default]
    Pathwise,
    /// `dt · I`, the Brownian law.
    Calendar,
}

/// Residual of the discrete functional Itô expansion along a sampled path.
///
/// The last `grid.steps() + 1` breakpoints of `path` must be the grid nodes.
/// Returns `u(X_T) - u(X_0) - Σ_k [D_t u dt + D_x u·ΔX_k + ½ D_xx u : d⟨X⟩_k]`
/// with derivatives taken at the prefix ending at node `k`.
pub fn ito_residual(
    u: &dyn Functional,
    derivatives: &dyn Fn(PathView<'_>) -> Result<DerivativeBundle>,
    path: PathView<'_>,
    grid: &TimeGrid,
    qv: QuadraticVariation,
) -> Result<f64> {
    let n = grid.steps();
    if path.len() < n + 1 {
        return Err(Error::domain(format!(
            "path has {} breakpoints, grid needs {}",
            path.len(),
            n + 1
        )));
    }
    let base = path.len() - n - 1;
    for k in 0..=n {
        if !times_match(path.times()[base + k], grid.node(k)) {
            return Err(Error::domain(format!(
                "path breakpoint {} does not match grid node {k} at {}",
                path.times()[base + k],
                grid.node(k)
            )));
        }
    }
    let d = path.dim();
    let dt = grid.dt();
    let mut expansion = 0.0;
    for k in 0..n {
        let prefix = path.prefix(base + k + 1);
        let b = derivatives(prefix)?;
        let x0 = prefix.terminal();
        let x1 = path.point(base + k + 1);
        let dx: Vec<f64> = x1.iter().zip(x0).map(|(a, b)| a - b).collect();
        let first: f64 = b.vertical.iter().zip(&dx).map(|(g, v)| g * v).sum();
        let second = match qv {
            QuadraticVariation::Pathwise => {
                let mut s = 0.0;
                for i in 0..d {
                    for j in 0..d {
                        s += b.hessian[i * d + j] * dx[i] * dx[j];
                    }
                }
                s
            }
            QuadraticVariation::Calendar => b.hessian_trace() * dt,
        };
        expansion += b.horizontal * dt + first + 0.5 * second;
    }
    let end = u.evaluate(path)?;
    let start = u.evaluate(path.prefix(base + 1))?;
    Ok(end - start - expansion)
}

#[cfg(test)]
mod tests {
    use super::functionals::*;
    use super::*;
    use crate::error::Error;
    use crate::brownian::{cumulate, simulate, SimulationConfig};
    use crate::path::CadlagPath;
    use crate::stats::log_log_slope;

    fn sample_path() -> CadlagPath {
        CadlagPath::scalar(vec![0.0, 0.2, 0.45, 0.6], vec![0.3, -1.1, 0.8, 1.7]).unwrap()
    }

    #[test]
    fn vertical_derivative_examples() {
        let p = sample_path();
        let sq = terminal_square();
        let g = vertical_derivative(&sq, p.view(), 1e-3).unwrap();
        assert!((g[0] - 3.4).abs() < 1e-10);

        let integral = running_integral(0, 1.0);
        let g = vertical_derivative(&integral, p.view(), 1e-3).unwrap();
        assert_eq!(g[0], 0.0);

        let lin = linear_terminal(vec![2.0, -0.5]);
        let p2 = CadlagPath::from_points(vec![0.0, 0.5], &[vec![1.0, 1.0], vec![0.3, -2.0]]).unwrap();
        let g = vertical_derivative(&lin, p2.view(), 1e-4).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-10 && (g[1] + 0.5).abs() < 1e-10);

        assert!(vertical_derivative(&sq, p.view(), 0.0).is_err());
    }

    #[test]
    fn bump_failures_name_the_direction() {
        let fragile = FnFunctional::new("fragile", 0.0, |p| if p.terminal()[1] > 0.0 { f64::NAN } else { 1.0 });
        let p = CadlagPath::from_points(vec![0.0], &[vec![0.0, 0.0]]).unwrap();
        match vertical_derivative(&fragile, p.view(), 0.1) {
            Err(Error::Bump { direction: 1, sign: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn hessian_examples() {
        let p = CadlagPath::from_points(vec![0.0, 0.5], &[vec![1.0, 1.0], vec![0.3, -2.0]]).unwrap();
        let h = vertical_hessian(&terminal_square(), p.view(), 1e-3).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 2.0 } else { 0.0 };
                assert!((h[i * 2 + j] - want).abs() < 1e-6, "{h:?}");
            }
        }
        let h = vertical_hessian(&linear_terminal(vec![1.0, 3.0]), p.view(), 1e-3).unwrap();
        assert!(h.iter().all(|v| v.abs() < 1e-6));

        // analytic oracle: d²/dx² x⁴ = 12 x² = 12 at x = 1
        let q = CadlagPath::scalar(vec![0.0, 1.0], vec![0.0, 1.0]).unwrap();
        let quartic = terminal_power(4);
        let errs: Vec<f64> = [1e-2, 5e-3]
            .iter()
            .map(|&h| (vertical_hessian(&quartic, q.view(), h).unwrap()[0] - 12.0).abs())
            .collect();
        assert!(errs[0] < 3e-3);
        // O(h²): halving h quarters the error
        assert!((errs[0] / errs[1] - 4.0).abs() < 0.1, "{errs:?}");
    }

    #[test]
    fn hessian_is_symmetric_for_mixed_functionals() {
        let f = FnFunctional::new("mixed", 3.0, |p| {
            let x = p.terminal();
            x[0] * x[0] * x[1] + (x[1] * x[2]).sin() + x[0] * x[2].exp()
        });
        let p = CadlagPath::from_points(vec![0.0], &[vec![0.4, -0.7, 0.2]]).unwrap();
        let h = vertical_hessian(&f, p.view(), 1e-3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(h[i * 3 + j], h[j * 3 + i]);
            }
        }
        // analytic mixed partial d²/dx0 dx1 = 2 x0
        assert!((h[1] - 0.8).abs() < 1e-5);
        let h2 = vertical_hessian(&f, p.view(), 5e-4).unwrap();
        assert!((h[1] - h2[1]).abs() < 1e-5);
    }

    #[test]
    fn central_differences_are_exact_on_quadratics() {
        let quad = FnFunctional::new("quad", 2.0, |p| {
            let x = p.terminal()[0];
            3.0 * x * x - 2.0 * x + p.running_integral(0) + 0.5
        });
        let p = sample_path();
        let scale = 1.0 + quad.evaluate(p.view()).unwrap().abs();
        // truncation error vanishes; what is left is evaluation round-off
        for h in [1e-6, 1e-5, 1e-4, 1e-3, 1e-2] {
            let g = vertical_derivative(&quad, p.view(), h).unwrap()[0];
            let tol = 1e-10 + 4.0 * f64::EPSILON * scale / h;
            assert!((g - (6.0 * 1.7 - 2.0)).abs() < tol, "h={h} g={g}");
            let hh = vertical_hessian(&quad, p.view(), h).unwrap()[0];
            let tol = 1e-10 + 8.0 * f64::EPSILON * scale / (h * h);
            assert!((hh - 6.0).abs() < tol, "h={h} hh={hh}");
        }
    }

    #[test]
    fn derivative_order_on_smooth_fixture() {
        let f = FnFunctional::new("sin", 0.0, |p| p.terminal()[0].sin());
        let p = CadlagPath::scalar(vec![0.0, 1.0], vec![0.0, 0.7]).unwrap();
        let exact = 0.7f64.cos();
        let hs = [0.1, 0.05, 0.025];
        let errs: Vec<f64> = hs
            .iter()
            .map(|&h| (vertical_derivative(&f, p.view(), h).unwrap()[0] - exact).abs())
            .collect();
        assert!(log_log_slope(&hs, &errs) >= 1.8, "{errs:?}");
    }

    #[test]
    fn horizontal_derivative_examples() {
        let p = sample_path();
        let integral = running_integral(0, 1.0);
        let dt = horizontal_derivative(&integral, p.view(), 1e-3, 1.0, false).unwrap();
        assert!((dt - 1.7).abs() < 1e-10);

        let dt = horizontal_derivative(&terminal_square(), p.view(), 1e-3, 1.0, true).unwrap();
        assert_eq!(dt, 0.0);

        let dt = horizontal_derivative(&time_times_terminal(1.0), p.view(), 1e-3, 1.0, false).unwrap();
        assert!((dt - 1.7).abs() < 1e-10);

        assert!(horizontal_derivative(&integral, p.view(), 0.5, 1.0, false).is_err());
        assert_eq!(default_horizontal_step(p.view(), 1.0), 1e-3 * 0.4);
    }

    #[test]
    fn heat_quadratic_bundle() {
        let p = sample_path();
        let u = heat_quadratic(1.0);
        let b = numeric_bundle(&u, p.view(), 1e-3, 1e-3, 1.0).unwrap();
        assert!((b.horizontal + 1.0).abs() < 1e-9);
        assert!((b.hessian[0] - 2.0).abs() < 1e-6);
        assert!((b.horizontal + 0.5 * b.hessian_trace()).abs() < 1e-6);
    }

    #[test]
    fn derivative_csv_layout() {
        let b = DerivativeBundle {
            value: 1.0,
            vertical: vec![2.0],
            hessian: vec![3.0],
            horizontal: 4.0,
            step_vertical: 1e-4,
            step_horizontal: 1e-3,
        };
        let mut buf = Vec::new();
        write_derivative_csv(&mut buf, &[("u".into(), 0.5, b)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("name,t,value,D_t,D_x_0,D_xx_00,h,delta\n"));
    }

    fn brownian_paths(n_paths: usize, steps: usize, seed: u64) -> (TimeGrid, Vec<CadlagPath>) {
        let grid = TimeGrid::new(0.0, 1.0, steps).unwrap();
        let batch = simulate(&SimulationConfig::new(grid, 1, n_paths, seed)).unwrap();
        let start = CadlagPath::scalar(vec![0.0], vec![0.0]).unwrap();
        (grid, cumulate(&batch, start.view()).unwrap())
    }

    fn exact_identity(p: PathView<'_>) -> Result<DerivativeBundle> {
        Ok(DerivativeBundle {
            value: p.terminal()[0],
            vertical: vec![1.0],
            hessian: vec![0.0],
            horizontal: 0.0,
            step_vertical: 0.0,
            step_horizontal: 0.0,
        })
    }

    fn exact_square(p: PathView<'_>) -> Result<DerivativeBundle> {
        let x = p.terminal()[0];
        Ok(DerivativeBundle {
            value: x * x,
            vertical: vec![2.0 * x],
            hessian: vec![2.0],
            horizontal: 0.0,
            step_vertical: 0.0,
            step_horizontal: 0.0,
        })
    }

    fn exact_integral_plus_square(p: PathView<'_>) -> Result<DerivativeBundle> {
        let x = p.terminal()[0];
        Ok(DerivativeBundle {
            value: p.running_integral(0) + x * x,
            vertical: vec![2.0 * x],
            hessian: vec![2.0],
            horizontal: x,
            step_vertical: 0.0,
            step_horizontal: 0.0,
        })
    }

    #[test]
    fn ito_residual_telescopes_for_identity_and_square() {
        let (grid, paths) = brownian_paths(5, 64, 1);
        for p in &paths {
            let r = ito_residual(&terminal_component(0), &exact_identity, p.view(), &grid, QuadraticVariation::Pathwise).unwrap();
            assert!(r.abs() < 1e-12);
            let r = ito_residual(&terminal_square(), &exact_square, p.view(), &grid, QuadraticVariation::Pathwise).unwrap();
            assert!(r.abs() < 1e-12);
        }
    }

    #[test]
    fn ito_residual_rejects_mismatched_grid() {
        let (_, paths) = brownian_paths(1, 8, 1);
        let other = TimeGrid::new(0.0, 2.0, 8).unwrap();
        assert!(ito_residual(&terminal_component(0), &exact_identity, paths[0].view(), &other, QuadraticVariation::Pathwise).is_err());
    }

    #[test]
    fn ito_residual_refinement_slope() {
        let u = integral_plus_square(1.0);
        let dts = [1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0, 1.0 / 256.0];
        let l2: Vec<f64> = dts
            .iter()
            .map(|&dt| {
                let (grid, paths) = brownian_paths(200, (1.0 / dt) as usize, 2024);
                let ms = paths
                    .iter()
                    .map(|p| ito_residual(&u, &exact_integral_plus_square, p.view(), &grid, QuadraticVariation::Calendar).unwrap().powi(2))
                    .sum::<f64>()
                    / paths.len() as f64;
                ms.sqrt()
            })
            .collect();
        assert!(log_log_slope(&dts, &l2) >= 0.4, "{l2:?}");
    }
}
