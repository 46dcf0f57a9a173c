//! Named, versioned test problems with known answers.
//!
//! Experiment configs and result tables refer to fixtures by id. Bumping a
//! fixture's `version` signals that its definition changed and old results
//! no longer apply.

use std::sync::Arc;

use crate::bsde::{Generator, LinearGenerator, Polynomial, ZeroGenerator};
use crate::calculus::functionals::{heat_quadratic, integral_plus_square, terminal_component, terminal_square};
use crate::calculus::{DerivativeBundle, Functional};
use crate::cascade::CascadeSpec;
use crate::error::{Error, Result};
use crate::oracles::{integral_oracle_bundle, HeatSemigroup, IntegralTerminalFixture};
use crate::path::PathView;
use crate::ppde::PpdeProblem;

#[derive(Debug, Clone)]
pub enum FixtureKind {
    /// `Φ = γ(T)`, `f = 0`.
    Martingale,
    /// `Φ = γ(T)` or `γ(T)²`, `f = c y`.
    Linear { rate: f64, square: bool },
    /// `Φ = ∫_0^T φ(γ)`, `f = c y`.
    Integral { semigroup: HeatSemigroup, rate: f64 },
    /// `Φ = γ(T)²`, `f = 0`, `u = γ(t)² + T - t`.
    HeatQuadratic,
    /// `u = ∫_0^t γ + γ(t)²` with its exact derivatives (no PPDE attached).
    IntegralPlusSquare,
    /// `Φ = φ(γ(t̄), γ(T) - γ(t̄))`, `f = 0`.
    Cascade { split: f64, on_x: bool },
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub id: &'static str,
    pub version: u32,
    pub description: &'static str,
    pub kind: FixtureKind,
}

impl Fixture {
    /// Whether [`Fixture::closed_form`] is available.
    pub fn has_closed_form(&self) -> bool {
        true
    }

    fn linear(rate: f64) -> Polynomial {
        Polynomial::constant(rate)
    }

    /// The PPDE / BSDE data `(Φ, f)` on `[0, T]`.
    pub fn problem(&self, horizon: f64) -> Result<PpdeProblem> {
        let (phi, f): (Arc<dyn Functional>, Arc<dyn Generator>) = match &self.kind {
            FixtureKind::Martingale => (Arc::new(terminal_component(0)), Arc::new(ZeroGenerator)),
            FixtureKind::Linear { rate, square } => {
                let phi: Arc<dyn Functional> = if *square {
                    Arc::new(terminal_square())
                } else {
                    Arc::new(terminal_component(0))
                };
                (phi, Arc::new(LinearGenerator::new(Self::linear(*rate), horizon)))
            }
            FixtureKind::Integral { .. } => {
                let fx = self.integral(horizon).expect("integral fixture");
                (Arc::new(fx.terminal()), Arc::new(fx.generator()))
            }
            FixtureKind::HeatQuadratic => (Arc::new(terminal_square()), Arc::new(ZeroGenerator)),
            FixtureKind::IntegralPlusSquare => {
                return Err(Error::InvalidConfig(format!(
                    "fixture `{}` has no terminal problem attached",
                    self.id
                )))
            }
            FixtureKind::Cascade { .. } => return self.cascade(horizon).expect("cascade fixture").to_problem(),
        };
        PpdeProblem::new(phi, f, horizon, 1)
    }

    pub fn integral(&self, horizon: f64) -> Option<IntegralTerminalFixture> {
        match &self.kind {
            FixtureKind::Integral { semigroup, rate } => Some(IntegralTerminalFixture::new(
                semigroup.clone(),
                Self::linear(*rate),
                horizon,
            )),
            _ => None,
        }
    }

    pub fn cascade(&self, horizon: f64) -> Option<CascadeSpec> {
        match self.kind {
            FixtureKind::Cascade { split, on_x: true } => Some(CascadeSpec::new(self.id, split, horizon, |x, _| x * x)),
            FixtureKind::Cascade { split, on_x: false } => Some(CascadeSpec::new(self.id, split, horizon, |_, y| y * y)),
            _ => None,
        }
    }

    /// Exact value and derivatives at `γ_t`.
    pub fn bundle(&self, path: PathView<'_>, horizon: f64) -> Result<DerivativeBundle> {
        let t = path.horizon();
        let x = path.terminal()[0];
        let exact = |value, dx, dxx, dt| DerivativeBundle {
            value,
            vertical: vec![dx],
            hessian: vec![dxx],
            horizontal: dt,
            step_vertical: 0.0,
            step_horizontal: 0.0,
        };
        Ok(match &self.kind {
            FixtureKind::Martingale => exact(x, 1.0, 0.0, 0.0),
            FixtureKind::Linear { rate, square } => {
                let e = (rate * (horizon - t)).exp();
                if *square {
                    let m = x * x + (horizon - t);
                    exact(e * m, 2.0 * e * x, 2.0 * e, -rate * e * m - e)
                } else {
                    exact(e * x, e, 0.0, -rate * e * x)
                }
            }
            FixtureKind::Integral { .. } => {
                return integral_oracle_bundle(&self.integral(horizon).expect("integral fixture"), path)
            }
            FixtureKind::HeatQuadratic => exact(heat_quadratic(horizon).evaluate(path)?, 2.0 * x, 2.0, -1.0),
            FixtureKind::IntegralPlusSquare => {
                exact(integral_plus_square(horizon).evaluate(path)?, 2.0 * x, 2.0, x)
            }
            FixtureKind::Cascade { split, on_x } => {
                let s = *split;
                let value = match (*on_x, t < s) {
                    (true, true) => x * x + (s - t),
                    (false, true) => horizon - s,
                    (true, false) => path.value_at(s)?[0].powi(2),
                    (false, false) => {
                        let y = x - path.value_at(s)?[0];
                        y * y + horizon - t
                    }
                };
                match (*on_x, t < s) {
                    (true, true) => exact(value, 2.0 * x, 2.0, -1.0),
                    (false, true) | (true, false) => exact(value, 0.0, 0.0, 0.0),
                    (false, false) => {
                        let y = x - path.value_at(s)?[0];
                        exact(value, 2.0 * y, 2.0, -1.0)
                    }
                }
            }
        })
    }

    /// Exact `u(γ_t)`.
    pub fn closed_form(&self, path: PathView<'_>, horizon: f64) -> Result<f64> {
        self.bundle(path, horizon).map(|b| b.value)
    }
}

/// Catalogue format version.
pub const CATALOGUE_VERSION: u32 = 1;

pub fn catalogue() -> Vec<Fixture> {
    vec![
        Fixture {
            id: "martingale-terminal",
            version: 1,
            description: "terminal value, zero driver; u = current value, Z = 1",
            kind: FixtureKind::Martingale,
        },
        Fixture {
            id: "linear-c0.1-sq",
            version: 1,
            description: "squared terminal value, driver 0.1 y; u = e^{0.1 (T-t)} (x^2 + T - t)",
            kind: FixtureKind::Linear { rate: 0.1, square: true },
        },
        Fixture {
            id: "linear-c0.1-terminal",
            version: 1,
            description: "terminal value, driver 0.1 y; u = e^{0.1 (T-t)} x",
            kind: FixtureKind::Linear { rate: 0.1, square: false },
        },
        Fixture {
            id: "integral-x2-c0",
            version: 1,
            description: "time integral of x^2 along the path, zero driver; heat-semigroup closed form",
            kind: FixtureKind::Integral {
                semigroup: HeatSemigroup::Square,
                rate: 0.0,
            },
        },
        Fixture {
            id: "integral-x2-c0.1",
            version: 1,
            description: "time integral of x^2 along the path, driver 0.1 y; discounted closed form",
            kind: FixtureKind::Integral {
                semigroup: HeatSemigroup::Square,
                rate: 0.1,
            },
        },
        Fixture {
            id: "integral-sin-c0",
            version: 1,
            description: "time integral of sin x along the path, zero driver; heat-semigroup closed form",
            kind: FixtureKind::Integral {
                semigroup: HeatSemigroup::Sine,
                rate: 0.0,
            },
        },
        Fixture {
            id: "heat-quadratic",
            version: 1,
            description: "squared terminal value, zero driver; u = x^2 + T - t",
            kind: FixtureKind::HeatQuadratic,
        },
        Fixture {
            id: "integral-plus-square",
            version: 1,
            description: "u = running integral plus squared current value; exact derivatives for the Ito expansion",
            kind: FixtureKind::IntegralPlusSquare,
        },
        Fixture {
            id: "cascade-x2",
            version: 1,
            description: "two-stage map (x, y) -> x^2 split at 0.5; u = x^2 + (0.5 - t) before the split",
            kind: FixtureKind::Cascade { split: 0.5, on_x: true },
        },
        Fixture {
            id: "cascade-y2",
            version: 1,
            description: "two-stage map (x, y) -> y^2 split at 0.5; u = T - 0.5 before the split",
            kind: FixtureKind::Cascade { split: 0.5, on_x: false },
        },
    ]
}

pub fn find(id: &str) -> Option<Fixture> {
    catalogue().into_iter().find(|f| f.id == id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::numeric_bundle;
    use crate::path::CadlagPath;
    use crate::ppde::ppde_residual;

    #[test]
    fn catalogue_contents() {
        let ids: Vec<&str> = catalogue().iter().map(|f| f.id).collect();
        assert!(ids.len() >= 6);
        for id in ["linear-c0.1-sq", "integral-x2-c0", "martingale-terminal"] {
            assert!(ids.contains(&id));
        }
        let mut sorted = ids.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), ids.len());
        assert!(find("nope").is_none());
    }

    #[test]
    fn bundles_solve_their_ppde() {
        let p = CadlagPath::scalar(vec![0.0, 0.2, 0.3], vec![0.5, -0.2, 0.9]).unwrap();
        let late = CadlagPath::scalar(vec![0.0, 0.5, 0.7], vec![0.5, -0.2, 0.9]).unwrap();
        for fx in catalogue() {
            let Ok(problem) = fx.problem(1.0) else {
                assert!(matches!(fx.kind, FixtureKind::IntegralPlusSquare));
                continue;
            };
            for path in [&p, &late] {
                let r = ppde_residual(&|q| fx.bundle(q, 1.0), &problem, path.view()).unwrap();
                assert!(r.abs() < 1e-12, "{}: {r}", fx.id);
            }
        }
    }

    #[test]
    fn exact_bundles_match_finite_differences() {
        let p = CadlagPath::scalar(vec![0.0, 0.2, 0.3], vec![0.5, -0.2, 0.9]).unwrap();
        for fx in catalogue() {
            let f = crate::calculus::functionals::FnFunctional::new("u", 2.0, {
                let fx = fx.clone();
                move |q| fx.closed_form(q, 1.0).unwrap_or(f64::NAN)
            });
            let exact = fx.bundle(p.view(), 1.0).unwrap();
            let num = numeric_bundle(&f, p.view(), 1e-3, 1e-5, 1.0).unwrap();
            assert!((exact.vertical[0] - num.vertical[0]).abs() < 1e-5, "{}", fx.id);
            assert!((exact.hessian[0] - num.hessian[0]).abs() < 1e-3, "{}", fx.id);
            assert!((exact.horizontal - num.horizontal).abs() < 1e-3, "{}", fx.id);
        }
    }
}
