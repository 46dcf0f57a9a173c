//! Closure-backed functionals and the library of named path functionals.

use std::fmt;
use std::sync::Arc;

use super::Functional;
use crate::error::{Error, Result};
use crate::path::PathView;

type PathFn = dyn Fn(PathView<'_>) -> f64 + Send + Sync;

/// A functional defined by a closure, with declared growth `|u| <= C (1 + ||γ||^q)`.
#[derive(Clone)]
pub struct FnFunctional {
    name: String,
    growth_order: f64,
    growth_constant: Option<f64>,
    f: Arc<PathFn>,
}

impl FnFunctional {
    pub fn new(
        name: impl Into<String>,
        growth_order: f64,
        f: impl Fn(PathView<'_>) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            growth_order,
            growth_constant: None,
            f: Arc::new(f),
        }
    }

    pub fn with_growth_constant(mut self, c: f64) -> Self {
        self.growth_constant = Some(c);
        self
    }
}

impl fmt::Debug for FnFunctional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnFunctional")
            .field("name", &self.name)
            .field("growth_order", &self.growth_order)
            .finish()
    }
}

impl Functional for FnFunctional {
    fn name(&self) -> &str {
        &self.name
    }

    fn evaluate(&self, path: PathView<'_>) -> Result<f64> {
        let v = (self.f)(path);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Evaluation {
                name: self.name.clone(),
                reason: format!("non-finite value {v}"),
            })
        }
    }

    fn growth_order(&self) -> f64 {
        self.growth_order
    }

    fn growth_constant(&self) -> Option<f64> {
        self.growth_constant
    }
}

/// `γ(t)_c`.
pub fn terminal_component(c: usize) -> FnFunctional {
    FnFunctional::new(format!("terminal[{c}]"), 1.0, move |p| p.terminal()[c]).with_growth_constant(1.0)
}

/// `|γ(t)|²`.
pub fn terminal_square() -> FnFunctional {
    FnFunctional::new("terminal_sq", 2.0, |p| p.terminal().iter().map(|x| x * x).sum())
        .with_growth_constant(1.0)
}

/// `γ(t)^k` for scalar paths.
pub fn terminal_power(k: i32) -> FnFunctional {
    FnFunctional::new(format!("terminal_pow{k}"), k.max(0) as f64, move |p| p.terminal()[0].powi(k))
        .with_growth_constant(1.0)
}

/// `⟨p, γ(t)⟩`.
pub fn linear_terminal(weights: Vec<f64>) -> FnFunctional {
    let c = weights.iter().map(|w| w * w).sum::<f64>().sqrt();
    FnFunctional::new("linear_terminal", 1.0, move |p| {
        p.terminal().iter().zip(&weights).map(|(x, w)| x * w).sum()
    })
    .with_growth_constant(c)
}

/// `∫_0^t γ_c(s) ds`; the constant holds for horizons up to `max_horizon`.
pub fn running_integral(c: usize, max_horizon: f64) -> FnFunctional {
    FnFunctional::new(format!("integral[{c}]"), 1.0, move |p| p.running_integral(c))
        .with_growth_constant(max_horizon)
}

/// `∫_0^t φ(γ(s)) ds` for a scalar integrand applied to component 0.
pub fn integral_of(
    name: impl Into<String>,
    growth_order: f64,
    phi: impl Fn(f64) -> f64 + Send + Sync + 'static,
) -> FnFunctional {
    FnFunctional::new(name, growth_order, move |p| p.integral_of(|x| phi(x[0])))
}

/// `|γ(t)|² + d (T - t)`, a solution of the heat-type equation `D_t u + ½ tr D_xx u = 0`.
pub fn heat_quadratic(horizon: f64) -> FnFunctional {
    FnFunctional::new("heat_quadratic", 2.0, move |p| {
        let d = p.dim() as f64;
        p.terminal().iter().map(|x| x * x).sum::<f64>() + d * (horizon - p.horizon())
    })
    .with_growth_constant(horizon.max(1.0) * 2.0)
}

/// `∫_0^t γ(s) ds + γ(t)²` (scalar).
pub fn integral_plus_square(max_horizon: f64) -> FnFunctional {
    FnFunctional::new("integral_plus_sq", 2.0, |p| {
        p.running_integral(0) + p.terminal()[0].powi(2)
    })
    .with_growth_constant(1.0 + max_horizon)
}

/// `t · γ(t)` (scalar).
pub fn time_times_terminal(max_horizon: f64) -> FnFunctional {
    FnFunctional::new("time_times_terminal", 1.0, |p| p.horizon() * p.terminal()[0])
        .with_growth_constant(max_horizon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path::CadlagPath;
    use proptest::prelude::*;

    fn library(h: f64) -> Vec<FnFunctional> {
        vec![
            terminal_component(0),
            terminal_square(),
            terminal_power(3),
            linear_terminal(vec![-2.0]),
            running_integral(0, h),
            heat_quadratic(h),
            integral_plus_square(h),
            time_times_terminal(h),
        ]
    }

    #[test]
    fn non_finite_values_are_errors() {
        let bad = FnFunctional::new("bad", 0.0, |_| f64::NAN);
        let p = CadlagPath::constant(&[0.0], 1.0).unwrap();
        assert!(bad.evaluate(p.view()).is_err());
    }

    #[test]
    fn evaluation_is_deterministic() {
        let p = CadlagPath::scalar(vec![0.0, 0.3, 0.9], vec![0.1, -0.4, 1.3]).unwrap();
        for f in library(1.0) {
            assert_eq!(f.evaluate(p.view()).unwrap(), f.evaluate(p.view()).unwrap());
        }
    }

    proptest! {
        #[test]
        fn declared_growth_bounds_hold(
            vals in prop::collection::vec(-20.0f64..20.0, 2..8),
            horizon in 0.05f64..2.0,
        ) {
            let n = vals.len();
            let times: Vec<f64> = (0..n).map(|i| horizon * i as f64 / (n - 1) as f64).collect();
            let p = CadlagPath::scalar(times, vals).unwrap();
            let norm = p.view().sup_norm();
            for f in library(2.0) {
                let c = f.growth_constant().unwrap();
                let v = f.evaluate(p.view()).unwrap();
                prop_assert!(v.abs() <= c * (1.0 + norm.powf(f.growth_order())) + 1e-12, "{}", f.name());
            }
        }
    }
}
