use std::fmt;
use std::sync::Arc;

use super::Generator;
use crate::path::PathView;

/// A polynomial `a_0 + a_1 t + a_2 t² + ...`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(vec![c])
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
    }

    /// `∫_a^b p(r) dr` via the exact antiderivative.
    pub fn integrate(&self, a: f64, b: f64) -> f64 {
        let anti = |t: f64| {
            self.coeffs
                .iter()
                .enumerate()
                .rev()
                .fold(0.0, |acc, (k, c)| acc * t + c / (k + 1) as f64)
                * t
        };
        anti(b) - anti(a)
    }

    /// `sup_{[a, b]} |p|`, bounded by the sum of coefficient magnitudes times powers.
    pub fn abs_bound(&self, a: f64, b: f64) -> f64 {
        let m = a.abs().max(b.abs());
        self.coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| c.abs() * m.powi(k as i32))
            .sum()
    }
}

/// `f ≡ 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroGenerator;

impl Generator for ZeroGenerator {
    fn name(&self) -> &str {
        "zero"
    }
    fn evaluate(&self, _path: PathView<'_>, _y: f64, _z: &[f64]) -> f64 {
        0.0
    }
    fn lipschitz_y(&self) -> f64 {
        0.0
    }
    fn lipschitz_z(&self) -> f64 {
        0.0
    }
}

/// `f(γ_s, y, z) = c(s) y`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGenerator {
    pub rate: Polynomial,
    lipschitz: f64,
}

impl LinearGenerator {
    /// `horizon` bounds the times at which the rate is evaluated (for the Lipschitz constant).
    pub fn new(rate: Polynomial, horizon: f64) -> Self {
        let lipschitz = rate.abs_bound(0.0, horizon);
        Self { rate, lipschitz }
    }

    pub fn constant(c: f64) -> Self {
        Self {
            rate: Polynomial::constant(c),
            lipschitz: c.abs(),
        }
    }
}

impl Generator for LinearGenerator {
    fn name(&self) -> &str {
        "linear"
    }
    fn evaluate(&self, path: PathView<'_>, y: f64, _z: &[f64]) -> f64 {
        self.rate.eval(path.horizon()) * y
    }
    fn lipschitz_y(&self) -> f64 {
        self.lipschitz
    }
    fn lipschitz_z(&self) -> f64 {
        0.0
    }
    fn growth_order(&self) -> f64 {
        1.0
    }
}

type GenFn = dyn Fn(PathView<'_>, f64, &[f64]) -> f64 + Send + Sync;

/// A generator given by a closure with declared Lipschitz constants.
#[derive(Clone)]
pub struct FnGenerator {
    name: String,
    lipschitz_y: f64,
    lipschitz_z: f64,
    growth_order: f64,
    f: Arc<GenFn>,
}

impl FnGenerator {
    pub fn new(
        name: impl Into<String>,
        lipschitz_y: f64,
        lipschitz_z: f64,
        f: impl Fn(PathView<'_>, f64, &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            lipschitz_y,
            lipschitz_z,
            growth_order: 1.0,
            f: Arc::new(f),
        }
    }

    pub fn with_growth_order(mut self, q: f64) -> Self {
        self.growth_order = q;
        self
    }
}

impl fmt::Debug for FnGenerator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnGenerator")
            .field("name", &self.name)
            .field("lipschitz_y", &self.lipschitz_y)
            .field("lipschitz_z", &self.lipschitz_z)
            .finish()
    }
}

impl Generator for FnGenerator {
    fn name(&self) -> &str {
        &self.name
    }
    fn evaluate(&self, path: PathView<'_>, y: f64, z: &[f64]) -> f64 {
        (self.f)(path, y, z)
    }
    fn lipschitz_y(&self) -> f64 {
        self.lipschitz_y
    }
    fn lipschitz_z(&self) -> f64 {
        self.lipschitz_z
    }
    fn growth_order(&self) -> f64 {
        self.growth_order
    }
}
