//! Closed-form reference solutions.
//!
//! Two families are covered. For the linear driver `f = c(s) y` the solution
//! is `E[Φ(B^{γ_t})] · exp(∫_t^T c)`. For the integral terminal
//! `Φ(γ) = ∫_0^T φ(γ(s)) ds` with the same driver, conditioning on `γ_t` gives
//!
//! ```text
//! u(γ_t) = e · (∫_0^t φ(γ(s)) ds + ∫_t^T H(s - t, γ(t)) ds),   e = exp(∫_t^T c)
//! ```
//!
//! where `H(τ, x) = E[φ(x + N(0, τ))]` is the heat semigroup applied to `φ`.
//! The vertical derivatives differentiate `H` in `x` under the integral and the
//! horizontal derivative is `-c(t) u + e (φ(γ(t)) - H(T - t, γ(t)))`.

use std::fmt;
use std::sync::Arc;

use crate::brownian::{cumulate, simulate, SimulationConfig};
use crate::bsde::{LinearGenerator, Polynomial};
use crate::calculus::functionals::FnFunctional;
use crate::calculus::{DerivativeBundle, Functional};
use crate::error::{Error, Result};
use crate::path::{times_match, PathView};
use crate::stats::{mean, standard_error};

/// Terminal functionals accepted by [`linear_oracle_value`].
#[derive(Clone)]
pub enum LinearTerminal {
    /// `γ(T)_0`.
    Terminal,
    /// `|γ(T)|²`.
    TerminalSquare,
    /// Anything else, estimated by plain Monte Carlo.
    Custom(Arc<dyn Functional>),
}

impl fmt::Debug for LinearTerminal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LinearTerminal::Terminal => f.write_str("Terminal"),
            LinearTerminal::TerminalSquare => f.write_str("TerminalSquare"),
            LinearTerminal::Custom(u) => write!(f, "Custom({})", u.name()),
        }
    }
}

/// `f(γ_s, y, z) = c(s) y` with terminal `Φ`.
#[derive(Debug, Clone)]
pub struct LinearGeneratorFixture {
    pub rate: Polynomial,
    pub terminal: LinearTerminal,
}

impl LinearGeneratorFixture {
    pub fn new(rate: Polynomial, terminal: LinearTerminal) -> Self {
        Self { rate, terminal }
    }

    pub fn generator(&self, horizon: f64) -> LinearGenerator {
        LinearGenerator::new(self.rate.clone(), horizon)
    }

    pub fn terminal_functional(&self) -> Arc<dyn Functional> {
        match &self.terminal {
            LinearTerminal::Terminal => Arc::new(crate::calculus::functionals::terminal_component(0)),
            LinearTerminal::TerminalSquare => Arc::new(crate::calculus::functionals::terminal_square()),
            LinearTerminal::Custom(u) => Arc::clone(u),
        }
    }

    /// `exp(∫_t^T c)`.
    pub fn discount(&self, t: f64, horizon: f64) -> f64 {
        self.rate.integrate(t, horizon).exp()
    }
}

/// `E[Φ(B^{γ_t})] · exp(∫_t^T c)` with `T = sim.grid.end()`.
///
/// Gaussian closed forms give standard error 0. Custom terminals use the
/// batch drawn from `sim`, whose grid must start at the horizon of `γ_t`.
pub fn linear_oracle_value(
    fx: &LinearGeneratorFixture,
    path: PathView<'_>,
    sim: &SimulationConfig,
) -> Result<(f64, f64)> {
    let t = path.horizon();
    let horizon = sim.grid.end();
    let e = fx.discount(t, horizon);
    let x = path.terminal();
    match &fx.terminal {
        LinearTerminal::Terminal => Ok((x[0] * e, 0.0)),
        LinearTerminal::TerminalSquare => {
            let sq: f64 = x.iter().map(|v| v * v).sum();
            Ok(((sq + x.len() as f64 * (horizon - t)) * e, 0.0))
        }
        LinearTerminal::Custom(phi) => {
            let batch = simulate(sim)?;
            let values = cumulate(&batch, path)?
                .iter()
                .map(|p| phi.evaluate(p.view()))
                .collect::<Result<Vec<f64>>>()?;
            Ok((mean(&values) * e, standard_error(&values) * e))
        }
    }
}

type ScalarFn = dyn Fn(f64, f64) -> f64 + Send + Sync;

/// `H(τ, x) = E[φ(x + N(0, τ))]` together with `∂_x H` and `∂_xx H`.
#[derive(Clone)]
pub enum HeatSemigroup {
    /// `φ(x) = x²`, `H = x² + τ`.
    Square,
    /// `φ(x) = sin x`, `H = e^{-τ/2} sin x`.
    Sine,
    /// User-supplied `H`, `∂_x H`, `∂_xx H`; `τ`-integrals use Simpson's rule.
    Custom {
        name: String,
        h: Arc<ScalarFn>,
        dh: Arc<ScalarFn>,
        d2h: Arc<ScalarFn>,
    },
}

impl fmt::Debug for HeatSemigroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// Panels of the composite Simpson rule used without closed-form integrals.
pub const SIMPSON_PANELS: usize = 256;

impl HeatSemigroup {
    pub fn custom(
        name: impl Into<String>,
        h: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        dh: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        d2h: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        HeatSemigroup::Custom {
            name: name.into(),
            h: Arc::new(h),
            dh: Arc::new(dh),
            d2h: Arc::new(d2h),
        }
    }

    pub fn name(&self) -> String {
        match self {
            HeatSemigroup::Square => "x^2".into(),
            HeatSemigroup::Sine => "sin".into(),
            HeatSemigroup::Custom { name, .. } => name.clone(),
        }
    }

    pub fn phi(&self, x: f64) -> f64 {
        self.h(0.0, x)
    }

    pub fn h(&self, tau: f64, x: f64) -> f64 {
        match self {
            HeatSemigroup::Square => x * x + tau,
            HeatSemigroup::Sine => (-0.5 * tau).exp() * x.sin(),
            HeatSemigroup::Custom { h, .. } => h(tau, x),
        }
    }

    pub fn dh(&self, tau: f64, x: f64) -> f64 {
        match self {
            HeatSemigroup::Square => 2.0 * x,
            HeatSemigroup::Sine => (-0.5 * tau).exp() * x.cos(),
            HeatSemigroup::Custom { dh, .. } => dh(tau, x),
        }
    }

    pub fn d2h(&self, tau: f64, x: f64) -> f64 {
        match self {
            HeatSemigroup::Square => 2.0,
            HeatSemigroup::Sine => -(-0.5 * tau).exp() * x.sin(),
            HeatSemigroup::Custom { d2h, .. } => d2h(tau, x),
        }
    }

    /// `[∫_0^L H, ∫_0^L ∂_x H, ∫_0^L ∂_xx H]` in `τ`.
    pub fn tau_integrals(&self, len: f64, x: f64) -> [f64; 3] {
        match self {
            HeatSemigroup::Square => [len * x * x + 0.5 * len * len, 2.0 * x * len, 2.0 * len],
            HeatSemigroup::Sine => {
                let w = 2.0 * (1.0 - (-0.5 * len).exp());
                [w * x.sin(), w * x.cos(), -w * x.sin()]
            }
            HeatSemigroup::Custom { .. } => [
                simpson(|tau| self.h(tau, x), 0.0, len, SIMPSON_PANELS),
                simpson(|tau| self.dh(tau, x), 0.0, len, SIMPSON_PANELS),
                simpson(|tau| self.d2h(tau, x), 0.0, len, SIMPSON_PANELS),
            ],
        }
    }
}

/// Composite Simpson rule with `panels` (rounded up to even) subintervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let n = (panels.max(2) + 1) & !1;
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n)
        .map(|i| {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            w * f(a + i as f64 * h)
        })
        .sum();
    (f(a) + f(b) + inner) * h / 3.0
}

/// `Φ(γ) = ∫_0^T φ(γ(s)) ds` with driver `c(s) y`.
#[derive(Debug, Clone)]
pub struct IntegralTerminalFixture {
    pub semigroup: HeatSemigroup,
    pub rate: Polynomial,
    pub horizon: f64,
}

impl IntegralTerminalFixture {
    pub fn new(semigroup: HeatSemigroup, rate: Polynomial, horizon: f64) -> Self {
        Self {
            semigroup,
            rate,
            horizon,
        }
    }

    pub fn terminal(&self) -> FnFunctional {
        let sg = self.semigroup.clone();
        FnFunctional::new(format!("integral[{}]", sg.name()), 2.0, move |p| p.integral_of(|x| sg.phi(x[0])))
    }

    pub fn generator(&self) -> LinearGenerator {
        LinearGenerator::new(self.rate.clone(), self.horizon)
    }

    /// The closed-form `u` as a path functional.
    pub fn value_functional(&self) -> FnFunctional {
        let fx = self.clone();
        FnFunctional::new(format!("oracle[{}]", self.semigroup.name()), 2.0, move |p| {
            integral_oracle_bundle(&fx, p).map(|b| b.value).unwrap_or(f64::NAN)
        })
    }
}

/// Closed-form value and derivatives of the integral-terminal fixture at `γ_t`.
pub fn integral_oracle_bundle(fx: &IntegralTerminalFixture, path: PathView<'_>) -> Result<DerivativeBundle> {
    if path.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: path.dim(),
        });
    }
    let t = path.horizon();
    let horizon = fx.horizon;
    if t > horizon && !times_match(t, horizon) {
        return Err(Error::domain(format!("path horizon {t} exceeds T={horizon}")));
    }
    let len = (horizon - t).max(0.0);
    let x = path.terminal()[0];
    let sg = &fx.semigroup;
    let e = fx.rate.integrate(t, horizon).exp();
    let past = path.integral_of(|v| sg.phi(v[0]));
    let [j0, j1, j2] = sg.tau_integrals(len, x);
    let value = e * (past + j0);
    Ok(DerivativeBundle {
        value,
        vertical: vec![e * j1],
        hessian: vec![e * j2],
        horizontal: -fx.rate.eval(t) * value + e * (sg.phi(x) - sg.h(len, x)),
        step_vertical: 0.0,
        step_horizontal: 0.0,
    })
}
