//! Two-stage parabolic cascade for functionals of `(γ(t̄), γ(T) - γ(t̄))`.
//!
//! For `Φ(γ) = φ(γ(t̄), γ(T) - γ(t̄))` the solution splits into
//!
//! ```text
//! stage 2, s ∈ [t̄, T]:  ∂_s v₂ + ½ ∂_yy v₂ + f̄₂(s, x, y, v₂, ∂_y v₂) = 0,  v₂(T, x, y) = φ(x, y)
//! stage 1, s ∈ [t, t̄]:  ∂_s v₁ + ½ ∂_xx v₁ + f̄₁(s, x, v₁, ∂_x v₁) = 0,  v₁(t̄, x) = v₂(t̄, x, 0)
//! ```
//!
//! with `u(γ_s) = v₁(s, γ(s))` before `t̄` and `v₂(s, γ(t̄), γ(s) - γ(t̄))` after.
//! In stage 2 only `y` diffuses; `x` is a parameter carried on its own mesh.
//!
//! Each stage is marched backward with Crank-Nicolson (weight ½) in the
//! diffusive variable and the generator taken explicitly from the later time
//! layer. Boundary nodes keep their terminal values (Dirichlet). Meshes are
//! centred on the evaluation point so it is always a node.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use crate::bsde::Generator;
use crate::calculus::functionals::FnFunctional;
use crate::error::{Error, Result};
use crate::path::{times_match, PathView};
use crate::ppde::PpdeProblem;

pub type TerminalMap = dyn Fn(f64, f64) -> f64 + Send + Sync;
/// `f̄₁(s, x, v, ∂_x v)`.
pub type StageOneDriver = dyn Fn(f64, f64, f64, f64) -> f64 + Send + Sync;
/// `f̄₂(s, x, y, v, ∂_y v)`.
pub type StageTwoDriver = dyn Fn(f64, f64, f64, f64, f64) -> f64 + Send + Sync;

/// Spatial extent of the meshes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain {
    /// Centred on the evaluation point; `None` means `6 √T`.
    Centred { half_width: Option<f64> },
    /// A fixed `x` interval; `y` stays centred. Values at `γ` are interpolated linearly.
    Fixed { x_min: f64, x_max: f64 },
}

#[derive(Clone)]
pub struct CascadeSpec {
    pub name: String,
    pub split: f64,
    pub horizon: f64,
    pub phi: Arc<TerminalMap>,
    pub stage_one: Option<Arc<StageOneDriver>>,
    pub stage_two: Option<Arc<StageTwoDriver>>,
    /// Declared Lipschitz constants of the drivers in `(v, ∂v)`.
    pub lipschitz: (f64, f64),
    pub domain: Domain,
    /// Nodes per spatial axis (made odd).
    pub nodes: usize,
    /// Target PDE time step.
    pub dt: f64,
}

impl fmt::Debug for CascadeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CascadeSpec")
            .field("name", &self.name)
            .field("split", &self.split)
            .field("horizon", &self.horizon)
            .field("domain", &self.domain)
            .field("nodes", &self.nodes)
            .field("dt", &self.dt)
            .finish()
    }
}

impl CascadeSpec {
    /// Driver-free cascade with 201 nodes per axis and `dt = T / 200`.
    pub fn new(name: impl Into<String>, split: f64, horizon: f64, phi: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            split,
            horizon,
            phi: Arc::new(phi),
            stage_one: None,
            stage_two: None,
            lipschitz: (0.0, 0.0),
            domain: Domain::Centred { half_width: None },
            nodes: 201,
            dt: horizon / 200.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0) || !(0.0..=self.horizon).contains(&self.split) {
            return Err(Error::InvalidConfig(format!(
                "cascade needs 0 <= t̄ <= T with T > 0, got t̄={} T={}",
                self.split, self.horizon
            )));
        }
        if self.nodes < 3 || !(self.dt > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "cascade mesh needs >= 3 nodes and dt > 0, got {} and {}",
                self.nodes, self.dt
            )));
        }
        if let Domain::Fixed { x_min, x_max } = self.domain {
            if !(x_max > x_min) {
                return Err(Error::InvalidConfig(format!("empty x domain [{x_min}, {x_max}]")));
            }
        }
        Ok(())
    }

    fn half_width(&self) -> f64 {
        match self.domain {
            Domain::Centred { half_width: Some(w) } => w,
            _ => 6.0 * self.horizon.sqrt(),
        }
    }

    fn odd_nodes(&self) -> usize {
        self.nodes | 1
    }

    /// The same cascade on a domain twice as wide with the same spacing.
    pub fn doubled(&self) -> Self {
        let mut s = self.clone();
        s.nodes = 2 * self.odd_nodes() - 1;
        s.domain = match self.domain {
            Domain::Centred { .. } => Domain::Centred {
                half_width: Some(2.0 * self.half_width()),
            },
            Domain::Fixed { x_min, x_max } => {
                let w = x_max - x_min;
                Domain::Fixed {
                    x_min: x_min - 0.5 * w,
                    x_max: x_max + 0.5 * w,
                }
            }
        };
        s
    }

    /// The equivalent path-dependent problem `(Φ, f)` for Monte-Carlo cross-checks.
    pub fn to_problem(&self) -> Result<PpdeProblem> {
        let split = self.split;
        let phi = Arc::clone(&self.phi);
        let terminal = FnFunctional::new(format!("{}-terminal", self.name), 2.0, move |p| {
            let Ok(a) = p.value_at(split) else { return f64::NAN };
            let a = a[0];
            phi(a, p.terminal()[0] - a)
        });
        let generator = CascadeGenerator {
            name: format!("{}-driver", self.name),
            split,
            stage_one: self.stage_one.clone(),
            stage_two: self.stage_two.clone(),
            lipschitz: self.lipschitz,
        };
        PpdeProblem::new(Arc::new(terminal), Arc::new(generator), self.horizon, 1)
    }
}

struct CascadeGenerator {
    name: String,
    split: f64,
    stage_one: Option<Arc<StageOneDriver>>,
    stage_two: Option<Arc<StageTwoDriver>>,
    lipschitz: (f64, f64),
}

impl Generator for CascadeGenerator {
    fn name(&self) -> &str {
        &self.name
    }

    fn evaluate(&self, path: PathView<'_>, y: f64, z: &[f64]) -> f64 {
        let s = path.horizon();
        let x = path.terminal()[0];
        if s < self.split && !times_match(s, self.split) {
            self.stage_one.as_ref().map_or(0.0, |f| f(s, x, y, z[0]))
        } else {
            let Some(f) = &self.stage_two else { return 0.0 };
            match path.value_at(self.split) {
                Ok(a) => f(s, a[0], x - a[0], y, z[0]),
                Err(_) => f64::NAN,
            }
        }
    }

    fn lipschitz_y(&self) -> f64 {
        self.lipschitz.0
    }

    fn lipschitz_z(&self) -> f64 {
        self.lipschitz.1
    }
}

/// Grid functions and the reconstructed value.
#[derive(Debug, Clone)]
pub struct CascadeSolution {
    pub u: f64,
    pub x_nodes: Vec<f64>,
    pub y_nodes: Vec<f64>,
    /// Times of the stored stage-1 layers, ascending (empty when `t >= t̄`).
    pub v1_times: Vec<f64>,
    /// Row-major `v1_times.len() × nx`.
    pub v1: Vec<f64>,
    /// `(s, layer)` with layers row-major `nx × ny`; the first stage-2 time and `T`.
    pub v2_layers: Vec<(f64, Vec<f64>)>,
}

impl CascadeSolution {
    /// CSV `s,x,v` for stage 1.
    pub fn write_v1_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["s", "x", "v"])?;
        let nx = self.x_nodes.len();
        for (l, s) in self.v1_times.iter().enumerate() {
            for (i, x) in self.x_nodes.iter().enumerate() {
                w.write_record(&[format!("{s:e}"), format!("{x:e}"), format!("{:e}", self.v1[l * nx + i])])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// CSV `s,x,y,v` for the stored stage-2 layers.
    pub fn write_v2_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["s", "x", "y", "v"])?;
        let ny = self.y_nodes.len();
        for (s, layer) in &self.v2_layers {
            for (i, x) in self.x_nodes.iter().enumerate() {
                for (j, y) in self.y_nodes.iter().enumerate() {
                    w.write_record(&[format!("{s:e}"), format!("{x:e}"), format!("{y:e}"), format!("{:e}", layer[i * ny + j])])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn mesh(centre: f64, half_width: f64, nodes: usize) -> Vec<f64> {
    let m = (nodes / 2) as f64;
    let dx = half_width / m;
    (0..nodes).map(|i| centre + (i as f64 - m) * dx).collect()
}

fn interpolate(nodes: &[f64], values: &[f64], x: f64) -> Result<f64> {
    let (lo, hi) = (nodes[0], nodes[nodes.len() - 1]);
    if x < lo || x > hi {
        return Err(Error::domain(format!("evaluation point {x} outside the mesh [{lo}, {hi}]")));
    }
    let dx = nodes[1] - nodes[0];
    let k = (((x - lo) / dx).floor() as usize).min(nodes.len() - 2);
    let w = (x - nodes[k]) / dx;
    Ok((1.0 - w) * values[k] + w * values[k + 1])
}

struct Sweep<'a> {
    spacing: f64,
    nx: usize,
    ny: usize,
    steps: usize,
    // scratch for the tridiagonal solve
    c_prime: &'a mut Vec<f64>,
    d_prime: &'a mut Vec<f64>,
}

impl Sweep<'_> {
    fn failure(&self, reason: impl Into<String>) -> Error {
        Error::Cascade {
            reason: reason.into(),
            nx: self.nx,
            ny: self.ny,
            steps: self.steps,
        }
    }

    /// One backward Crank-Nicolson step of `∂_s v + ½ v'' + src = 0` with fixed end values.
    fn step(&mut self, v: &mut [f64], src: &[f64], dt: f64) -> Result<()> {
        let n = v.len();
        let r = 0.25 * dt / (self.spacing * self.spacing);
        let m = n - 2;
        let (diag, off) = (1.0 + 2.0 * r, -r);
        self.c_prime.resize(m, 0.0);
        self.d_prime.resize(m, 0.0);
        for k in 0..m {
            let j = k + 1;
            let mut rhs = v[j] + r * (v[j - 1] - 2.0 * v[j] + v[j + 1]) + dt * src[j];
            if j == 1 {
                rhs -= off * v[0];
            }
            if j == n - 2 {
                rhs -= off * v[n - 1];
            }
            let (lower, upper) = (if k == 0 { 0.0 } else { off }, if k + 1 == m { 0.0 } else { off });
            let denom = diag - lower * if k == 0 { 0.0 } else { self.c_prime[k - 1] };
            if !(denom.abs() > 1e-300) {
                return Err(self.failure("zero pivot in tridiagonal solve"));
            }
            self.c_prime[k] = upper / denom;
            self.d_prime[k] = (rhs - lower * if k == 0 { 0.0 } else { self.d_prime[k - 1] }) / denom;
        }
        for k in (0..m).rev() {
            let next = if k + 1 < m { v[k + 2] } else { 0.0 };
            v[k + 1] = self.d_prime[k] - self.c_prime[k] * next;
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(self.failure("non-finite value in time step"));
        }
        Ok(())
    }
}

fn gradient(v: &[f64], j: usize, spacing: f64) -> f64 {
    let n = v.len();
    if j == 0 {
        (v[1] - v[0]) / spacing
    } else if j == n - 1 {
        (v[n - 1] - v[n - 2]) / spacing
    } else {
        (v[j + 1] - v[j - 1]) / (2.0 * spacing)
    }
}

fn step_count(len: f64, dt: f64) -> usize {
    if len <= 0.0 {
        0
    } else {
        ((len / dt) - 1e-9).ceil().max(1.0) as usize
    }
}

/// Solves the cascade and evaluates `u` at `γ_t` (scalar paths only).
pub fn cascade_solve(spec: &CascadeSpec, path: PathView<'_>) -> Result<CascadeSolution> {
    spec.validate()?;
    if path.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: path.dim(),
        });
    }
    let t = path.horizon();
    if t > spec.horizon && !times_match(t, spec.horizon) {
        return Err(Error::domain(format!("path horizon {t} exceeds T={}", spec.horizon)));
    }
    let before_split = t < spec.split && !times_match(t, spec.split);
    let (x_eval, y_eval) = if before_split {
        (path.terminal()[0], 0.0)
    } else {
        let a = path.value_at(spec.split)?[0];
        (a, path.terminal()[0] - a)
    };

    let nodes = spec.odd_nodes();
    let w = spec.half_width();
    let x_nodes = match spec.domain {
        Domain::Centred { .. } => mesh(x_eval, w, nodes),
        Domain::Fixed { x_min, x_max } => mesh(0.5 * (x_min + x_max), 0.5 * (x_max - x_min), nodes),
    };
    let y_nodes = mesh(y_eval, w, nodes);
    let (nx, ny) = (x_nodes.len(), y_nodes.len());
    let hx = x_nodes[1] - x_nodes[0];
    let hy = y_nodes[1] - y_nodes[0];

    let stage_two_end = if before_split { spec.split } else { t };
    let m2 = step_count(spec.horizon - stage_two_end, spec.dt);
    let m1 = if before_split { step_count(spec.split - t, spec.dt) } else { 0 };
    let mut c_prime = Vec::new();
    let mut d_prime = Vec::new();
    let mut sweep = Sweep {
        spacing: hy,
        nx,
        ny,
        steps: m1 + m2,
        c_prime: &mut c_prime,
        d_prime: &mut d_prime,
    };

    // stage 2: every x node carries its own problem in y
    let terminal_layer: Vec<f64> = x_nodes
        .iter()
        .flat_map(|&x| y_nodes.iter().map(move |&y| (x, y)))
        .map(|(x, y)| (spec.phi)(x, y))
        .collect();
    if terminal_layer.iter().any(|v| !v.is_finite()) {
        return Err(sweep.failure("terminal map is not finite on the mesh"));
    }
    let mut layer = terminal_layer.clone();
    if m2 > 0 {
        let dt2 = (spec.horizon - stage_two_end) / m2 as f64;
        let mut src = vec![0.0; ny];
        for (i, &x) in x_nodes.iter().enumerate() {
            let v = &mut layer[i * ny..(i + 1) * ny];
            for n in 0..m2 {
                let s_later = spec.horizon - n as f64 * dt2;
                match &spec.stage_two {
                    Some(f) => {
                        for j in 0..ny {
                            src[j] = f(s_later, x, y_nodes[j], v[j], gradient(v, j, hy));
                        }
                    }
                    None => src.iter_mut().for_each(|s| *s = 0.0),
                }
                sweep.step(v, &src, dt2)?;
            }
        }
    }
    let v2_layers = vec![(stage_two_end, layer.clone()), (spec.horizon, terminal_layer)];
    let centre_y = ny / 2;

    if !before_split {
        let row: Vec<f64> = (0..nx)
            .map(|i| interpolate(&y_nodes, &layer[i * ny..(i + 1) * ny], y_eval))
            .collect::<Result<_>>()?;
        let u = interpolate(&x_nodes, &row, x_eval)?;
        return Ok(CascadeSolution {
            u,
            x_nodes,
            y_nodes,
            v1_times: Vec::new(),
            v1: Vec::new(),
            v2_layers,
        });
    }

    // stage 1 in x from v1(t̄, x) = v2(t̄, x, 0)
    sweep.spacing = hx;
    let mut v: Vec<f64> = (0..nx).map(|i| layer[i * ny + centre_y]).collect();
    let dt1 = (spec.split - t) / m1 as f64;
    let mut stored = v.clone();
    let mut times = vec![spec.split];
    let mut src = vec![0.0; nx];
    for n in 0..m1 {
        let s_later = spec.split - n as f64 * dt1;
        match &spec.stage_one {
            Some(f) => {
                for i in 0..nx {
                    src[i] = f(s_later, x_nodes[i], v[i], gradient(&v, i, hx));
                }
            }
            None => src.iter_mut().for_each(|s| *s = 0.0),
        }
        sweep.step(&mut v, &src, dt1)?;
        stored.extend_from_slice(&v);
        times.push(spec.split - (n + 1) as f64 * dt1);
    }
    // ascending time order
    let layers: Vec<&[f64]> = stored.chunks_exact(nx).rev().collect();
    let v1 = layers.concat();
    times.reverse();
    let u = interpolate(&x_nodes, &v, x_eval)?;
    Ok(CascadeSolution {
        u,
        x_nodes,
        y_nodes,
        v1_times: times,
        v1,
        v2_layers,
    })
}

/// `|u(domain) - u(2 × domain)|` at `γ_t`.
pub fn boundary_check(spec: &CascadeSpec, path: PathView<'_>) -> Result<f64> {
    let a = cascade_solve(spec, path)?.u;
    let b = cascade_solve(&spec.doubled(), path)?.u;
    Ok((a - b).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brownian::SimulationConfig;
    use crate::bsde::SolverOptions;
    use crate::path::{CadlagPath, TimeGrid};
    use crate::ppde::u_eval;
    use crate::regression::RegressionBasis;

    fn x_squared() -> CascadeSpec {
        CascadeSpec::new("x2", 0.5, 1.0, |x, _| x * x)
    }

    #[test]
    fn x_squared_diffuses_only_in_stage_one() {
        let spec = x_squared();
        let p = CadlagPath::scalar(vec![0.0, 0.2], vec![0.0, 0.8]).unwrap();
        let sol = cascade_solve(&spec, p.view()).unwrap();
        let exact = 0.64 + 0.3;
        assert!((sol.u - exact).abs() < 1e-3 * exact, "{} vs {exact}", sol.u);
        // v2 at t̄ is still x² (no y dependence)
        let ny = sol.y_nodes.len();
        let (s, layer) = &sol.v2_layers[0];
        assert_eq!(*s, 0.5);
        let i = sol.x_nodes.len() / 2;
        assert!((layer[i * ny + ny / 2] - 0.64).abs() < 1e-12);
        assert!(boundary_check(&spec, p.view()).unwrap() < 1e-6);
    }

    #[test]
    fn y_squared_gives_remaining_variance() {
        let spec = CascadeSpec::new("y2", 0.5, 1.0, |_, y| y * y);
        let p = CadlagPath::scalar(vec![0.0, 0.1], vec![0.0, 1.3]).unwrap();
        let sol = cascade_solve(&spec, p.view()).unwrap();
        assert!((sol.u - 0.5).abs() < 1e-3, "{}", sol.u);
        // v1 is constant in x
        let nx = sol.x_nodes.len();
        let first = &sol.v1[..nx];
        assert!(first[nx / 2 - 20..nx / 2 + 20].iter().all(|v| (v - 0.5).abs() < 1e-3));
    }

    #[test]
    fn paths_past_the_split_use_stage_two() {
        let spec = CascadeSpec::new("y2", 0.5, 1.0, |_, y| y * y);
        let p = CadlagPath::scalar(vec![0.0, 0.5, 0.75], vec![0.0, 1.0, 1.4]).unwrap();
        let sol = cascade_solve(&spec, p.view()).unwrap();
        // v2(s, x, y) = y² + T - s with y = 0.4
        assert!((sol.u - (0.16 + 0.25)).abs() < 1e-3, "{}", sol.u);
        assert!(sol.v1_times.is_empty());
    }

    #[test]
    fn driver_terms_are_applied() {
        // ∂_s v + ½ v'' + c v = 0 with terminal 1: v = e^{c (T - s)}
        let mut spec = CascadeSpec::new("discount", 0.5, 1.0, |_, _| 1.0);
        spec.stage_one = Some(Arc::new(|_, _, v, _| 0.2 * v));
        spec.stage_two = Some(Arc::new(|_, _, _, v, _| 0.2 * v));
        let p = CadlagPath::constant(&[0.0], 0.0).unwrap();
        let sol = cascade_solve(&spec, p.view()).unwrap();
        assert!((sol.u - 0.2f64.exp()).abs() < 1e-3, "{}", sol.u);
    }

    #[test]
    fn fixed_domain_rejects_outside_points() {
        let mut spec = x_squared();
        spec.domain = Domain::Fixed { x_min: -1.0, x_max: 1.0 };
        let inside = CadlagPath::scalar(vec![0.0, 0.2], vec![0.0, 0.3]).unwrap();
        assert!(cascade_solve(&spec, inside.view()).is_ok());
        let outside = CadlagPath::scalar(vec![0.0, 0.2], vec![0.0, 3.0]).unwrap();
        assert!(matches!(cascade_solve(&spec, outside.view()), Err(Error::Domain(_))));
    }

    #[test]
    fn invalid_mesh_is_rejected() {
        let mut spec = x_squared();
        spec.nodes = 1;
        let p = CadlagPath::constant(&[0.0], 0.0).unwrap();
        assert!(matches!(cascade_solve(&spec, p.view()), Err(Error::InvalidConfig(_))));
        let mut bad = x_squared();
        bad.phi = Arc::new(|x, _| if x > 1.0 { f64::NAN } else { 0.0 });
        assert!(matches!(cascade_solve(&bad, p.view()), Err(Error::Cascade { .. })));
    }

    #[test]
    fn csv_exports() {
        let mut spec = x_squared();
        spec.nodes = 5;
        spec.dt = 0.25;
        let p = CadlagPath::constant(&[0.0], 0.0).unwrap();
        let sol = cascade_solve(&spec, p.view()).unwrap();
        let mut a = Vec::new();
        sol.write_v1_csv(&mut a).unwrap();
        let a = String::from_utf8(a).unwrap();
        assert!(a.starts_with("s,x,v\n"));
        assert_eq!(a.lines().count(), 1 + 3 * 5);
        let mut b = Vec::new();
        sol.write_v2_csv(&mut b).unwrap();
        assert_eq!(String::from_utf8(b).unwrap().lines().count(), 1 + 2 * 25);
    }

    #[test]
    fn agrees_with_monte_carlo() {
        let spec = x_squared();
        let p = CadlagPath::scalar(vec![0.0, 0.2], vec![0.0, 0.5]).unwrap();
        let fd = cascade_solve(&spec, p.view()).unwrap().u;
        let problem = spec.to_problem().unwrap();
        let sim = SimulationConfig::new(TimeGrid::new(0.2, 1.0, 16).unwrap(), 1, 4000, 3);
        let (mc, se) = u_eval(&problem, p.view(), &sim, &RegressionBasis::default_for(1), &SolverOptions::default()).unwrap();
        assert!((fd - mc).abs() <= (0.01 * fd).max(3.0 * se), "{fd} vs {mc} ± {se}");
    }
}
