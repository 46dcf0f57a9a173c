//! Step-path representation of càdlàg paths and the operators acting on them.
//!
//! A [`CadlagPath`] is a finite list of breakpoints `0 = t_0 < ... < t_m = t`
//! with one point of `R^d` per breakpoint. Between breakpoints the path is
//! constant (right-continuous), and the horizon `t` is always the last
//! breakpoint, so the terminal position `γ(t)` is the last stored value.
//!
//! Solvers work on borrowed [`PathView`]s; truncating a path to one of its own
//! breakpoints is a slice operation, which is how grid prefixes of simulated
//! paths are produced without copying.

use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Relative tolerance used when matching times produced by different grids.
pub const TIME_EPS: f64 = 1e-12;

pub(crate) fn time_tol(a: f64, b: f64) -> f64 {
    TIME_EPS * a.abs().max(b.abs()).max(1.0)
}

pub(crate) fn times_match(a: f64, b: f64) -> bool {
    (a - b).abs() <= time_tol(a, b)
}

/// Uniform time grid `t0 + k (end - t0) / steps`, `k = 0..=steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t0: f64,
    end: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, end: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidConfig("time grid needs at least one step".into()));
        }
        if !(t0.is_finite() && end.is_finite()) || end <= t0 || t0 < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "time grid requires 0 <= t0 < end, got [{t0}, {end}]"
            )));
        }
        Ok(Self { t0, end, steps })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        (self.end - self.t0) / self.steps as f64
    }

    /// Node `k`; the last node is exactly `end`.
    pub fn node(&self, k: usize) -> f64 {
        if k >= self.steps {
            self.end
        } else {
            self.t0 + k as f64 * self.dt()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.node(k)).collect()
    }

    /// Index of the node equal to `t` (up to [`TIME_EPS`]), if any.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let k = ((t - self.t0) / self.dt()).round();
        if k < 0.0 || k > self.steps as f64 {
            return None;
        }
        let k = k as usize;
        times_match(self.node(k), t).then_some(k)
    }

    /// The grid restricted to nodes `offset..=steps`.
    pub fn tail(&self, offset: usize) -> Result<Self> {
        if offset >= self.steps {
            return Err(Error::domain(format!(
                "grid offset {offset} leaves no steps (grid has {})",
                self.steps
            )));
        }
        Ok(Self {
            t0: self.node(offset),
            end: self.end,
            steps: self.steps - offset,
        })
    }
}

/// An owned step path. See the module docs for the representation.
#[derive(Debug, Clone, PartialEq)]
pub struct CadlagPath {
    times: Vec<f64>,
    values: Vec<f64>,
    dim: usize,
}

impl CadlagPath {
    /// Builds a path from breakpoint times and row-major values (`times.len() * dim`).
    pub fn new(times: Vec<f64>, values: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("path dimension must be positive".into()));
        }
        if times.is_empty() {
            return Err(Error::InvalidConfig("path needs at least one breakpoint".into()));
        }
        if values.len() != times.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: times.len() * dim,
                got: values.len(),
            });
        }
        if times[0] != 0.0 {
            return Err(Error::InvalidConfig(format!(
                "first breakpoint must be 0, got {}",
                times[0]
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidConfig("breakpoints must be strictly increasing".into()));
        }
        if times.iter().chain(values.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("path contains non-finite entries".into()));
        }
        Ok(Self { times, values, dim })
    }

    pub fn from_points(times: Vec<f64>, points: &[Vec<f64>]) -> Result<Self> {
        let dim = points.first().map(|p| p.len()).unwrap_or(0);
        if let Some(bad) = points.iter().find(|p| p.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.len(),
            });
        }
        Self::new(times, points.concat(), dim)
    }

    /// One-dimensional path from scalar values.
    pub fn scalar(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        Self::new(times, values, 1)
    }

    /// Constant path `c` on `[0, horizon]`.
    pub fn constant(point: &[f64], horizon: f64) -> Result<Self> {
        if horizon < 0.0 {
            return Err(Error::domain(format!("negative horizon {horizon}")));
        }
        if horizon == 0.0 {
            return Self::new(vec![0.0], point.to_vec(), point.len());
        }
        Self::new(vec![0.0, horizon], [point, point].concat(), point.len())
    }

    pub fn view(&self) -> PathView<'_> {
        PathView {
            times: &self.times,
            values: &self.values,
            dim: self.dim,
        }
    }

    pub fn horizon(&self) -> f64 {
        self.view().horizon()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn terminal(&self) -> &[f64] {
        let n = self.times.len();
        &self.values[(n - 1) * self.dim..]
    }

    /// Writes the path as CSV with header `time,value_0,...,value_{d-1}`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["time".to_string()];
        header.extend((0..self.dim).map(|i| format!("value_{i}")));
        w.write_record(&header)?;
        for (i, t) in self.times.iter().enumerate() {
            let mut row = vec![format!("{t:e}")];
            row.extend(self.view().point(i).iter().map(|v| format!("{v:e}")));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the CSV format produced by [`CadlagPath::write_csv`]; the horizon is the last time.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = r.headers()?.clone();
        if headers.get(0) != Some("time") || headers.len() < 2 {
            return Err(Error::InvalidConfig(
                "path csv header must be `time,value_0,...`".into(),
            ));
        }
        let dim = headers.len() - 1;
        let mut times = Vec::new();
        let mut values = Vec::new();
        for record in r.records() {
            let record = record?;
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::InvalidConfig(format!("bad number `{s}` in path csv: {e}")))
            };
            times.push(parse(&record[0])?);
            for field in record.iter().skip(1) {
                values.push(parse(field)?);
            }
        }
        Self::new(times, values, dim)
    }
}

impl<'a> From<&'a CadlagPath> for PathView<'a> {
    fn from(p: &'a CadlagPath) -> Self {
        p.view()
    }
}

/// Borrowed view of a step path.
#[derive(Debug, Clone, Copy)]
pub struct PathView<'a> {
    times: &'a [f64],
    values: &'a [f64],
    dim: usize,
}

impl<'a> PathView<'a> {
    pub fn horizon(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &'a [f64] {
        self.times
    }

    pub fn point(&self, i: usize) -> &'a [f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn terminal(&self) -> &'a [f64] {
        self.point(self.times.len() - 1)
    }

    /// Truncation to the first `len` breakpoints; the new horizon is `times[len - 1]`.
    pub fn prefix(&self, len: usize) -> PathView<'a> {
        assert!(len >= 1 && len <= self.times.len(), "prefix length out of range");
        PathView {
            times: &self.times[..len],
            values: &self.values[..len * self.dim],
            dim: self.dim,
        }
    }

    pub fn to_owned_path(&self) -> CadlagPath {
        CadlagPath {
            times: self.times.to_vec(),
            values: self.values.to_vec(),
            dim: self.dim,
        }
    }

    fn index_at(&self, s: f64) -> usize {
        self.times.partition_point(|&x| x <= s) - 1
    }

    // Greatest breakpoint <= s, treating breakpoints within TIME_EPS of s as equal to it.
    fn index_at_tol(&self, s: f64) -> usize {
        self.times.partition_point(|&x| x <= s + time_tol(x, s)) - 1
    }

    /// Right-continuous evaluation `γ(s)` for `s ∈ [0, horizon]`.
    pub fn value_at(&self, s: f64) -> Result<&'a [f64]> {
        if !(0.0..=self.horizon()).contains(&s) {
            return Err(Error::domain(format!(
                "time {s} outside [0, {}]",
                self.horizon()
            )));
        }
        Ok(self.point(self.index_at(s)))
    }

    /// `sup_r |γ(r)|`, attained at a breakpoint.
    pub fn sup_norm(&self) -> f64 {
        (0..self.len())
            .map(|i| norm(self.point(i)))
            .fold(0.0, f64::max)
    }

    /// `∫_0^t g(γ(s)) ds`, exact for the step representation.
    pub fn integral_of(&self, g: impl Fn(&[f64]) -> f64) -> f64 {
        self.times
            .windows(2)
            .enumerate()
            .map(|(i, w)| g(self.point(i)) * (w[1] - w[0]))
            .sum()
    }

    /// `∫_0^t γ_c(s) ds` for component `c`.
    pub fn running_integral(&self, c: usize) -> f64 {
        let d = self.dim;
        self.times
            .windows(2)
            .enumerate()
            .map(|(i, w)| self.values[i * d + c] * (w[1] - w[0]))
            .sum()
    }

    pub fn running_max(&self, c: usize) -> f64 {
        (0..self.len())
            .map(|i| self.values[i * self.dim + c])
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// The path distance
/// `max(sup_{[0,t)} |a - b|, sup_{[t, t̄]} |a(t) - b(r)|) + |t - t̄|`,
/// with the arguments ordered so that `t <= t̄`.
///
/// Both paths are step functions, so the suprema are attained on the union of
/// their breakpoints and the result is exact.
pub fn d_infinity(a: PathView<'_>, b: PathView<'_>) -> Result<f64> {
    check_dim(a.dim(), b.dim())?;
    let (a, b) = if a.horizon() <= b.horizon() { (a, b) } else { (b, a) };
    let t = a.horizon();
    let t_bar = b.horizon();

    let mut union: Vec<f64> = a
        .times()
        .iter()
        .chain(b.times())
        .copied()
        .filter(|&r| r < t)
        .collect();
    union.sort_by(f64::total_cmp);
    union.dedup();
    let before = union
        .iter()
        .map(|&r| dist(a.point(a.index_at(r)), b.point(b.index_at(r))))
        .fold(0.0, f64::max);

    let at_t = a.terminal();
    let mut after = dist(at_t, b.point(b.index_at(t)));
    for (i, &r) in b.times().iter().enumerate() {
        if r > t && r <= t_bar {
            after = after.max(dist(at_t, b.point(i)));
        }
    }
    Ok(before.max(after) + (t - t_bar).abs())
}

/// `γ_t^x`: the same path with the terminal value shifted by `x`.
pub fn vertical_bump(path: PathView<'_>, x: &[f64]) -> Result<CadlagPath> {
    check_dim(path.dim(), x.len())?;
    let mut out = path.to_owned_path();
    let n = out.times.len();
    for (v, dx) in out.values[(n - 1) * out.dim..].iter_mut().zip(x) {
        *v += dx;
    }
    Ok(out)
}

/// `γ_{t,s}`: the path continued flat at its terminal value up to `s >= t`.
pub fn horizontal_extension(path: PathView<'_>, s: f64) -> Result<CadlagPath> {
    let t = path.horizon();
    if s < t - time_tol(s, t) || !s.is_finite() {
        return Err(Error::domain(format!(
            "extension time {s} precedes horizon {t}"
        )));
    }
    let mut out = path.to_owned_path();
    if s > t + time_tol(s, t) {
        out.times.push(s);
        out.values.extend_from_slice(path.terminal());
    }
    Ok(out)
}

/// `B^{γ_t}`: the prefix followed by `γ(t)` plus cumulated Brownian increments.
///
/// `increments` holds `grid.steps() * d` values, row `k` being the increment
/// over `[node(k), node(k+1)]`. The grid must start at the prefix horizon.
pub fn splice_brownian(
    prefix: PathView<'_>,
    grid: &TimeGrid,
    increments: &[f64],
) -> Result<CadlagPath> {
    let d = prefix.dim();
    if !times_match(grid.t0(), prefix.horizon()) {
        return Err(Error::domain(format!(
            "grid starts at {} but prefix horizon is {}",
            grid.t0(),
            prefix.horizon()
        )));
    }
    check_dim(grid.steps() * d, increments.len())?;
    let mut out = prefix.to_owned_path();
    out.times.reserve(grid.steps());
    out.values.reserve(grid.steps() * d);
    let mut current = prefix.terminal().to_vec();
    for (k, inc) in increments.chunks_exact(d).enumerate() {
        for (c, dx) in current.iter_mut().zip(inc) {
            *c += dx;
        }
        out.times.push(grid.node(k + 1));
        out.values.extend_from_slice(&current);
    }
    Ok(out)
}

/// Piecewise-constant projection `γ^n` anchored at `anchor` on the grid
/// `t_k = anchor + k (horizon - anchor) / n`.
///
/// The output agrees with the input on `[0, anchor)`. On `[t_k ∧ s, t_{k+1} ∧ s)`
/// it takes the input's value at the right endpoint `t_{k+1} ∧ s`, and at `s`
/// (the path horizon) it keeps the terminal value. Note the right-endpoint
/// rule shifts values one cell back, so the map is not idempotent.
pub fn freeze(path: PathView<'_>, anchor: f64, horizon: f64, n: usize) -> Result<CadlagPath> {
    if n == 0 {
        return Err(Error::domain("freezing level n must be positive"));
    }
    let s = path.horizon();
    if anchor < 0.0 || s < anchor - time_tol(s, anchor) || horizon < s - time_tol(s, horizon) {
        return Err(Error::domain(format!(
            "freeze requires 0 <= anchor <= s <= T, got anchor={anchor}, s={s}, T={horizon}"
        )));
    }
    let d = path.dim();
    let mut times = Vec::new();
    let mut values = Vec::new();
    for i in 0..path.len() {
        let r = path.times()[i];
        if r < anchor - time_tol(r, anchor) {
            times.push(r);
            values.extend_from_slice(path.point(i));
        }
    }
    let node = |k: usize| anchor + (horizon - anchor) * (k as f64 / n as f64);
    for k in 0..n {
        let left = node(k);
        if left >= s - time_tol(left, s) {
            break;
        }
        let right = if k + 1 == n { horizon } else { node(k + 1) };
        let probe = right.min(s);
        times.push(left);
        values.extend_from_slice(path.point(path.index_at_tol(probe)));
    }
    times.push(s);
    values.extend_from_slice(path.terminal());
    CadlagPath::new(times, values, d)
}
