//! Seeded Brownian increments with per-path substreams.
//!
//! Path `i` draws from `ChaCha8Rng::seed_from_u64(seed)` switched to stream
//! `i` (stream `i / 2` for antithetic pairs), so a batch is a pure function of
//! `(seed, n_paths, grid, dimension, antithetic)` no matter how many workers
//! fill it. Gaussian variates come from the Marsaglia polar method applied to
//! the stream's uniform `f64`s; both variates of each accepted pair are used.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::path::{splice_brownian, CadlagPath, PathView, TimeGrid};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationConfig {
    pub grid: TimeGrid,
    pub dimension: usize,
    pub n_paths: usize,
    pub seed: u64,
    pub antithetic: bool,
}

impl SimulationConfig {
    pub fn new(grid: TimeGrid, dimension: usize, n_paths: usize, seed: u64) -> Self {
        Self {
            grid,
            dimension,
            n_paths,
            seed,
            antithetic: false,
        }
    }

    pub fn with_antithetic(mut self, on: bool) -> Self {
        self.antithetic = on;
        self
    }

    /// Same sampling parameters on another grid.
    pub fn with_grid(mut self, grid: TimeGrid) -> Self {
        self.grid = grid;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::InvalidConfig("n_paths must be positive".into()));
        }
        if self.dimension == 0 {
            return Err(Error::InvalidConfig("dimension must be positive".into()));
        }
        if self.grid.steps() == 0 || !(self.grid.dt() > 0.0) {
            return Err(Error::InvalidConfig("grid must have positive steps and dt".into()));
        }
        if self.antithetic && (self.n_paths < 2 || !self.n_paths.is_multiple_of(2)) {
            return Err(Error::InvalidConfig(
                "antithetic sampling needs an even number of paths (>= 2)".into(),
            ));
        }
        Ok(())
    }
}

/// Standard normal sampler (Marsaglia polar method) over any uniform source.
pub struct PolarNormal<R> {
    rng: R,
    spare: Option<f64>,
}

impl<R: Rng> PolarNormal<R> {
    pub fn new(rng: R) -> Self {
        Self { rng, spare: None }
    }

    pub fn sample(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        loop {
            let u = 2.0 * self.rng.random::<f64>() - 1.0;
            let v = 2.0 * self.rng.random::<f64>() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let f = (-2.0 * s.ln() / s).sqrt();
                self.spare = Some(v * f);
                return u * f;
            }
        }
    }
}

/// The normal stream for substream `stream` of `seed`.
pub fn normal_stream(seed: u64, stream: u64) -> PolarNormal<ChaCha8Rng> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    PolarNormal::new(rng)
}

/// Brownian increments, `n_paths × steps × d`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBatch {
    increments: Vec<f64>,
    config: SimulationConfig,
}

impl PathBatch {
    pub fn config(&self) -> &SimulationConfig {
        &self.config
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.config.grid
    }

    pub fn n_paths(&self) -> usize {
        self.config.n_paths
    }

    pub fn steps(&self) -> usize {
        self.config.grid.steps()
    }

    pub fn dim(&self) -> usize {
        self.config.dimension
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// All increments of path `i` (`steps × d`).
    pub fn path_increments(&self, i: usize) -> &[f64] {
        let w = self.steps() * self.dim();
        &self.increments[i * w..(i + 1) * w]
    }

    /// Increment of path `i` over step `k`.
    pub fn increment(&self, i: usize, k: usize) -> &[f64] {
        let d = self.dim();
        &self.path_increments(i)[k * d..(k + 1) * d]
    }

    /// The same Brownian motion restricted to grid nodes `offset..`.
    pub fn tail(&self, offset: usize) -> Result<PathBatch> {
        let grid = self.grid().tail(offset)?;
        let d = self.dim();
        let increments = (0..self.n_paths())
            .flat_map(|i| self.path_increments(i)[offset * d..].iter().copied())
            .collect();
        Ok(PathBatch {
            increments,
            config: self.config.with_grid(grid),
        })
    }

    /// One CSV row per path-step: `path,step,time,inc_0,...`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["path".to_string(), "step".into(), "time".into()];
        header.extend((0..self.dim()).map(|c| format!("inc_{c}")));
        w.write_record(&header)?;
        for i in 0..self.n_paths() {
            for k in 0..self.steps() {
                let mut row = vec![i.to_string(), k.to_string(), format!("{:e}", self.grid().node(k))];
                row.extend(self.increment(i, k).iter().map(|v| format!("{v:e}")));
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

pub fn simulate(config: &SimulationConfig) -> Result<PathBatch> {
    config.validate()?;
    let width = config.grid.steps() * config.dimension;
    let scale = config.grid.dt().sqrt();
    let mut increments = vec![0.0; config.n_paths * width];
    let group = if config.antithetic { 2 } else { 1 };
    increments
        .par_chunks_mut(width * group)
        .enumerate()
        .for_each(|(stream, chunk)| {
            let mut normals = normal_stream(config.seed, stream as u64);
            let (first, rest) = chunk.split_at_mut(width);
            for x in first.iter_mut() {
                *x = scale * normals.sample();
            }
            for (m, x) in rest.iter_mut().zip(first.iter()) {
                *m = -*x;
            }
        });
    Ok(PathBatch {
        increments,
        config: *config,
    })
}

/// Splices every path of the batch onto `prefix` (whose horizon must be the grid start).
pub fn cumulate(batch: &PathBatch, prefix: PathView<'_>) -> Result<Vec<CadlagPath>> {
    if prefix.dim() != batch.dim() {
        return Err(Error::DimensionMismatch {
            expected: batch.dim(),
            got: prefix.dim(),
        });
    }
    (0..batch.n_paths())
        .into_par_iter()
        .map(|i| splice_brownian(prefix, batch.grid(), batch.path_increments(i)))
        .collect()
}
