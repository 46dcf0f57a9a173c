//! Batch experiment runner behind the `pathfk` binary.
//!
//! A run loads an [`ExperimentConfig`], executes the named experiment on a
//! dedicated thread pool, and writes `results.csv`, `diagnostics.csv`, any
//! plot-ready extras and `manifest.json` to the output directory. Result
//! bytes depend only on the config and seed, never on the thread count.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiments;
pub mod report;

use std::path::Path;
use std::time::Instant;

use pathfk::fixtures;

pub use config::{ExperimentConfig, ExperimentKind};
pub use error::{CliError, EXIT_CODES};
pub use report::{Manifest, Report, ResultRow, Verdict};

/// Runs the experiment with `threads` workers (0 means rayon's default).
pub fn execute(cfg: &ExperimentConfig, threads: usize) -> Result<Report, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(format!("cannot build thread pool: {e}")))?;
    pool.install(|| experiments::run(cfg))
}

/// [`execute`] plus artifacts on disk.
///
/// Artifacts are written even when verdicts fail; the failure count is in the
/// returned report and the manifest.
pub fn run(cfg: &ExperimentConfig, threads: usize) -> Result<(Report, Manifest), CliError> {
    let dir = cfg.output_dir();
    report::prepare_output_dir(&dir)?;
    let start = Instant::now();
    let report = execute(cfg, threads)?;
    let used = if threads == 0 { rayon::current_num_threads() } else { threads };
    let manifest = report::write_outputs(&dir, cfg, &report, start.elapsed(), used)?;
    Ok((report, manifest))
}

/// Writes the Brownian increments the experiment's main batch would use.
pub fn export_batch(cfg: &ExperimentConfig, dest: &Path) -> Result<(), CliError> {
    let path = experiments::start_path(cfg)?;
    let batch = experiments::batch_for(cfg, &path)?;
    let file = std::fs::File::create(dest).map_err(|e| CliError::Io(format!("{}: {e}", dest.display())))?;
    batch.write_csv(std::io::BufWriter::new(file))?;
    Ok(())
}

/// The fixture catalogue as a text table.
pub fn list_fixtures() -> String {
    let catalogue = fixtures::catalogue();
    let width = catalogue.iter().map(|f| f.id.len()).max().unwrap_or(0);
    let mut out = format!(
        "{:width$}  version  closed-form  description\n",
        "id",
        width = width
    );
    for f in &catalogue {
        out.push_str(&format!(
            "{:width$}  {:>7}  {:>11}  {}\n",
            f.id,
            f.version,
            if f.has_closed_form() { "yes" } else { "no" },
            f.description,
            width = width
        ));
    }
    out.push_str(&format!(
        "{} fixtures, catalogue version {}\n",
        catalogue.len(),
        fixtures::CATALOGUE_VERSION
    ));
    out
}
