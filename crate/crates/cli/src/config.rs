//! Experiment configuration files.
//!
//! Configs are TOML with one table per concern. Only `[experiment]` is
//! required; every other table and key has a default. See `docs/config.md`
//! for the full schema.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use pathfk::fixtures::{self, Fixture};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// The named experiments the runner knows about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Solve,
    VerifyPpde,
    VerifyZ,
    VerifyIto,
    FreezeConverge,
    Compare,
    Cascade,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        ExperimentKind::Solve,
        ExperimentKind::VerifyPpde,
        ExperimentKind::VerifyZ,
        ExperimentKind::VerifyIto,
        ExperimentKind::FreezeConverge,
        ExperimentKind::Compare,
        ExperimentKind::Cascade,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Solve => "solve",
            ExperimentKind::VerifyPpde => "verify-ppde",
            ExperimentKind::VerifyZ => "verify-z",
            ExperimentKind::VerifyIto => "verify-ito",
            ExperimentKind::FreezeConverge => "freeze-converge",
            ExperimentKind::Compare => "compare",
            ExperimentKind::Cascade => "cascade",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| CliError::UnknownKind(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    #[default]
    Regression,
    Picard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QvMode {
    #[default]
    Calendar,
    Pathwise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub kind: String,
    pub fixture: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub horizon: f64,
    pub steps: usize,
    /// Horizon of the starting path (a constant path at `start_value`).
    pub start_time: f64,
    pub start_value: f64,
    /// A path CSV (`time,value_0`) that replaces `start_time`/`start_value`.
    /// Relative paths resolve against the config file's directory.
    pub prefix_csv: Option<PathBuf>,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            horizon: 1.0,
            steps: 50,
            start_time: 0.0,
            start_value: 0.0,
            prefix_csv: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub n_paths: usize,
    pub seed: u64,
    pub antithetic: bool,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            n_paths: 10_000,
            seed: 1,
            antithetic: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasisSection {
    pub degree: usize,
}

impl Default for BasisSection {
    fn default() -> Self {
        Self { degree: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub scheme: Scheme,
    pub picard_iterations: usize,
    pub picard_tolerance: f64,
    pub implicit_correction: bool,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            scheme: Scheme::Regression,
            picard_iterations: 30,
            picard_tolerance: 1e-8,
            implicit_correction: false,
        }
    }
}

/// Finite-difference steps; unset means the library's path-scaled defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FdSection {
    pub h: Option<f64>,
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FreezeSection {
    pub levels: Vec<usize>,
    /// Allowed increase of the error between consecutive levels, in standard errors.
    pub se_slack: f64,
    /// Required ratio between the first and last level's errors.
    pub reduction: f64,
}

impl Default for FreezeSection {
    fn default() -> Self {
        Self {
            levels: vec![1, 2, 4, 8],
            se_slack: 1.0,
            reduction: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ItoSection {
    /// Step counts on `[t, T]`; one residual level per entry.
    pub steps: Vec<usize>,
    pub paths: usize,
    pub min_slope: f64,
    pub qv: QvMode,
}

impl Default for ItoSection {
    fn default() -> Self {
        Self {
            steps: vec![32, 64, 128, 256],
            paths: 200,
            min_slope: 0.4,
            qv: QvMode::Calendar,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZSection {
    /// Times at which the regression `Z` is checked; must be grid nodes.
    pub times: Vec<f64>,
    pub relative_tolerance: f64,
}

impl Default for ZSection {
    fn default() -> Self {
        Self {
            times: vec![0.1, 0.2, 0.3, 0.4, 0.5],
            relative_tolerance: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpdeSection {
    pub random_paths: usize,
    /// How many of the random paths also get a Monte-Carlo residual.
    pub numeric_paths: usize,
    pub analytic_tolerance: f64,
    pub band_factor: f64,
}

impl Default for PpdeSection {
    fn default() -> Self {
        Self {
            random_paths: 20,
            numeric_paths: 3,
            analytic_tolerance: 1e-3,
            band_factor: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareSection {
    pub pairs: usize,
}

impl Default for CompareSection {
    fn default() -> Self {
        Self { pairs: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CascadeSection {
    pub nodes: usize,
    /// PDE time steps over `[0, T]`.
    pub time_steps: usize,
    pub closed_form_tolerance: f64,
    pub mc_relative_tolerance: f64,
}

impl Default for CascadeSection {
    fn default() -> Self {
        Self {
            nodes: 201,
            time_steps: 200,
            closed_form_tolerance: 0.005,
            mc_relative_tolerance: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToleranceSection {
    /// Multiplier on the standard error in `solve` verdicts.
    pub se_factor: f64,
    /// Relative floor in `solve` verdicts: `max(se_factor SE, relative |ref|)`.
    pub relative: f64,
    /// Absolute tolerance on the mean `Z` per step in `solve`.
    pub z_absolute: f64,
}

impl Default for ToleranceSection {
    fn default() -> Self {
        Self {
            se_factor: 3.0,
            relative: 0.0,
            z_absolute: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

/// The file as written, before validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub basis: BasisSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub fd: FdSection,
    #[serde(default)]
    pub freeze: FreezeSection,
    #[serde(default)]
    pub ito: ItoSection,
    #[serde(default)]
    pub z: ZSection,
    #[serde(default)]
    pub ppde: PpdeSection,
    #[serde(default)]
    pub compare: CompareSection,
    #[serde(default)]
    pub cascade: CascadeSection,
    #[serde(default)]
    pub tolerance: ToleranceSection,
    #[serde(default)]
    pub output: OutputSection,
}

/// A validated configuration.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub fixture: Fixture,
    pub raw: RawConfig,
    /// Directory that relative paths in the file resolve against.
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    /// Parses and validates TOML text; `base_dir` anchors relative paths.
    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self, CliError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::Config(e.message().to_string()))?;
        Self::from_raw(raw, base_dir)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base)
    }

    pub fn from_raw(raw: RawConfig, base_dir: impl Into<PathBuf>) -> Result<Self, CliError> {
        let kind: ExperimentKind = raw.experiment.kind.parse()?;
        let fixture =
            fixtures::find(&raw.experiment.fixture).ok_or_else(|| CliError::MissingFixture(raw.experiment.fixture.clone()))?;
        let cfg = Self {
            kind,
            fixture,
            raw,
            base_dir: base_dir.into(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        let r = &self.raw;
        let bad = |msg: String| Err(CliError::Config(msg));
        if !(r.grid.horizon > 0.0) || !r.grid.horizon.is_finite() {
            return bad(format!("grid.horizon must be positive, got {}", r.grid.horizon));
        }
        if r.grid.steps == 0 {
            return bad("grid.steps must be positive".into());
        }
        if !(0.0..r.grid.horizon).contains(&r.grid.start_time) {
            return bad(format!("grid.start_time must lie in [0, T), got {}", r.grid.start_time));
        }
        if !r.grid.start_value.is_finite() {
            return bad("grid.start_value must be finite".into());
        }
        if r.simulation.n_paths < 2 {
            return bad("simulation.n_paths must be at least 2".into());
        }
        if r.basis.degree == 0 {
            return bad("basis.degree must be at least 1".into());
        }
        for (name, v) in [("fd.h", r.fd.h), ("fd.delta", r.fd.delta)] {
            if let Some(v) = v {
                if !(v > 0.0) {
                    return bad(format!("{name} must be positive, got {v}"));
                }
            }
        }
        if r.freeze.levels.is_empty() || r.freeze.levels.contains(&0) {
            return bad("freeze.levels must be non-empty and positive".into());
        }
        if r.ito.steps.len() < 2 || r.ito.steps.contains(&0) || r.ito.paths == 0 {
            return bad("ito.steps needs at least two positive entries and ito.paths must be positive".into());
        }
        if r.z.times.is_empty() {
            return bad("z.times must be non-empty".into());
        }
        if r.cascade.nodes < 3 || r.cascade.time_steps == 0 {
            return bad("cascade.nodes must be >= 3 and cascade.time_steps positive".into());
        }
        if r.solver.picard_iterations == 0 {
            return bad("solver.picard_iterations must be positive".into());
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.raw.simulation.seed
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.raw.simulation.seed = seed;
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.raw.output.dir)
    }

    pub fn set_output_dir(&mut self, dir: PathBuf) {
        self.raw.output.dir = dir;
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// The effective configuration (after overrides) as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(&self.raw).expect("config serializes")
    }
}
