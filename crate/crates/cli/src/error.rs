use std::fmt;

use serde::Serialize;

/// Runner failures, each with its own process exit code.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    UnknownKind(String),
    MissingFixture(String),
    Solver(pathfk::Error),
    Io(String),
    /// The experiment ran but at least one verdict failed.
    VerdictFail { failed: usize, total: usize },
}

/// Exit codes, in the order they appear in `--help`.
pub const EXIT_CODES: [(i32, &str); 7] = [
    (0, "success, every verdict passed"),
    (2, "config error (unreadable, unparseable or invalid config)"),
    (3, "unknown experiment kind"),
    (4, "fixture id not in the catalogue"),
    (5, "solver failure (singular regression, non-finite values, no convergence, ...)"),
    (6, "I/O error writing artifacts"),
    (7, "experiment ran but at least one verdict is FAIL"),
];

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::UnknownKind(_) => 3,
            CliError::MissingFixture(_) => 4,
            CliError::Solver(_) => 5,
            CliError::Io(_) => 6,
            CliError::VerdictFail { .. } => 7,
        }
    }

    pub fn class(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::UnknownKind(_) => "unknown_kind",
            CliError::MissingFixture(_) => "missing_fixture",
            CliError::Solver(_) => "solver",
            CliError::Io(_) => "io",
            CliError::VerdictFail { .. } => "verdict_fail",
        }
    }

    /// One-line JSON error record for stderr.
    pub fn record(&self) -> String {
        #[derive(Serialize)]
        struct Record<'a> {
            error: &'a str,
            code: i32,
            message: String,
        }
        serde_json::to_string(&Record {
            error: self.class(),
            code: self.exit_code(),
            message: self.to_string(),
        })
        .expect("error record serializes")
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "invalid config: {m}"),
            CliError::UnknownKind(k) => write!(
                f,
                "unknown experiment kind `{k}` (expected one of: {})",
                crate::config::ExperimentKind::ALL.map(|k| k.as_str()).join(", ")
            ),
            CliError::MissingFixture(id) => write!(f, "no fixture with id `{id}` (see --list-fixtures)"),
            CliError::Solver(e) => write!(f, "{e}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::VerdictFail { failed, total } => write!(f, "{failed} of {total} verdicts failed"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<pathfk::Error> for CliError {
    fn from(e: pathfk::Error) -> Self {
        match e {
            pathfk::Error::InvalidConfig(m) => CliError::Config(m),
            pathfk::Error::Io(io) => CliError::Io(io.to_string()),
            pathfk::Error::Csv(e) => CliError::Io(e.to_string()),
            other => CliError::Solver(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
