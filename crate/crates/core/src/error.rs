use thiserror::Error;

/// Errors raised while reading a case file.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("line {line}: malformed row: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("line {line}: unknown bus reference {bus}")]
    UnknownBus { line: usize, bus: usize },
    #[error("line {line}: duplicate branch ({from}, {to})")]
    DuplicateBranch { line: usize, from: usize, to: usize },
    #[error("line {line}: zero impedance branch ({from}, {to})")]
    ZeroImpedance { line: usize, from: usize, to: usize },
    #[error("line {line}: duplicate bus id {bus}")]
    DuplicateBus { line: usize, bus: usize },
    #[error("line {line}: invalid value: {reason}")]
    InvalidValue { line: usize, reason: String },
    #[error("case is missing the {0} table")]
    MissingSection(&'static str),
    #[error("case invariant violated: {0}")]
    Invariant(String),
}

/// Errors raised by scenario construction.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("invalid scenario configuration: {0}")]
    InvalidConfig(String),
    #[error("scenario produced an invalid case: {0}")]
    InvalidCase(String),
}

/// Errors raised while reading a flat key-value file.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value for `{key}`: {reason}")]
    BadValue { line: usize, key: String, reason: String },
    #[error("missing key `{0}`")]
    MissingKey(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Errors raised by the model evaluators.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("buses {0} and {1} are not connected by a branch")]
    NotALine(usize, usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Errors raised by the top-level solver.
#[derive(Debug, Error)]
pub enum SolveError {
    #[error("no power flow solution at the final switch pattern: {0}")]
    Infeasible(String),
    #[error("penalty homotopy reached rho = {rho:e} without complementarity (phi = {phi:e})")]
    PenaltyDiverged {
        rho: f64,
        phi: f64,
        trace: crate::ao2::SbqpTrace,
    },
    #[error("outer loop did not settle within {0} iterations")]
    OuterNotConverged(usize),
    #[error("subproblem failed: {0}")]
    Subproblem(String),
    #[error("enumeration refused: {0} switches exceeds the cap of {1}")]
    OracleCap(usize, usize),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

/// Errors raised while writing or reading result documents.
#[derive(Debug, Error)]
pub enum OutputError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
