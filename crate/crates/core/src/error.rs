use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("feature `{0}` has no observed values in the training split")]
    UnimputableFeature(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("samples without event_date: {0:?}")]
    MissingEventDate(Vec<u64>),

    #[error("degenerate training set: {0}")]
    DegenerateTraining(String),

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Divergence { epoch: usize },

    #[error("shape mismatch: expected {expected_features}x{expected_days}, got {actual_features}x{actual_days}")]
    ShapeMismatch {
        expected_features: usize,
        expected_days: usize,
        actual_features: usize,
        actual_days: usize,
    },

    #[error("external predictor: {0}")]
    Transport(String),

    #[error("exact enumeration supports at most {limit} players, got {players}; use kernel_shap")]
    EnumerationLimit { players: usize, limit: usize },

    #[error("need at least {minimum} coalitions for {players} players, got {requested}")]
    InsufficientSamples {
        requested: usize,
        minimum: usize,
        players: usize,
    },

    #[error("rank-deficient system at unknown {index}; evaluate more coalitions")]
    RankDeficient { index: usize },

    #[error("kernel width: {0}")]
    KernelWidth(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("empty cohort: {0}")]
    EmptyCohort(String),

    #[error("mismatch: {0}")]
    Mismatch(String),

    #[error("unknown feature `{0}`")]
    UnknownFeature(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config: {0}")]
    Config(String),

    #[error("format: {0}")]
    Format(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable token used in machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Schema(_) => "schema",
            Error::Parse { .. } => "parse",
            Error::Validation(_) => "validation",
            Error::UnimputableFeature(_) => "unimputable-feature",
            Error::EmptyInput(_) => "empty-input",
            Error::MissingEventDate(_) => "missing-event-date",
            Error::DegenerateTraining(_) => "degenerate-training",
            Error::Divergence { .. } => "divergence",
            Error::ShapeMismatch { .. } => "shape-mismatch",
            Error::Transport(_) => "transport",
            Error::EnumerationLimit { .. } => "enumeration-limit",
            Error::InsufficientSamples { .. } => "insufficient-samples",
            Error::RankDeficient { .. } => "rank-deficient",
            Error::KernelWidth(_) => "kernel-width",
            Error::NonFinite(_) => "non-finite",
            Error::EmptyCohort(_) => "empty-cohort",
            Error::Mismatch(_) => "mismatch",
            Error::UnknownFeature(_) => "unknown-feature",
            Error::InvalidArgument(_) => "invalid-argument",
            Error::Config(_) => "config",
            Error::Format(_) => "format",
            Error::Io { .. } => "io",
        }
    }

    /// Whether the error stems from bad input rather than a runtime failure.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Schema(_)
                | Error::Parse { .. }
                | Error::Validation(_)
                | Error::UnimputableFeature(_)
                | Error::MissingEventDate(_)
                | Error::UnknownFeature(_)
                | Error::InvalidArgument(_)
                | Error::Config(_)
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
