use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}:{line}: parse error: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("dangling reference: {entity} {id} does not exist")]
    DanglingReference { entity: &'static str, id: String },

    #[error("invalid value for `{field}`: {reason}")]
    InvalidField { field: String, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("node {to} is unreachable from node {from}")]
    Unreachable { from: u32, to: u32 },

    #[error("no feasible origin-destination pair in the road network")]
    NoFeasibleOd,

    #[error("power flow did not converge after {iterations} iterations (max mismatch {residual:e})")]
    PowerFlowDiverged { iterations: usize, residual: f64 },

    #[error("singular Jacobian in power flow")]
    SingularJacobian,

    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("non-finite value in parameter block `{block}`")]
    NonFinite { block: String },

    #[error("invalid action {action}: must be below {num_actions}")]
    InvalidAction { action: usize, num_actions: usize },

    #[error("no charging request is pending")]
    NoPendingRequest,

    #[error("episode has not terminated")]
    EpisodeNotTerminal,

    #[error("scenario produces no control-phase charging requests")]
    NoDecisionSteps,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("checkpoint format: {0}")]
    Checkpoint(String),

    #[error("simulation fault: {0}")]
    Simulation(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidField {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable snake_case name of the variant; for context wrappers, the
    /// name of the wrapped error.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::DanglingReference { .. } => "dangling_reference",
            Error::InvalidField { .. } => "invalid_field",
            Error::Io { .. } => "io",
            Error::Unreachable { .. } => "unreachable",
            Error::NoFeasibleOd => "no_feasible_od",
            Error::PowerFlowDiverged { .. } => "power_flow_diverged",
            Error::SingularJacobian => "singular_jacobian",
            Error::Shape { .. } => "shape",
            Error::NonFinite { .. } => "non_finite",
            Error::InvalidAction { .. } => "invalid_action",
            Error::NoPendingRequest => "no_pending_request",
            Error::EpisodeNotTerminal => "episode_not_terminal",
            Error::NoDecisionSteps => "no_decision_steps",
            Error::InsufficientData(_) => "insufficient_data",
            Error::Checkpoint(_) => "checkpoint",
            Error::Simulation(_) => "simulation",
            Error::Context { source, .. } => source.kind(),
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}
