use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("duplicate id: {0}")]
    DuplicateId(String),
    #[error("phase-consistency violation: {0}")]
    PhaseConsistency(String),
    #[error("node {node} phase {phase} is not connected to the slack bus")]
    Disconnected { node: String, phase: char },
    #[error("unknown element: {0}")]
    UnknownElement(String),
    #[error("id collision while merging: {0}")]
    IdCollision(String),
    #[error("invalid switch operation: {0}")]
    SwitchState(String),
    #[error("unsupported element: {0}")]
    Unsupported(String),
    #[error("invalid value: {0}")]
    InvalidValue(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("structurally singular system: {0}")]
    Singular(String),
    #[error("singular jacobian at node {node} phase {phase}")]
    SingularJacobian { node: String, phase: char },
    #[error("no convergence after {iterations} iterations (mismatch {residual:e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },
    #[error("degenerate weights: at least one objective weight must be positive")]
    DegenerateWeights,
    #[error("target pair {0} shares no phases")]
    EmptyTargetPhases(String),
    #[error("infeasible problem: {0}")]
    Infeasible(String),
    #[error("{case}: {source}")]
    Case { case: String, source: alloc::boxed::Box<Error> },
}

/// Coarse classification used for exit codes and diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Solver,
    Infeasible,
}

impl Error {
    pub(crate) fn schema(msg: impl Into<String>) -> Self {
        Error::Schema(msg.into())
    }

    /// Tags an error with the experiment case it came from.
    pub fn in_case(self, case: impl Into<String>) -> Self {
        Error::Case {
            case: case.into(),
            source: alloc::boxed::Box::new(self),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Singular(_) | Error::SingularJacobian { .. } | Error::NonConvergence { .. } => ErrorKind::Solver,
            Error::Infeasible(_) => ErrorKind::Infeasible,
            Error::Case { source, .. } => source.kind(),
            _ => ErrorKind::Validation,
        }
    }
}
