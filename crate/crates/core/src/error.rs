use thiserror::Error;

/// Errors raised anywhere in the modelling, compilation and inference stack.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    Distribution(String),

    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("reliability problem: {0}")]
    Problem(String),

    #[error("FORM did not converge for limit state `{limit_state}` after {iterations} iterations")]
    NonConvergence {
        limit_state: String,
        iterations: usize,
    },

    #[error("compilation error: {0}")]
    Compile(String),

    #[error("network error: {0}")]
    Network(String),

    #[error("inconsistent evidence: {0}")]
    InconsistentEvidence(String),

    #[error("unknown node `{0}`")]
    UnknownNode(String),

    #[error("decision error: {0}")]
    Decision(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("io error: {0}")]
    Io(String),

    #[error("revision conflict: {0}")]
    Conflict(String),

    #[error("verification failed: {0}")]
    Verification(String),
}

impl Error {
    /// Exit-code taxonomy shared by the CLI and the HTTP service.
    pub fn code(&self) -> i32 {
        match self {
            Error::InconsistentEvidence(_) => 3,
            Error::Verification(_) => 4,
            _ => 2,
        }
    }

    /// Stable machine-readable error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Distribution(_) => "invalid_distribution",
            Error::Syntax { .. } => "syntax_error",
            Error::Eval(_) => "evaluation_error",
            Error::Problem(_) => "invalid_problem",
            Error::NonConvergence { .. } => "non_convergence",
            Error::Compile(_) => "compile_error",
            Error::Network(_) => "invalid_network",
            Error::InconsistentEvidence(_) => "inconsistent_evidence",
            Error::UnknownNode(_) => "unknown_node",
            Error::Decision(_) => "decision_error",
            Error::Model(_) => "model_error",
            Error::Io(_) => "io_error",
            Error::Conflict(_) => "revision_conflict",
            Error::Verification(_) => "verification_failed",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
