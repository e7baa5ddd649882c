use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("jet contract violation: {0}")]
    JetContract(String),

    #[error("point ({0:.6}, {1:.6}, {2:.6}) lies outside the working box")]
    Domain(f64, f64, f64),

    #[error("invalid scenario field `{field}`: {reason}")]
    Scenario { field: String, reason: String },

    #[error("scenario parse error: {0}")]
    Parse(String),

    #[error("{what} did not converge (last residual {residual:.3e})")]
    NoConvergence { what: String, residual: f64 },

    #[error("{what}: series ratio {ratio:.6} is not below 1")]
    Divergent { what: String, ratio: f64 },

    #[error("resonance at {what} with non-vanishing right-hand side {rhs:.3e}")]
    Resonance { what: String, rhs: f64 },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("residual {residual:.3e} above tolerance at t = {t:.6}")]
    Residual { t: f64, residual: f64 },

    #[error("missing cached artifact: {0}")]
    MissingCache(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code: 2 for bad input, 3 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Scenario { .. }
            | Error::Parse(_)
            | Error::Domain(..)
            | Error::JetContract(_)
            | Error::Precondition(_)
            | Error::MissingCache(_)
            | Error::Io(_)
            | Error::Json(_) => 2,
            Error::NoConvergence { .. }
            | Error::Divergent { .. }
            | Error::Resonance { .. }
            | Error::Residual { .. } => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
