use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or argument lies outside the domain of the model.
    #[error("`{field}` out of domain: {reason}")]
    Domain { field: &'static str, reason: String },

    #[error("invalid strategy: {0}")]
    Strategy(String),

    /// An operation was called at a point of the process where it is undefined
    /// (for example sampling a feed before `K` stories exist).
    #[error("sequencing error: {0}")]
    Sequencing(String),

    /// Root isolation could not resolve the interval at the configured resolution.
    #[error("unresolved interval [{lo:.12}, {hi:.12}]: {reason}")]
    Resolution { lo: f64, hi: f64, reason: String },

    #[error("equilibrium unresolved at lambda = {lambda}: {reason}")]
    EquilibriumUnresolved { lambda: f64, reason: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Domain {
            field,
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad input (as opposed to numerical failure).
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Domain { .. } | Error::Strategy(_) | Error::Json(_) | Error::Precondition(_)
        )
    }
}
