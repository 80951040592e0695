use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes, lengths or modes that do not fit together.
    #[error("structural error: {0}")]
    Structural(String),

    /// Two independent random samples disagree on a quantity that should be generic.
    #[error("genericity error: {what} disagrees across samples ({first} vs {second})")]
    Genericity {
        what: String,
        first: usize,
        second: usize,
    },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("no invertible solution after {0} draws")]
    NoInvertibleSolution(usize),

    #[error("construction inconsistency: {0}")]
    ConstructionInconsistency(String),

    #[error("degenerate centers: tangent span has dimension {found}, expected {expected}")]
    DegenerateCenters { found: usize, expected: usize },

    #[error("solver incompleteness: {0}")]
    SolverIncomplete(String),

    #[error("inconsistent with expected geometry: {0}")]
    Inconsistent(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn structural(msg: impl Into<String>) -> Self {
        Error::Structural(msg.into())
    }

    /// Failures caused by an unlucky random draw rather than a bug; the
    /// pipeline re-seeds once on these.
    pub fn is_generic_position_failure(&self) -> bool {
        matches!(
            self,
            Error::Genericity { .. }
                | Error::DegenerateInput(_)
                | Error::NoInvertibleSolution(_)
                | Error::DegenerateCenters { .. }
                | Error::ConstructionInconsistency(_)
        )
    }
}
