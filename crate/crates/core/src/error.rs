use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("disturbance vector must be zero in components 1 and 3, got {0:?}")]
    StructureViolation([f64; 4]),

    #[error("simulation diverged at joint {joint}, t = {time} s")]
    Divergence { joint: usize, time: f64 },

    #[error("synthesis failed: {0}")]
    Synthesis(String),

    #[error("certification failed: closed loop has eigenvalue {re} + {im}i with non-negative real part")]
    NotHurwitz { re: f64, im: f64 },

    #[error("weighting matrix Q must be symmetric positive definite")]
    WeightNotPositiveDefinite,

    #[error("joint {joint}: {source}")]
    Joint {
        joint: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("scenario parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid scenario: {field} {constraint}")]
    InvalidScenario { field: String, constraint: String },
}

impl Error {
    pub(crate) fn at_joint(self, joint: usize) -> Self {
        match self {
            e @ (Error::Joint { .. } | Error::Divergence { .. }) => e,
            e => Error::Joint {
                joint,
                source: Box::new(e),
            },
        }
    }

    pub(crate) fn invalid(field: impl Into<String>, constraint: impl Into<String>) -> Self {
        Error::InvalidScenario {
            field: field.into(),
            constraint: constraint.into(),
        }
    }

    /// Innermost error, looking through joint wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Joint { source, .. } => source.root(),
            e => e,
        }
    }
}
