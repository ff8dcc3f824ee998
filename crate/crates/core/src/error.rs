use thiserror::Error;

/// Errors raised anywhere in the optimization workbench.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("value outside its domain: {0}")]
    Domain(String),

    #[error("singular {physics} system on a {nx}x{ny} mesh (pivot {pivot} at reduced equation {equation})")]
    SingularSystem {
        physics: String,
        nx: usize,
        ny: usize,
        equation: usize,
        pivot: f64,
    },

    #[error("non-finite activation in layer `{layer}`")]
    NonFinite { layer: String },

    #[error("shifted-sigmoid bisection failed to bracket the volume target {target}")]
    Bracket { target: f64 },

    #[error("MMA subproblem did not converge (dual residual {residual:e})")]
    Subproblem { residual: f64 },

    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn at_iteration(self, iteration: usize) -> Self {
        Error::AtIteration {
            iteration,
            source: Box::new(self),
        }
    }
}
