use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("exponent p = {0} outside the supported range [-8, 1]")]
    UnsupportedExponent(f64),

    #[error("matrix is not Hermitian (asymmetry {0:e})")]
    NotHermitian(f64),

    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("stencil unavailable at node {0}")]
    StencilUnavailable(usize),

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("cutoff chain escapes the domain at rung {0}")]
    ChainOverflow(usize),

    #[error("no constant C <= {c_max} works; worst margin {worst_margin:e} at node {worst_node}")]
    SearchExhausted {
        c_max: f64,
        worst_margin: f64,
        worst_node: usize,
    },

    #[error("solver did not converge after {sweeps} sweeps (residual {residual:e})")]
    NonConvergence {
        sweeps: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("envelopes are not monotone in C: violation {0:e}")]
    SolverInconsistency(f64),

    #[error("no qualifying nodes: {0}")]
    Empty(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn at_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
