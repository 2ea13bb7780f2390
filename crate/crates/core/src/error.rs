use std::path::PathBuf;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("operation not supported for the {0} system")]
    UnsupportedSystem(&'static str),

    #[error("broken configuration: {0}")]
    BrokenConfiguration(String),

    #[error("integrator blow-up in replica {replica} at step {step} (dt too large?)")]
    Blowup { replica: usize, step: u64 },

    #[error("projection solver did not converge: relative residual {residual:e} after {iterations} iterations")]
    SolverFailure { residual: f64, iterations: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("at least 2 runs are required for a cross-run variance, got {0}")]
    InsufficientReplication(usize),

    #[error("reference free energy is constant; normalized error is undefined")]
    DegenerateReference,

    #[error("config line {line}: `{key}`: {message}")]
    Config {
        line: usize,
        key: String,
        message: String,
    },

    #[error("{path}: line {line}: {message}")]
    Csv {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("sweep {sweep}: {source}")]
    Sweep {
        sweep: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn at_sweep(self, sweep: usize) -> Self {
        Error::Sweep {
            sweep,
            source: Box::new(self),
        }
    }
}
