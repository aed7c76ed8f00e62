use thiserror::Error;

/// Errors raised by the solvers, the expansion machinery and the I/O layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("nonpositive temperature {value:e} at cell {cell}")]
    NonPositiveTemperature { cell: usize, value: f64 },
    #[error("CFL violated: dt = {dt:e} exceeds the stable bound {limit:e}")]
    Cfl { dt: f64, limit: f64 },
    #[error("{solver} did not converge after {iters} iterations (residual {residual:e})")]
    NoConvergence {
        solver: &'static str,
        iters: usize,
        residual: f64,
    },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("layer blow-up: {0}")]
    LayerBlowUp(String),
    #[error("initial layer not resolved: {0}")]
    LayerTail(String),
    #[error("time {t} outside the available trajectory [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("solver failed at epsilon = {epsilon}: {source}")]
    AtEpsilon {
        epsilon: f64,
        #[source]
        source: Box<Error>,
    },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable code used by the command-line error contract.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid-parameter",
            Error::Shape(_) => "shape",
            Error::NonPositiveTemperature { .. } => "nonpositive-temperature",
            Error::Cfl { .. } => "cfl",
            Error::NoConvergence { .. } => "no-convergence",
            Error::NonFinite(_) => "non-finite",
            Error::LayerBlowUp(_) => "layer-blow-up",
            Error::LayerTail(_) => "layer-tail",
            Error::OutOfRange { .. } => "out-of-range",
            Error::DegenerateFit(_) => "degenerate-fit",
            Error::AtEpsilon { source, .. } => source.code(),
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
