use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("mesh needs at least 2 subdivisions per side, got {0}")]
    InvalidResolution(usize),

    #[error("no boundary facet midpoint falls inside the {0} window")]
    EmptyWindow(&'static str),

    #[error("point ({0}, {1}) lies outside the unit square")]
    OutsideDomain(f64, f64),

    #[error("y = {0} lies outside the inflow window [0.35, 0.65]")]
    OutsideInflow(f64),

    #[error("triangle {0} has non-positive area")]
    DegenerateElement(usize),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("linear solver failed: {message} (relative residual {residual:.3e})")]
    Solver { message: String, residual: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate search direction: {0}")]
    DegenerateDerivative(String),

    #[error("volume projection failed: target {target}, reached {achieved}")]
    Projection { target: f64, achieved: f64 },

    #[error("coverage of the fluid region is undefined for an empty fluid region")]
    EmptyFluidRegion,

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}
