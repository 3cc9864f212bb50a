use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("inadmissible parameters: {0}")]
    Inadmissible(String),
    #[error("degenerate denominator: {0}")]
    DegenerateDenominator(String),
    #[error("invariant violated at construction: {0}")]
    InvariantViolation(String),
    #[error("quadrature did not converge: {0}")]
    QuadratureFailure(String),
    #[error("bad grid specification: {0}")]
    BadGridSpec(String),
    #[error("non-positive density at node {index} (value {value:e})")]
    NonPositiveDensity { index: usize, value: f64 },
    #[error("tail truncation: last cell carries {fraction:e} of the total ({what})")]
    TailTruncation { what: String, fraction: f64 },
    #[error("mass mismatch: field mass {found:.12e}, reference {expected:.12e}")]
    MassMismatch { found: f64, expected: f64 },
    #[error("newton iteration diverged after {iterations} iterations (residual {residual:e}, dt {dt:e})")]
    NewtonDivergence { iterations: usize, residual: f64, dt: f64 },
    #[error("positivity lost at node {index} after {retries} retries")]
    PositivityLoss { index: usize, retries: usize },
    #[error("interpolation point {x:e} outside source grid [0, {limit:e}]")]
    InterpolationOutOfRange { x: f64, limit: f64 },
    #[error("unsupported dimension {0} for sphere quadrature")]
    UnsupportedDimension(u32),
    #[error("norm overflow in {0}")]
    NormOverflow(String),
    #[error("eigensolver failure: {0}")]
    EigensolverFailure(String),
    #[error("bracket [{lo}, {hi}] does not straddle a sign change ({f_lo:e}, {f_hi:e})")]
    NoSignChange { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },
    #[error("exponential fit failed: {0}")]
    FitFailure(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("wrong variables: expected {expected}, found {found}")]
    WrongVariables { expected: &'static str, found: &'static str },
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code used by the command line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NewtonDivergence { .. }
            | Error::PositivityLoss { .. }
            | Error::EigensolverFailure(_)
            | Error::QuadratureFailure(_)
            | Error::FitFailure(_)
            | Error::Io(_) => 3,
            _ => 2,
        }
    }
}
