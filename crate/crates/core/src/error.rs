use thiserror::Error;

/// Every failure the toolkit can report.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    #[error("pole on the imaginary axis at omega = {omega} rad/s")]
    PoleOnGrid { omega: f64 },

    #[error("H-infinity norm is infinite: {0}")]
    InfiniteNorm(String),

    #[error("invalid argument `{arg}`: {reason}")]
    InvalidArgument { arg: &'static str, reason: String },

    #[error("motor speed {speed} rad/s exceeds the actuation limit {limit} rad/s")]
    ActuationLimit { speed: f64, limit: f64 },

    #[error("invalid experiment: {0}")]
    InvalidExperiment(String),

    #[error("invalid trace: {0}")]
    InvalidTrace(String),

    #[error("requested order {requested} exceeds the numerical rank {rank} of the data")]
    OrderTooHigh { requested: usize, rank: usize },

    #[error("fit percentage is undefined for a constant measured signal")]
    UndefinedFit,

    #[error("nominal response magnitude vanishes at omega = {omega} rad/s")]
    DivisionDegenerate { omega: f64 },

    #[error("nominal closed loop is unstable (pole at {re:+.6} {im:+.6}j)")]
    NominalInstability { re: f64, im: f64 },

    #[error("LQR synthesis infeasible: {0}")]
    SynthesisInfeasible(String),

    #[error("Hamiltonian has eigenvalues on the imaginary axis")]
    HamiltonianBoundary,

    #[error("step size {dt} s too large for the fastest mode ({fastest} rad/s)")]
    StepSize { dt: f64, fastest: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid_arg(arg: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidArgument {
        arg,
        reason: reason.into(),
    }
}
