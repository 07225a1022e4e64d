use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("point is not in the open hemisphere of the chart pole (<x, north> = {0})")]
    PoleHemisphere(f64),
    #[error("matrix is not symmetric (asymmetry {0:e})")]
    NonSymmetric(f64),
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("value out of range: {0}")]
    Range(String),
    #[error("grid too coarse to separate supports: {0}")]
    SupportOverlap(String),
    #[error("beta must be nonzero for the simple energy")]
    BetaZero,
    #[error("kernel has no antiderivative of phi'")]
    MissingAntiderivative,
    #[error("adaptive step size underflow: dt = {dt:e} below {min_dt:e} at t = {t:e}")]
    StepSize { dt: f64, min_dt: f64, t: f64 },
    #[error("CFL violation: courant number {0}")]
    Cfl(f64),
    #[error("vector field is not tangent at atom {index} (<V, x> = {dot:e})")]
    NonTangent { index: usize, dot: f64 },
    #[error("measure is not critical (max atom speed {0:e})")]
    NotCritical(f64),
    #[error("hypotheses not met: {0}")]
    Hypothesis(String),
    #[error("support leaves the cap at atom {0}")]
    Support(usize),
    #[error("insufficient data: {0} points, need at least 10")]
    InsufficientData(usize),
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, FlowError>;

impl From<std::io::Error> for FlowError {
    fn from(e: std::io::Error) -> Self {
        FlowError::Io(e.to_string())
    }
}
