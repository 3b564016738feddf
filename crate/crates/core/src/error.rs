use thiserror::Error;

use crate::scalar::Symbol;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("the zero signal has no minimal equation")]
    ZeroSignal,
    #[error("parameter `{0}` has no numeric value")]
    NonNumericParameter(String),
    #[error("invalid differential equation: {0}")]
    InvalidOde(String),
    #[error("invalid carrier: {0}")]
    InvalidCarrier(String),
    #[error("module of order {module} is incompatible with the coefficient form: {reason}")]
    IncompatibleModule { module: usize, reason: String },
    #[error("coefficient form has no signal terms")]
    DegenerateCoefficientForm,
    #[error("rank computation failed: every specialization hit a pole after {attempts} attempts")]
    RankFailure { attempts: usize },
    #[error("the parameter set is empty")]
    EmptyParameterSet,
    #[error("symbol `{0}` is neither estimated nor given a value")]
    UnresolvedSymbol(Symbol),
    #[error("parameter `{0}` does not appear in the relation")]
    UnknownParameter(Symbol),
    #[error("the relation is not affine in the estimated parameters")]
    NotAffine,
    #[error("not identifiable: {0}")]
    NotIdentifiable(String),
    #[error("coefficient {0} has a denominator that is not a power of s")]
    NotLaurent(String),
    #[error("positive power s^{power} remains after normalization")]
    NotStrictlyProper { power: i64 },
    #[error("coefficient {0} is not a plain rational number")]
    SymbolicCoefficient(String),
    #[error("window width {t} is not on the sampling grid")]
    OffGrid { t: f64 },
    #[error("empty integration window")]
    EmptyWindow,
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("plan has {expected} parameters, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("divisor too small at window {t}: |δ| = {divisor:e}")]
    DivisorTooSmall { t: f64, divisor: f64 },
    #[error("numerically singular system at window {t}")]
    NumericalSingularity { t: f64 },
    #[error("invalid stream: {0}")]
    InvalidStream(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
