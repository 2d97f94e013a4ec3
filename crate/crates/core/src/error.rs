use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A scalar parameter is outside the domain of the operation.
    InvalidParameter { name: &'static str, reason: String },
    /// Vector or matrix sizes disagree.
    DimensionMismatch { expected: usize, found: usize },
    /// A vector could not be interpreted as a population state.
    InvalidState(String),
    /// Requested sample size exceeds the enumeration cap for this action count.
    SampleSizeCap {
        actions: usize,
        k: usize,
        cap: usize,
    },
    /// Some multiplier `1 + v̂_i + q̂_i` is not positive, so the corrected rule
    /// and the virtual payoffs are undefined at this state.
    ApproximationInvalid { action: usize, multiplier: f64 },
    /// The virtual payoffs are undefined at `x_1 = t` on a quadrature path.
    InvalidOnPath {
        t: f64,
        action: usize,
        multiplier: f64,
    },
    /// The game is degenerate for the requested construction.
    DegenerateGame(&'static str),
    /// The interior equilibrium is too close to one half for the two-action
    /// shift formula.
    SymmetricMargin { nash: f64, margin: f64 },
    /// The discrete shape test of the sampling perturbation did not match any
    /// admissible pattern.
    InconclusiveShape { witnesses: alloc::vec::Vec<f64> },
    /// A non-finite value appeared in a computation.
    NonFinite(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidParameter { name, reason } => {
                write!(f, "invalid parameter `{name}`: {reason}")
            }
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::InvalidState(msg) => write!(f, "invalid population state: {msg}"),
            Error::SampleSizeCap { actions, k, cap } => write!(
                f,
                "sample size k={k} exceeds the enumeration cap {cap} for {actions} actions"
            ),
            Error::ApproximationInvalid { action, multiplier } => write!(
                f,
                "corrected rule undefined: multiplier for action {action} is {multiplier:e} (must be > 0)"
            ),
            Error::InvalidOnPath { t, action, multiplier } => write!(
                f,
                "virtual payoffs undefined at x1 = {t}: multiplier for action {action} is {multiplier:e}"
            ),
            Error::DegenerateGame(msg) => write!(f, "degenerate game: {msg}"),
            Error::SymmetricMargin { nash, margin } => write!(
                f,
                "interior equilibrium {nash} lies within {margin} of 1/2"
            ),
            Error::InconclusiveShape { witnesses } => {
                write!(f, "inconclusive shape pattern at x1 = {witnesses:?}")
            }
            Error::NonFinite(what) => write!(f, "non-finite value in {what}"),
        }
    }
}

impl core::error::Error for Error {}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

pub(crate) fn check_eta(eta: f64) -> Result<()> {
    if eta > 0.0 && eta.is_finite() {
        Ok(())
    } else {
        Err(invalid(
            "eta",
            alloc::format!("noise level must be positive, got {eta}"),
        ))
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
