//! Shared error type.

use std::fmt;

/// Errors raised across the library.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Matrix expected symmetric but is not, within tolerance.
    NotSymmetric { what: String, asym: f64 },
    /// NaN or infinity encountered in an input.
    NotFinite { what: String },
    /// Matrix expected positive semidefinite; carries the offending eigenvalue.
    NotPsd { what: String, min_eig: f64 },
    /// Inconsistent dimensions.
    ShapeMismatch { what: String },
    /// Time outside [0, T].
    OutOfRange { t: f64, horizon: f64 },
    /// Riccati iterate escaped the guard threshold.
    BlowUp { t: f64, magnitude: f64 },
    /// A propagated state left the finite range.
    NonFinite { t: f64 },
    /// Paired inputs of unequal length.
    LengthMismatch { left: usize, right: usize },
    /// Exact assignment requested above the size cap.
    SizeLimit { n: usize, cap: usize },
    /// Trajectories on different grids.
    GridMismatch,
    /// Trajectories of incompatible measure variants.
    VariantMismatch,
    /// Rate fit with a vanishing error value.
    DegenerateFit,
    /// Problem file failed to parse.
    Parse { msg: String },
    /// Configuration rejected before any numerics ran.
    InvalidConfig { msg: String },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::NotSymmetric { what, asym } => {
                write!(f, "{what} is not symmetric (asymmetry {asym:.3e})")
            }
            Error::NotFinite { what } => write!(f, "{what} contains NaN or infinity"),
            Error::NotPsd { what, min_eig } => {
                write!(f, "{what} is not positive semidefinite (min eigenvalue {min_eig:.3e})")
            }
            Error::ShapeMismatch { what } => write!(f, "shape mismatch: {what}"),
            Error::OutOfRange { t, horizon } => {
                write!(f, "time {t} outside [0, {horizon}]")
            }
            Error::BlowUp { t, magnitude } => {
                write!(f, "Riccati blow-up at t={t} (magnitude {magnitude:.3e})")
            }
            Error::NonFinite { t } => write!(f, "non-finite state at t={t}"),
            Error::LengthMismatch { left, right } => {
                write!(f, "length mismatch: {left} vs {right}")
            }
            Error::SizeLimit { n, cap } => {
                write!(f, "assignment size {n} exceeds cap {cap}")
            }
            Error::GridMismatch => write!(f, "trajectories on different grids"),
            Error::VariantMismatch => write!(f, "incompatible measure variants"),
            Error::DegenerateFit => write!(f, "degenerate rate fit (error below 1e-15)"),
            Error::Parse { msg } => write!(f, "parse error: {msg}"),
            Error::InvalidConfig { msg } => write!(f, "invalid configuration: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;
