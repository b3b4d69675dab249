use thiserror::Error;

/// Errors raised by the noise model.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// A response function diverges at a real frequency.
    #[error("singular {what} at omega = {omega}")]
    Singular { what: &'static str, omega: f64 },

    /// The amplification factor diverges on the static stability boundary.
    #[error("working point sits on the static stability boundary")]
    StabilityBoundary,

    /// Zero optomechanical coupling: the output carries no signal.
    #[error("no measurement: coupling is zero, equivalent input noise is infinite")]
    NoMeasurement,

    /// The quantity needs a dissipative oscillator (damping > 0).
    #[error("degenerate dissipation: quantity requires mechanical damping > 0")]
    DegenerateDissipation,

    #[error("no dip found: spectrum has no local minimum below the resonant reference")]
    NoDipFound,

    #[error("search did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
