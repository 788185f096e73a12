use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The generator does not provide a capability the operation needs
    /// (for instance a right derivative).
    #[error("capability unavailable: {0}")]
    Capability(String),

    /// An iterative routine failed to reach its tolerance.
    #[error("no convergence: {0}")]
    NonConvergence(String),

    /// `[eta(n)] - n = 0`, so the taper ramp has a zero denominator.
    #[error("degenerate gap at n = {n}: [eta(n)] - n = 0")]
    DegenerateGap { n: u64 },

    /// The generator violates a structural assumption (monotone decay, ...).
    #[error("invalid generator: {0}")]
    InvalidPsi(String),

    /// A documented precondition of the operation does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;
