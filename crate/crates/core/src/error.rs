use thiserror::Error;

/// Errors produced by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("grid mismatch: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// The stochastic-parabolicity ratio `C (2M+1)^d / (N delta)` is not below one.
    #[error("coercivity violated: ratio {ratio:.6} >= 1")]
    CoercivityViolation { ratio: f64 },

    #[error("imaginary residue {residue:.3e} exceeds tolerance (broken conjugate symmetry)")]
    NonRealResidue { residue: f64 },

    #[error("non-finite state at step {step}")]
    BlowUp { step: usize },

    #[error("insufficient resolution: {0}")]
    Resolution(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::BlowUp { .. } => 3,
            Error::CoercivityViolation { .. }
            | Error::Config(_)
            | Error::Domain(_)
            | Error::Resolution(_)
            | Error::Shape(_) => 2,
            Error::NonRealResidue { .. } | Error::Io(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
