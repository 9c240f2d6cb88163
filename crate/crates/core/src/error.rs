use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    /// 1-based (row, column) of the offending coefficient.
    #[error("structural violation at h_{row}{col}: {reason}")]
    Structure {
        row: usize,
        col: usize,
        reason: String,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("shooting did not converge from any start (best residual {best_residual:.3e})")]
    ShootingFailed { best_residual: f64 },

    #[error("gradient field unavailable at t={t}, x={x:?}")]
    FieldFailure { t: f64, x: Vec<f64> },

    #[error("particle {index}: {source}")]
    Particle {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("rejection sampling efficiency {efficiency:.3e} is below 1e-3")]
    DegenerateDensity { efficiency: f64 },
}

impl Error {
    pub(crate) fn invalid(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
        if expected == got {
            Ok(())
        } else {
            Err(Error::Dimension { expected, got })
        }
    }
}
