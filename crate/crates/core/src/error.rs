use faer::c64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("kernel evaluated at coincident points")]
    SingularEvaluation,

    /// `1/tau` (or a resolvent point `z`) sits within the cluster tolerance of an eigenvalue.
    #[error("resonance proximity: z = {z} is within tolerance of eigenvalue {eigenvalue}")]
    ResonanceProximity { z: c64, eigenvalue: c64 },

    #[error("pole: z coincides with eigenvalue {0}")]
    Pole(c64),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("infeasible: {0}")]
    Infeasible(String),
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
