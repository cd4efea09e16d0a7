use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("timestep order violation: candidate {candidate} at t={current}, asked {from}->{to}")]
    TimestepOrder {
        candidate: u32,
        current: u32,
        from: u32,
        to: u32,
    },

    #[error("no cached model prediction for candidate {0}")]
    MissingPrediction(u32),

    #[error("candidate {candidate} is not fully denoised (t={timestep})")]
    NotDenoised { candidate: u32, timestep: u32 },

    #[error("unknown latent handle {0}")]
    UnknownLatent(String),

    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),

    #[error("provider protocol violation: {0}")]
    Protocol(String),

    #[error("provider failure: {0}")]
    Provider(String),

    #[error("trace has no fully denoised candidate")]
    EmptyTrace,

    #[error("candidate pool is empty")]
    EmptyPool,

    #[error("metric error: {0}")]
    Metric(String),
}

impl Error {
    /// Errors that originate in a remote or simulated backend rather than in
    /// caller input.
    pub fn is_backend(&self) -> bool {
        matches!(
            self,
            Error::BackendUnavailable(_) | Error::Protocol(_) | Error::Provider(_)
        )
    }
}
