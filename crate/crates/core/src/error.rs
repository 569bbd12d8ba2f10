use thiserror::Error;

/// Errors raised by the simulation, learning and evaluation layers.
#[derive(Debug, Error)]
pub enum IsacError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular system in {0}")]
    Singular(&'static str),

    #[error("beam combination cancelled (norm {0:e})")]
    DegenerateBeam(f64),

    #[error("training diverged at stage {stage}, batch {batch}: loss = {loss}")]
    Diverged { stage: usize, batch: usize, loss: f64 },

    #[error("calibration refused: {0}")]
    Calibration(String),

    #[error("omega_r = {omega_r}: {source}")]
    AtOmega {
        omega_r: f64,
        #[source]
        source: Box<IsacError>,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, IsacError>;
