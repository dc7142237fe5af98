use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("sphere packing stopped at porosity {achieved:.4} (target {target:.4}) after {attempts} attempts")]
    PackingFailure {
        achieved: f64,
        target: f64,
        attempts: usize,
    },

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("topology error: fluid node ({x}, {y}, {z}) has an out-of-bounds neighbor in direction {direction}")]
    Topology {
        x: usize,
        y: usize,
        z: usize,
        direction: usize,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("state error: {0}")]
    State(String),

    #[error("simulation became unstable at step {step}: {reason}")]
    Instability { step: usize, reason: String },

    #[error("machine model: {0}")]
    MachineModel(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
