use thiserror::Error;

/// Crate-wide error type. Variants carry enough context to map onto the CLI
/// exit codes (config = 1, I/O = 2, training abort = 3, non-watertight = 4).
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or invalid arguments to a constructor.
    #[error("config: {0}")]
    Config(String),

    /// A gradient entry became NaN or infinite before an optimizer step.
    #[error("non-finite gradient in segment `{segment}` at index {index} (value {value})")]
    NonFiniteGradient {
        segment: String,
        index: usize,
        value: f64,
    },

    /// The training loss became NaN or infinite.
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },

    /// Two evaluations of the same loss at the same parameters disagreed.
    #[error("model evaluation is not deterministic: {0} != {1}")]
    NonDeterministicEval(f64, f64),

    /// A backward pass was handed a trace that does not match the encoder.
    #[error("neighborhood mismatch between forward and backward: {0}")]
    NeighborhoodMismatch(String),

    /// Mesh fails the closed-surface check (an edge not shared by exactly
    /// two triangles).
    #[error("mesh is not watertight: {0}")]
    NotWatertight(String),

    #[error("malformed mesh file `{path}`: {reason}")]
    MeshFormat { path: String, reason: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
