//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violated a precondition (ranges, ordering, emptiness).
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Tensor shapes do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A token is not in the active encoder's vocabulary.
    #[error("unknown token {token:?} not in encoder vocabulary")]
    Vocabulary { token: String },

    /// Missing or inconsistent configuration (empty caption bank,
    /// unregistered captioner or scorer, bad config file).
    #[error("configuration error: {0}")]
    Config(String),

    /// An operation was called before required state was loaded.
    #[error("state error: {0}")]
    State(String),

    /// Non-finite values appeared during a numeric computation.
    #[error("numeric error at timestep {timestep}: {detail}")]
    Numeric { timestep: usize, detail: String },

    /// Training diverged; reports the last epoch with a finite loss.
    #[error("training diverged after epoch {last_finite_epoch}: {detail}")]
    Training {
        last_finite_epoch: usize,
        detail: String,
    },

    /// Latent norm blew up during DDIM inversion.
    #[error("inversion diverged: {0}")]
    Inversion(String),

    /// The trained model is below the benchmark quality gate.
    #[error("model quality gate failed: {0}")]
    ModelQuality(String),

    #[error("container error: {0}")]
    Container(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn parameter(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
