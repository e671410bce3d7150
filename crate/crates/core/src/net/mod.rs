//! Dense networks, the Gaussian policy, Adam and checkpoint files.

mod adam;
mod checkpoint;
mod dense;
mod policy;

pub use adam::Adam;
pub use checkpoint::{
    load_params, load_params_expecting, save_params, CheckpointMeta, FORMAT_VERSION, MAGIC,
};
pub use dense::{Activation, DenseNet, ForwardCache, Scalar};
pub use policy::{gaussian_entropy, gaussian_log_prob, ActorCritic, GaussianPolicy};

#[derive(Debug, thiserror::Error)]
pub enum NetError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("checkpoint version mismatch: {0}")]
    VersionMismatch(String),
    #[error("checkpoint checksum mismatch (truncated or corrupted file)")]
    ChecksumMismatch,
    #[error("malformed checkpoint: {0}")]
    Format(String),
}
