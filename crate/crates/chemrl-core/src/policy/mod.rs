//! The learnable policy: embedding + GRU stack + output projection, with an
//! optional critic head, exact gradients, Adam updates, and checkpointing.
//! All math is 64-bit.

mod adam;
mod backward;
mod checkpoint;
mod forward;
mod params;

pub use adam::{adam_step, AdamConfig, OptimizerState};
pub use backward::backward_seq;
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use forward::{
    forward_batch, forward_padded, forward_seq, gru_step, inputs_for, is_masked_action,
    masked_log_probs, sequence_log_prob, value_estimate, GruState, SeqForward, StepTrace, EOS_ID,
    GO_ID, PAD_ID,
};
pub use params::{CriticHead, Gradients, GruLayer, ModelDims, PolicyParams};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("critic head absent")]
    CriticAbsent,
    #[error("non-finite loss")]
    NonFiniteLoss,
    #[error("bad checkpoint magic")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    VersionUnsupported(u32),
    #[error("checkpoint manifest mismatch: {0}")]
    ManifestShapeMismatch(String),
    #[error("checkpoint data truncated")]
    TruncatedFile,
    #[error("checkpoint header: {0}")]
    Header(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
