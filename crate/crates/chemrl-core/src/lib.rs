//! Pretraining and policy-gradient fine-tuning of a recurrent chemical
//! language model against pluggable molecular scoring functions.
//!
//! The crate is organized around a small set of subsystems:
//!
//! - [`chem`]: SMILES parsing, descriptors, fingerprints, canonical keys
//! - [`vocab`] / [`env`]: tokenization and the token-level generation MDP
//! - [`policy`]: the embedding + GRU + projection network with exact
//!   reverse-mode gradients, Adam, and checkpointing
//! - [`pretrain`]: teacher-forced maximum-likelihood training of the prior
//! - [`rl`]: REINFORCE, REINVENT, AHC, A2C, PPO and PPOD fine-tuning with
//!   experience replay, likelihood penalty, and KL-to-prior regularization
//! - [`scoring`]: oracles, the diversity filter, and chemistry filters
//! - [`metrics`] / [`history`]: run records and evaluation metrics
//!
//! Batch-level inner loops (rollouts, backpropagation, scoring,
//! fingerprinting) are data-parallel via rayon under the default
//! `parallel` feature and fall back to sequential execution without it;
//! results are bit-identical either way.

pub mod chem;
pub mod env;
pub mod history;
pub mod metrics;
pub mod par;
pub mod policy;
pub mod pretrain;
pub mod rl;
pub mod scoring;
pub mod seeding;
pub mod toy;
pub mod vocab;
