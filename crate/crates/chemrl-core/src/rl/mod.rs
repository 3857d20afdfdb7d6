//! Policy-gradient fine-tuning: six algorithms over shared loss machinery,
//! experience replay, likelihood penalty, KL-to-prior regularization, and
//! the budgeted training loop.

mod losses;
mod replay;
mod train;

pub use losses::{
    critic_features,
    a2c_terms, advantage_constants, ahc_filter, backward_terms, batch_forward, kl_row, kl_terms,
    penalty_terms, ppo_terms, reinforce_terms, reinvent_terms, step_logps, ActorCriticWeights,
    BatchForward, LossTerms, TrajForward, RATIO_CLAMP,
};
pub use replay::ReplayBuffer;
pub use train::{train_loop, RunArtifacts, TrainSetup};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RlError {
    #[error("prior log-probabilities are missing")]
    MissingPriorLogProb,
    #[error("sequence log-probability is zero; the likelihood penalty is undefined")]
    DegenerateCertainSequence,
    #[error("critic head absent")]
    CriticAbsent,
    #[error("non-finite loss")]
    NonFiniteLoss,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid algorithm configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] crate::env::EnvError),
    #[error(transparent)]
    Scoring(#[from] crate::scoring::ScoringError),
    #[error(transparent)]
    Policy(#[from] crate::policy::PolicyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Reinforce,
    Reinvent,
    Ahc,
    A2c,
    Ppo,
    Ppod,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Reinforce => "reinforce",
            Algorithm::Reinvent => "reinvent",
            Algorithm::Ahc => "ahc",
            Algorithm::A2c => "a2c",
            Algorithm::Ppo => "ppo",
            Algorithm::Ppod => "ppod",
        }
    }

    pub fn needs_critic(self) -> bool {
        matches!(self, Algorithm::A2c | Algorithm::Ppo | Algorithm::Ppod)
    }

    pub fn uses_augmented_likelihood(self) -> bool {
        matches!(self, Algorithm::Reinvent | Algorithm::Ahc)
    }
}

/// Hyperparameters of one fine-tuning run.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgoConfig {
    pub algorithm: Algorithm,
    /// Reward-shaping coefficient of the augmented likelihood.
    pub sigma: f64,
    /// Top fraction kept by the hill-climb filter.
    pub topk_fraction: f64,
    /// Likelihood-penalty coefficient; 0 disables.
    pub penalty_kappa: f64,
    /// KL-to-prior weight for the advantage-based algorithms.
    pub kl_beta: f64,
    pub ppo_clip: f64,
    pub ppo_epochs: usize,
    pub ppo_minibatches: usize,
    pub replay: bool,
    pub replay_sample: usize,
    pub replay_capacity: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    /// Moving-average reward baseline for REINFORCE.
    pub baseline: bool,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Total scored molecules.
    pub budget: usize,
    pub max_len: usize,
    pub grad_clip: Option<f64>,
}

impl AlgoConfig {
    /// Shipped preset per algorithm. "reinvent-molopt" differs from
    /// "reinvent" only by hyperparameters (larger sigma, larger replay
    /// sample).
    pub fn preset(algorithm: Algorithm) -> AlgoConfig {
        let base = AlgoConfig {
            algorithm,
            sigma: 60.0,
            topk_fraction: 1.0,
            penalty_kappa: 0.0,
            kl_beta: 0.0,
            ppo_clip: 0.2,
            ppo_epochs: 3,
            ppo_minibatches: 2,
            replay: false,
            replay_sample: 10,
            replay_capacity: 100,
            entropy_coef: 0.0,
            value_coef: 0.5,
            baseline: false,
            learning_rate: 1e-3,
            batch_size: 64,
            budget: 10_000,
            max_len: 100,
            grad_clip: Some(5.0),
        };
        match algorithm {
            Algorithm::Reinforce => AlgoConfig {
                replay: true,
                ..base
            },
            Algorithm::Reinvent => AlgoConfig {
                replay: true,
                penalty_kappa: 5000.0,
                ..base
            },
            Algorithm::Ahc => AlgoConfig {
                replay: true,
                topk_fraction: 0.5,
                ..base
            },
            Algorithm::A2c => AlgoConfig {
                kl_beta: 0.01,
                entropy_coef: 0.01,
                learning_rate: 5e-4,
                ..base
            },
            Algorithm::Ppo => AlgoConfig {
                kl_beta: 0.01,
                entropy_coef: 0.01,
                learning_rate: 5e-4,
                ..base
            },
            Algorithm::Ppod => AlgoConfig {
                kl_beta: 0.01,
                entropy_coef: 0.01,
                learning_rate: 5e-4,
                replay: true,
                ..base
            },
        }
    }

    /// The reinvent preset tuned for sample efficiency.
    pub fn reinvent_molopt() -> AlgoConfig {
        AlgoConfig {
            sigma: 128.0,
            replay_sample: 24,
            ..AlgoConfig::preset(Algorithm::Reinvent)
        }
    }

    pub fn validate(&self) -> Result<(), RlError> {
        let fail = |msg: String| Err(RlError::Config(msg));
        if self.sigma < 0.0 {
            return fail(format!("sigma must be >= 0, got {}", self.sigma));
        }
        if !(self.topk_fraction > 0.0 && self.topk_fraction <= 1.0) {
            return fail(format!(
                "topk_fraction must lie in (0, 1], got {}",
                self.topk_fraction
            ));
        }
        if self.penalty_kappa < 0.0 {
            return fail(format!("penalty_kappa must be >= 0, got {}", self.penalty_kappa));
        }
        if self.kl_beta < 0.0 {
            return fail(format!("kl_beta must be >= 0, got {}", self.kl_beta));
        }
        if !(self.ppo_clip > 0.0 && self.ppo_clip < 1.0) {
            return fail(format!("ppo_clip must lie in (0, 1), got {}", self.ppo_clip));
        }
        if self.ppo_epochs == 0 || self.ppo_minibatches == 0 {
            return fail("ppo_epochs and ppo_minibatches must be positive".to_string());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive".to_string());
        }
        if self.budget < self.batch_size {
            return fail(format!(
                "budget {} must be at least the batch size {}",
                self.budget, self.batch_size
            ));
        }
        if self.max_len == 0 {
            return fail("max_len must be positive".to_string());
        }
        Ok(())
    }
}
