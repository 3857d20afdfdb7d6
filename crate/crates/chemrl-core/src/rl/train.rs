//! The budgeted fine-tuning loop.
//!
//! Each iteration samples a batch, scores every molecule (one oracle call
//! per generated molecule, duplicates and invalids included), mixes in
//! replayed trajectories where configured, assembles the algorithm's loss,
//! and applies one (or, for the clipped-surrogate algorithms, several)
//! Adam updates. The loop stops when exactly `budget` molecules have been
//! scored.

use crate::env::{rollout, trajectory_log_prob, PromptSpec, Trajectory};
use crate::history::RunHistory;
use crate::policy::{adam_step, AdamConfig, OptimizerState, PolicyParams};
use crate::scoring::Scorer;
use crate::vocab::Vocabulary;
use crate::{par, seeding};

use super::losses::{
    a2c_terms, advantage_constants, ahc_filter, backward_terms, batch_forward, critic_features,
    kl_terms, penalty_terms, ppo_terms, reinforce_terms, reinvent_terms, step_logps,
    ActorCriticWeights,
};
use super::replay::ReplayBuffer;
use super::{AlgoConfig, Algorithm, RlError};

/// Everything a run needs besides the algorithm config.
pub struct TrainSetup<'a> {
    pub prior: &'a PolicyParams,
    pub vocab: &'a Vocabulary,
    pub prompt: PromptSpec,
    pub seed: u64,
    /// Label written into the history (defaults to the algorithm name).
    pub label: Option<String>,
}

pub struct RunArtifacts {
    pub history: RunHistory,
    pub params: PolicyParams,
    pub losses: Vec<f64>,
}

const BASELINE_EMA: f64 = 0.1;

pub fn train_loop(
    setup: &TrainSetup<'_>,
    scorer: &mut Scorer,
    cfg: &AlgoConfig,
) -> Result<RunArtifacts, RlError> {
    cfg.validate()?;
    let label = setup
        .label
        .clone()
        .unwrap_or_else(|| cfg.algorithm.name().to_string());
    let mut agent = setup.prior.clone();
    if cfg.algorithm.needs_critic() {
        agent = agent.with_critic();
    }
    let mut optimizer = OptimizerState::new(
        &agent,
        AdamConfig {
            lr: cfg.learning_rate,
            ..AdamConfig::default()
        },
    );
    let mut buffer = ReplayBuffer::new(cfg.replay_capacity);
    let mut history = RunHistory::new(&label, setup.seed);
    let mut losses = Vec::new();
    let mut baseline: Option<f64> = None;

    let rollout_seed = seeding::split(setup.seed, "rl.rollout");
    let replay_seed = seeding::split(setup.seed, "rl.replay");
    let ppo_seed = seeding::split(setup.seed, "rl.ppo");

    let mut scored = 0usize;
    let mut iteration = 0u64;
    while scored < cfg.budget {
        let batch_n = cfg.batch_size.min(cfg.budget - scored);
        let mut batch = rollout(
            &agent,
            None,
            setup.vocab,
            batch_n,
            cfg.max_len,
            seeding::split_index(rollout_seed, iteration),
            &setup.prompt,
        )?;
        let smiles: Vec<String> = batch.iter().map(|t| t.smiles.clone()).collect();
        let rewards = scorer.score_batch(&smiles)?;
        for (traj, &reward) in batch.iter_mut().zip(&rewards) {
            traj.reward = reward;
            history.push(&traj.smiles, reward);
        }
        scored += batch_n;
        assert!(scored <= cfg.budget, "budget overrun");

        // hill-climb filtering applies to the on-policy batch only
        let mut training: Vec<Trajectory> = if cfg.algorithm == Algorithm::Ahc {
            ahc_filter(&batch, cfg.topk_fraction)
                .into_iter()
                .map(|i| batch[i].clone())
                .collect()
        } else {
            batch.clone()
        };
        if cfg.replay {
            let mut rng = seeding::rng_from(seeding::split_index(replay_seed, iteration));
            training.extend(buffer.sample(cfg.replay_sample, &mut rng));
        }

        let loss = update_agent(
            &mut agent,
            &mut optimizer,
            setup,
            cfg,
            &training,
            &mut baseline,
            seeding::split_index(ppo_seed, iteration),
        )?;
        losses.push(loss);

        if cfg.replay {
            for traj in &batch {
                buffer.insert(traj);
            }
        }
        iteration += 1;
    }
    assert_eq!(history.len(), cfg.budget, "history length equals budget");
    Ok(RunArtifacts {
        history,
        params: agent,
        losses,
    })
}

#[allow(clippy::too_many_arguments)]
fn update_agent(
    agent: &mut PolicyParams,
    optimizer: &mut OptimizerState,
    setup: &TrainSetup<'_>,
    cfg: &AlgoConfig,
    training: &[Trajectory],
    baseline: &mut Option<f64>,
    ppo_iteration_seed: u64,
) -> Result<f64, RlError> {
    if training.is_empty() {
        return Ok(0.0);
    }
    match cfg.algorithm {
        Algorithm::Reinforce => {
            let fwd = batch_forward(agent, training);
            let b = if cfg.baseline {
                let mean =
                    training.iter().map(|t| t.reward).sum::<f64>() / training.len() as f64;
                let value = match *baseline {
                    None => mean,
                    Some(prev) => (1.0 - BASELINE_EMA) * prev + BASELINE_EMA * mean,
                };
                *baseline = Some(value);
                Some(value)
            } else {
                None
            };
            let mut terms = reinforce_terms(&fwd, training, b);
            if cfg.penalty_kappa > 0.0 {
                terms.add(penalty_terms(&fwd, training, cfg.penalty_kappa)?);
            }
            let (loss, mut grads) = backward_terms(agent, &fwd, &terms)?;
            if let Some(max) = cfg.grad_clip {
                grads.clip_global_norm(max);
            }
            adam_step(agent, &grads, optimizer);
            Ok(loss)
        }
        Algorithm::Reinvent | Algorithm::Ahc => {
            let fwd = batch_forward(agent, training);
            let prior_logps: Vec<f64> =
                par::map(training, |t| trajectory_log_prob(setup.prior, t));
            let mut terms = reinvent_terms(&fwd, training, &prior_logps, cfg.sigma)?;
            if cfg.penalty_kappa > 0.0 {
                terms.add(penalty_terms(&fwd, training, cfg.penalty_kappa)?);
            }
            let (loss, mut grads) = backward_terms(agent, &fwd, &terms)?;
            if let Some(max) = cfg.grad_clip {
                grads.clip_global_norm(max);
            }
            adam_step(agent, &grads, optimizer);
            Ok(loss)
        }
        Algorithm::A2c => {
            let fwd = batch_forward(agent, training);
            let advantages = advantage_constants(agent, &fwd, training)?;
            let features = critic_features(&fwd);
            let weights = ActorCriticWeights {
                value_coef: cfg.value_coef,
                entropy_coef: cfg.entropy_coef,
            };
            let mut terms = a2c_terms(agent, &fwd, training, &advantages, &features, weights)?;
            if cfg.kl_beta > 0.0 {
                let prior_fwd = batch_forward(setup.prior, training);
                terms.add(kl_terms(&fwd, &prior_fwd, training, cfg.kl_beta)?);
            }
            let (loss, mut grads) = backward_terms(agent, &fwd, &terms)?;
            if let Some(max) = cfg.grad_clip {
                grads.clip_global_norm(max);
            }
            adam_step(agent, &grads, optimizer);
            Ok(loss)
        }
        Algorithm::Ppo | Algorithm::Ppod => {
            // collection-time constants
            let fwd0 = batch_forward(agent, training);
            let advantages = advantage_constants(agent, &fwd0, training)?;
            let old_logps = step_logps(&fwd0, training);
            let weights = ActorCriticWeights {
                value_coef: cfg.value_coef,
                entropy_coef: cfg.entropy_coef,
            };
            let mut last_loss = 0.0;
            for epoch in 0..cfg.ppo_epochs {
                let mut order: Vec<usize> = (0..training.len()).collect();
                use rand::seq::SliceRandom;
                order.shuffle(&mut seeding::rng_from(seeding::split_index(
                    ppo_iteration_seed,
                    epoch as u64,
                )));
                let mb_size = training.len().div_ceil(cfg.ppo_minibatches);
                for mb in order.chunks(mb_size) {
                    let mb_trajs: Vec<Trajectory> =
                        mb.iter().map(|&i| training[i].clone()).collect();
                    let mb_adv: Vec<Vec<f64>> =
                        mb.iter().map(|&i| advantages[i].clone()).collect();
                    let mb_old: Vec<Vec<f64>> =
                        mb.iter().map(|&i| old_logps[i].clone()).collect();
                    let fwd = batch_forward(agent, &mb_trajs);
                    let features = critic_features(&fwd);
                    let mut terms = ppo_terms(
                        agent,
                        &fwd,
                        &mb_trajs,
                        &mb_adv,
                        &mb_old,
                        &features,
                        cfg.ppo_clip,
                        weights,
                    )?;
                    if cfg.kl_beta > 0.0 {
                        let prior_fwd = batch_forward(setup.prior, &mb_trajs);
                        terms.add(kl_terms(&fwd, &prior_fwd, &mb_trajs, cfg.kl_beta)?);
                    }
                    let (loss, mut grads) = backward_terms(agent, &fwd, &terms)?;
                    if let Some(max) = cfg.grad_clip {
                        grads.clip_global_norm(max);
                    }
                    adam_step(agent, &grads, optimizer);
                    last_loss = loss;
                }
            }
            Ok(last_loss)
        }
    }
}
