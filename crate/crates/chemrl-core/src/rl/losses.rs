//! Loss machinery shared by the fine-tuning algorithms.
//!
//! Every loss is a scalar function of the agent parameters given explicit
//! constants (rewards, prior log-probabilities, advantages, old
//! log-probabilities), so each one is checkable against finite differences.
//! Losses contribute gradients with respect to the per-step logits of a
//! shared batch forward pass; one backward pass per sequence then yields
//! parameter gradients, reduced in batch order.

use ndarray::{Array1, Array2};

use crate::env::Trajectory;
use crate::policy::{
    backward_seq, forward_seq, inputs_for, is_masked_action, value_estimate, Gradients,
    PolicyParams,
};
use crate::par;

use super::RlError;

/// Forward evaluation of one trajectory (one pass per segment).
#[derive(Debug, Clone)]
pub struct TrajForward {
    pub fwds: Vec<crate::policy::SeqForward>,
    /// (segment, step-within-segment) for every trajectory step.
    pub step_at: Vec<(usize, usize)>,
    /// Sum of actionable log-probabilities under the evaluated parameters.
    pub seq_logp: f64,
}

#[derive(Debug, Clone)]
pub struct BatchForward {
    pub evals: Vec<TrajForward>,
}

/// Evaluate the current policy on every trajectory (data-parallel).
pub fn batch_forward(params: &PolicyParams, trajs: &[Trajectory]) -> BatchForward {
    let evals = par::map(trajs, |traj| {
        let mut fwds = Vec::with_capacity(traj.segment_starts.len());
        let mut step_at = Vec::with_capacity(traj.steps.len());
        let mut seq_logp = 0.0;
        for (seg_idx, segment) in traj.segments().iter().enumerate() {
            let actions: Vec<u32> = segment.iter().map(|s| s.action).collect();
            let fwd = forward_seq(params, &inputs_for(&actions));
            for (t, step) in segment.iter().enumerate() {
                step_at.push((seg_idx, t));
                if step.actionable {
                    seq_logp += fwd.log_probs[(t, step.action as usize)];
                }
            }
            fwds.push(fwd);
        }
        TrajForward {
            fwds,
            step_at,
            seq_logp,
        }
    });
    BatchForward { evals }
}

/// Accumulated upstream gradients for one batch, plus the scalar loss.
/// Critic-head gradients are closed-form (the value term regresses on
/// constant hidden features) and bypass backpropagation through time.
pub struct LossTerms {
    pub loss: f64,
    /// Per trajectory, per segment: dL/dlogits.
    pub dlogits: Vec<Vec<Array2<f64>>>,
    /// (dL/dw, dL/db) of the critic head.
    pub critic_grad: Option<(Array1<f64>, f64)>,
}

impl LossTerms {
    pub fn zeros(fwd: &BatchForward) -> LossTerms {
        LossTerms {
            loss: 0.0,
            dlogits: fwd
                .evals
                .iter()
                .map(|e| {
                    e.fwds
                        .iter()
                        .map(|f| Array2::zeros(f.logits.dim()))
                        .collect()
                })
                .collect(),
            critic_grad: None,
        }
    }

    pub fn add(&mut self, other: LossTerms) {
        self.loss += other.loss;
        for (mine, theirs) in self.dlogits.iter_mut().zip(other.dlogits) {
            for (m, t) in mine.iter_mut().zip(theirs) {
                *m += &t;
            }
        }
        if let Some((w, b)) = other.critic_grad {
            match &mut self.critic_grad {
                None => self.critic_grad = Some((w, b)),
                Some((mw, mb)) => {
                    *mw += &w;
                    *mb += b;
                }
            }
        }
    }
}

/// Last-layer hidden features per trajectory and segment, used as the
/// (detached) critic regression inputs.
pub fn critic_features(fwd: &BatchForward) -> Vec<Vec<Array2<f64>>> {
    fwd.evals
        .iter()
        .map(|e| e.fwds.iter().map(|f| f.hidden()).collect())
        .collect()
}

/// d(log pi(a)) / dlogits = onehot(a) - p, accumulated with coefficient `c`
/// at one step.
fn add_logp_grad(dlogits: &mut Array2<f64>, fwd: &crate::policy::SeqForward, t: usize, action: u32, c: f64) {
    if c == 0.0 {
        return;
    }
    for a in 0..dlogits.ncols() {
        let lp = fwd.log_probs[(t, a)];
        if lp != f64::NEG_INFINITY {
            dlogits[(t, a)] -= c * lp.exp();
        }
    }
    dlogits[(t, action as usize)] += c;
}

/// Accumulate `c * dS/dlogits` for a whole trajectory, where S is its
/// summed actionable log-probability.
fn add_seq_grad(terms: &mut LossTerms, fwd: &TrajForward, traj: &Trajectory, idx: usize, c: f64) {
    for (step_idx, step) in traj.steps.iter().enumerate() {
        if !step.actionable {
            continue;
        }
        let (seg, t) = fwd.step_at[step_idx];
        add_logp_grad(
            &mut terms.dlogits[idx][seg],
            &fwd.fwds[seg],
            t,
            step.action,
            c,
        );
    }
}

/// REINFORCE: mean over the batch of -(R - baseline) * log P(tau).
pub fn reinforce_terms(
    fwd: &BatchForward,
    trajs: &[Trajectory],
    baseline: Option<f64>,
) -> LossTerms {
    let mut terms = LossTerms::zeros(fwd);
    let b = baseline.unwrap_or(0.0);
    let scale = 1.0 / trajs.len() as f64;
    for (i, (traj, eval)) in trajs.iter().zip(&fwd.evals).enumerate() {
        let advantage = traj.reward - b;
        terms.loss -= scale * advantage * eval.seq_logp;
        add_seq_grad(&mut terms, eval, traj, i, -scale * advantage);
    }
    terms
}

/// Squared augmented-likelihood regression: mean over the batch of
/// (log P_prior + sigma * R - log P_agent)^2.
pub fn reinvent_terms(
    fwd: &BatchForward,
    trajs: &[Trajectory],
    prior_logps: &[f64],
    sigma: f64,
) -> Result<LossTerms, RlError> {
    if prior_logps.len() != trajs.len() {
        return Err(RlError::MissingPriorLogProb);
    }
    let mut terms = LossTerms::zeros(fwd);
    let scale = 1.0 / trajs.len() as f64;
    for (i, (traj, eval)) in trajs.iter().zip(&fwd.evals).enumerate() {
        let gap = prior_logps[i] + sigma * traj.reward - eval.seq_logp;
        terms.loss += scale * gap * gap;
        add_seq_grad(&mut terms, eval, traj, i, -2.0 * scale * gap);
    }
    Ok(terms)
}

/// Indices of the ceil(rho * B) highest-reward trajectories, ties broken by
/// earliest batch index; returned in original batch order.
pub fn ahc_filter(trajs: &[Trajectory], rho: f64) -> Vec<usize> {
    assert!(rho > 0.0 && rho <= 1.0, "rho in (0, 1]");
    let keep = ((rho * trajs.len() as f64).ceil() as usize).clamp(1, trajs.len());
    let mut order: Vec<usize> = (0..trajs.len()).collect();
    order.sort_by(|&a, &b| {
        trajs[b]
            .reward
            .partial_cmp(&trajs[a].reward)
            .expect("rewards are finite")
            .then(a.cmp(&b))
    });
    let mut selected: Vec<usize> = order[..keep].to_vec();
    selected.sort_unstable();
    selected
}

/// Mean over the batch of -kappa / log P_agent, discouraging high-likelihood
/// sequences.
pub fn penalty_terms(
    fwd: &BatchForward,
    trajs: &[Trajectory],
    kappa: f64,
) -> Result<LossTerms, RlError> {
    let mut terms = LossTerms::zeros(fwd);
    if kappa == 0.0 {
        return Ok(terms);
    }
    let scale = 1.0 / trajs.len() as f64;
    for (i, (traj, eval)) in trajs.iter().zip(&fwd.evals).enumerate() {
        if eval.seq_logp == 0.0 {
            return Err(RlError::DegenerateCertainSequence);
        }
        terms.loss += scale * (-kappa / eval.seq_logp);
        add_seq_grad(
            &mut terms,
            eval,
            traj,
            i,
            scale * kappa / (eval.seq_logp * eval.seq_logp),
        );
    }
    Ok(terms)
}

/// Per-step advantage constants R - V(s_t) at actionable steps, evaluated
/// with the supplied parameters (acting as the data-collection snapshot).
pub fn advantage_constants(
    params: &PolicyParams,
    fwd: &BatchForward,
    trajs: &[Trajectory],
) -> Result<Vec<Vec<f64>>, RlError> {
    if params.critic.is_none() {
        return Err(RlError::CriticAbsent);
    }
    let mut out = Vec::with_capacity(trajs.len());
    for (traj, eval) in trajs.iter().zip(&fwd.evals) {
        let values: Vec<Array1<f64>> = eval
            .fwds
            .iter()
            .map(|f| value_estimate(params, &f.hidden().view()))
            .collect::<Result<_, _>>()?;
        let mut adv = Vec::with_capacity(traj.actionable_len());
        for (step_idx, step) in traj.steps.iter().enumerate() {
            if step.actionable {
                let (seg, t) = eval.step_at[step_idx];
                adv.push(traj.reward - values[seg][t]);
            }
        }
        out.push(adv);
    }
    Ok(out)
}

/// Old per-actionable-step log-probabilities captured at collection time.
pub fn step_logps(fwd: &BatchForward, trajs: &[Trajectory]) -> Vec<Vec<f64>> {
    trajs
        .iter()
        .zip(&fwd.evals)
        .map(|(traj, eval)| {
            traj.steps
                .iter()
                .enumerate()
                .filter(|(_, s)| s.actionable)
                .map(|(step_idx, s)| {
                    let (seg, t) = eval.step_at[step_idx];
                    eval.fwds[seg].log_probs[(t, s.action as usize)]
                })
                .collect()
        })
        .collect()
}

fn total_actionable(trajs: &[Trajectory]) -> usize {
    trajs.iter().map(Trajectory::actionable_len).sum()
}

/// Entropy of one masked step distribution and its dlogits contribution.
fn entropy_row(fwd: &crate::policy::SeqForward, t: usize) -> f64 {
    let mut h = 0.0;
    for a in 0..fwd.log_probs.ncols() {
        let lp = fwd.log_probs[(t, a)];
        if lp != f64::NEG_INFINITY {
            h -= lp.exp() * lp;
        }
    }
    h
}

fn add_entropy_grad(dlogits: &mut Array2<f64>, fwd: &crate::policy::SeqForward, t: usize, c: f64) {
    // dH/dz_j = -p_j (log p_j + H)
    if c == 0.0 {
        return;
    }
    let h = entropy_row(fwd, t);
    for a in 0..dlogits.ncols() {
        let lp = fwd.log_probs[(t, a)];
        if lp != f64::NEG_INFINITY {
            dlogits[(t, a)] += c * (-lp.exp() * (lp + h));
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ActorCriticWeights {
    pub value_coef: f64,
    pub entropy_coef: f64,
}

/// Advantage actor-critic terms: policy term with constant advantages,
/// value regression on constant hidden features (its gradient flows only
/// to the critic head), and an entropy bonus.
pub fn a2c_terms(
    params: &PolicyParams,
    fwd: &BatchForward,
    trajs: &[Trajectory],
    advantages: &[Vec<f64>],
    features: &[Vec<Array2<f64>>],
    weights: ActorCriticWeights,
) -> Result<LossTerms, RlError> {
    let critic = params.critic.as_ref().ok_or(RlError::CriticAbsent)?;
    let n = total_actionable(trajs).max(1) as f64;
    let mut terms = LossTerms::zeros(fwd);
    let mut critic_w = Array1::zeros(critic.w.len());
    let mut critic_b = 0.0;
    for (i, (traj, eval)) in trajs.iter().zip(&fwd.evals).enumerate() {
        let mut adv_iter = advantages[i].iter();
        for (step_idx, step) in traj.steps.iter().enumerate() {
            if !step.actionable {
                continue;
            }
            let advantage = *adv_iter.next().expect("advantage per actionable step");
            let (seg, t) = eval.step_at[step_idx];
            let logp = eval.fwds[seg].log_probs[(t, step.action as usize)];
            // policy term
            terms.loss -= advantage * logp / n;
            add_logp_grad(
                &mut terms.dlogits[i][seg],
                &eval.fwds[seg],
                t,
                step.action,
                -advantage / n,
            );
            // value term: (R - v)^2 on constant features, critic head only
            let feature = features[i][seg].row(t);
            let value = critic.w.dot(&feature) + critic.b[0];
            let residual = traj.reward - value;
            terms.loss += weights.value_coef * residual * residual / n;
            let dv = weights.value_coef * (-2.0 * residual) / n;
            critic_w.scaled_add(dv, &feature);
            critic_b += dv;
            // entropy bonus
            terms.loss -= weights.entropy_coef * entropy_row(&eval.fwds[seg], t) / n;
            add_entropy_grad(
                &mut terms.dlogits[i][seg],
                &eval.fwds[seg],
                t,
                -weights.entropy_coef / n,
            );
        }
    }
    terms.critic_grad = Some((critic_w, critic_b));
    Ok(terms)
}

/// Importance-ratio clamp guarding replayed data.
pub const RATIO_CLAMP: (f64, f64) = (1e-4, 1e4);

/// Clipped-surrogate terms with value and entropy parts; old log-probs,
/// advantages, and critic features are collection-time constants.
#[allow(clippy::too_many_arguments)]
pub fn ppo_terms(
    params: &PolicyParams,
    fwd: &BatchForward,
    trajs: &[Trajectory],
    advantages: &[Vec<f64>],
    old_logps: &[Vec<f64>],
    features: &[Vec<Array2<f64>>],
    clip: f64,
    weights: ActorCriticWeights,
) -> Result<LossTerms, RlError> {
    let critic = params.critic.as_ref().ok_or(RlError::CriticAbsent)?;
    let n = total_actionable(trajs).max(1) as f64;
    let mut terms = LossTerms::zeros(fwd);
    let mut critic_w = Array1::zeros(critic.w.len());
    let mut critic_b = 0.0;
    for (i, (traj, eval)) in trajs.iter().zip(&fwd.evals).enumerate() {
        let mut actionable_idx = 0usize;
        for (step_idx, step) in traj.steps.iter().enumerate() {
            if !step.actionable {
                continue;
            }
            let advantage = advantages[i][actionable_idx];
            let old = old_logps[i][actionable_idx];
            actionable_idx += 1;
            let (seg, t) = eval.step_at[step_idx];
            let logp = eval.fwds[seg].log_probs[(t, step.action as usize)];
            let raw_ratio = (logp - old).exp();
            let clamped = raw_ratio.clamp(RATIO_CLAMP.0, RATIO_CLAMP.1);
            let unclipped = clamped * advantage;
            let clipped = clamped.clamp(1.0 - clip, 1.0 + clip) * advantage;
            let (surrogate, dsurr_dlogp) = if unclipped <= clipped {
                (unclipped, ratio_grad(raw_ratio) * advantage)
            } else {
                let inside = clamped > 1.0 - clip && clamped < 1.0 + clip;
                (
                    clipped,
                    if inside {
                        ratio_grad(raw_ratio) * advantage
                    } else {
                        0.0
                    },
                )
            };
            terms.loss -= surrogate / n;
            add_logp_grad(
                &mut terms.dlogits[i][seg],
                &eval.fwds[seg],
                t,
                step.action,
                -dsurr_dlogp / n,
            );
            // value + entropy as in a2c
            let feature = features[i][seg].row(t);
            let value = critic.w.dot(&feature) + critic.b[0];
            let residual = traj.reward - value;
            terms.loss += weights.value_coef * residual * residual / n;
            let dv = weights.value_coef * (-2.0 * residual) / n;
            critic_w.scaled_add(dv, &feature);
            critic_b += dv;
            terms.loss -= weights.entropy_coef * entropy_row(&eval.fwds[seg], t) / n;
            add_entropy_grad(
                &mut terms.dlogits[i][seg],
                &eval.fwds[seg],
                t,
                -weights.entropy_coef / n,
            );
        }
    }
    terms.critic_grad = Some((critic_w, critic_b));
    Ok(terms)
}

/// d(ratio)/d(logp), zero where the hard clamp is active.
fn ratio_grad(raw_ratio: f64) -> f64 {
    if raw_ratio < RATIO_CLAMP.0 || raw_ratio > RATIO_CLAMP.1 {
        0.0
    } else {
        raw_ratio
    }
}

/// Mean per-step KL(agent || prior) over actionable steps, weighted by
/// `beta`. The prior forward must evaluate the identical inputs.
pub fn kl_terms(
    fwd: &BatchForward,
    prior_fwd: &BatchForward,
    trajs: &[Trajectory],
    beta: f64,
) -> Result<LossTerms, RlError> {
    let n = total_actionable(trajs).max(1) as f64;
    let mut terms = LossTerms::zeros(fwd);
    if beta == 0.0 {
        return Ok(terms);
    }
    for (i, (traj, eval)) in trajs.iter().zip(&fwd.evals).enumerate() {
        let prior_eval = &prior_fwd.evals[i];
        for (step_idx, step) in traj.steps.iter().enumerate() {
            if !step.actionable {
                continue;
            }
            let (seg, t) = eval.step_at[step_idx];
            let agent_row = &eval.fwds[seg].log_probs;
            let prior_row = &prior_eval.fwds[seg].log_probs;
            if agent_row.ncols() != prior_row.ncols() {
                return Err(RlError::ShapeMismatch(format!(
                    "agent vocab {} vs prior vocab {}",
                    agent_row.ncols(),
                    prior_row.ncols()
                )));
            }
            let kl = kl_row(agent_row, prior_row, t);
            terms.loss += beta * kl / n;
            for a in 0..agent_row.ncols() {
                let lp = agent_row[(t, a)];
                if lp == f64::NEG_INFINITY {
                    continue;
                }
                let lq = prior_row[(t, a)];
                terms.dlogits[i][seg][(t, a)] += beta / n * lp.exp() * (lp - lq - kl);
            }
        }
    }
    Ok(terms)
}

/// KL divergence between two masked log-probability rows.
pub fn kl_row(agent: &Array2<f64>, prior: &Array2<f64>, t: usize) -> f64 {
    let mut kl = 0.0;
    for a in 0..agent.ncols() {
        debug_assert_eq!(
            agent[(t, a)] == f64::NEG_INFINITY,
            prior[(t, a)] == f64::NEG_INFINITY,
            "masked action sets must agree"
        );
        let lp = agent[(t, a)];
        if lp != f64::NEG_INFINITY && !is_masked_action(a as u32) {
            kl += lp.exp() * (lp - prior[(t, a)]);
        }
    }
    kl
}

/// Run the shared backward pass over accumulated terms.
pub fn backward_terms(
    params: &PolicyParams,
    fwd: &BatchForward,
    terms: &LossTerms,
) -> Result<(f64, Gradients), RlError> {
    if !terms.loss.is_finite() {
        return Err(RlError::NonFiniteLoss);
    }
    let indices: Vec<usize> = (0..fwd.evals.len()).collect();
    let partials: Vec<Gradients> = par::map(&indices, |&i| {
        let mut grads = Gradients::zeros_like(params);
        for (seg, seq_fwd) in fwd.evals[i].fwds.iter().enumerate() {
            backward_seq(params, seq_fwd, &terms.dlogits[i][seg], None, &mut grads);
        }
        grads
    });
    let mut total = Gradients::zeros_like(params);
    for g in &partials {
        total.add(g);
    }
    if let Some((w, b)) = &terms.critic_grad {
        let critic = total
            .tensors
            .critic
            .as_mut()
            .expect("critic gradients require a critic head");
        critic.w.scaled_add(1.0, w);
        critic.b[0] += b;
    }
    Ok((terms.loss, total))
}
