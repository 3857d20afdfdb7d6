//! Forward evaluation: recurrent steps, cached sequences, and the action
//! distribution.
//!
//! The action distribution is the softmax over logits with GO and PAD
//! structurally excluded (their log-probabilities are -inf and they are
//! never sampled); EOS remains a legal action. Closed-form "uniform over V
//! actions" statements therefore count legal actions.

use ndarray::{Array1, Array2, Array3, ArrayView1, ArrayView2};

use super::params::{GruLayer, PolicyParams};
use super::PolicyError;
use crate::par;

pub const GO_ID: u32 = 0;
pub const EOS_ID: u32 = 1;
pub const PAD_ID: u32 = 2;

/// Ids excluded from the action distribution.
pub fn is_masked_action(id: u32) -> bool {
    id == GO_ID || id == PAD_ID
}

/// Hidden state per layer.
#[derive(Debug, Clone)]
pub struct GruState {
    pub h: Vec<Array1<f64>>,
}

impl GruState {
    pub fn zeros(params: &PolicyParams) -> GruState {
        GruState {
            h: vec![Array1::zeros(params.dims.hidden); params.dims.layers],
        }
    }
}

/// Per-step, per-layer activations kept for backpropagation.
#[derive(Debug, Clone)]
pub struct StepTrace {
    pub z: Vec<Array1<f64>>,
    pub r: Vec<Array1<f64>>,
    pub n: Vec<Array1<f64>>,
    pub h_prev: Vec<Array1<f64>>,
    pub h: Vec<Array1<f64>>,
}

/// One cached forward pass over a single input sequence.
#[derive(Debug, Clone)]
pub struct SeqForward {
    /// Input ids (GO followed by the shifted actions).
    pub ids: Vec<u32>,
    pub steps: Vec<StepTrace>,
    pub logits: Array2<f64>,    // [T, V]
    pub log_probs: Array2<f64>, // [T, V], masked log-softmax
}

impl SeqForward {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Hidden state of the last layer at each step, as [T, H].
    pub fn hidden(&self) -> Array2<f64> {
        let t = self.steps.len();
        let h = self.steps[0].h.last().expect("at least one layer").len();
        let mut out = Array2::zeros((t, h));
        for (i, step) in self.steps.iter().enumerate() {
            out.row_mut(i)
                .assign(step.h.last().expect("at least one layer"));
        }
        out
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Advance the recurrence by one input id; returns raw logits and the
/// activations of the step.
pub fn gru_step(params: &PolicyParams, state: &mut GruState, id: u32) -> (Array1<f64>, StepTrace) {
    let mut trace = StepTrace {
        z: Vec::with_capacity(params.dims.layers),
        r: Vec::with_capacity(params.dims.layers),
        n: Vec::with_capacity(params.dims.layers),
        h_prev: Vec::with_capacity(params.dims.layers),
        h: Vec::with_capacity(params.dims.layers),
    };
    let mut x: Array1<f64> = params.embedding.row(id as usize).to_owned();
    for (layer, h_prev) in params.gru.iter().zip(state.h.iter_mut()) {
        let (z, r, n, h) = gru_cell(layer, &x, h_prev);
        trace.z.push(z);
        trace.r.push(r);
        trace.n.push(n);
        trace.h_prev.push(h_prev.clone());
        trace.h.push(h.clone());
        *h_prev = h.clone();
        x = h;
    }
    let logits = params.head_w.dot(&x) + &params.head_b;
    (logits, trace)
}

fn gru_cell(
    layer: &GruLayer,
    x: &Array1<f64>,
    h_prev: &Array1<f64>,
) -> (Array1<f64>, Array1<f64>, Array1<f64>, Array1<f64>) {
    let z = (layer.w_update.dot(x) + layer.u_update.dot(h_prev) + &layer.b_update)
        .mapv(sigmoid);
    let r = (layer.w_reset.dot(x) + layer.u_reset.dot(h_prev) + &layer.b_reset).mapv(sigmoid);
    let gated = &r * h_prev;
    let n = (layer.w_cand.dot(x) + layer.u_cand.dot(&gated) + &layer.b_cand).mapv(f64::tanh);
    let h = (1.0 - &z) * &n + &z * h_prev;
    (z, r, n, h)
}

/// Masked log-softmax of one logits row.
pub fn masked_log_probs(logits: &ArrayView1<f64>) -> Array1<f64> {
    let mut max = f64::NEG_INFINITY;
    for (i, &v) in logits.iter().enumerate() {
        if !is_masked_action(i as u32) && v > max {
            max = v;
        }
    }
    let mut sum = 0.0;
    for (i, &v) in logits.iter().enumerate() {
        if !is_masked_action(i as u32) {
            sum += (v - max).exp();
        }
    }
    let lse = max + sum.ln();
    Array1::from_shape_fn(logits.len(), |i| {
        if is_masked_action(i as u32) {
            f64::NEG_INFINITY
        } else {
            logits[i] - lse
        }
    })
}

/// Cached forward pass over one id sequence.
pub fn forward_seq(params: &PolicyParams, ids: &[u32]) -> SeqForward {
    let t = ids.len();
    let v = params.dims.vocab;
    let mut state = GruState::zeros(params);
    let mut steps = Vec::with_capacity(t);
    let mut logits = Array2::zeros((t, v));
    let mut log_probs = Array2::zeros((t, v));
    for (i, &id) in ids.iter().enumerate() {
        let (row, trace) = gru_step(params, &mut state, id);
        log_probs.row_mut(i).assign(&masked_log_probs(&row.view()));
        logits.row_mut(i).assign(&row);
        steps.push(trace);
    }
    SeqForward {
        ids: ids.to_vec(),
        steps,
        logits,
        log_probs,
    }
}

/// Forward every sequence of a batch (data-parallel over rows).
pub fn forward_batch(params: &PolicyParams, batch: &[Vec<u32>]) -> Vec<SeqForward> {
    par::map(batch, |ids| forward_seq(params, ids))
}

/// Padded-batch forward: `ids` is [B, T] with PAD beyond each row's mask
/// prefix; returns logits [B, T, V] (zero rows beyond the mask).
pub fn forward_padded(
    params: &PolicyParams,
    ids: &ArrayView2<u32>,
    mask: &ArrayView2<bool>,
) -> Result<Array3<f64>, PolicyError> {
    if ids.dim() != mask.dim() {
        return Err(PolicyError::ShapeMismatch(format!(
            "ids {:?} vs mask {:?}",
            ids.dim(),
            mask.dim()
        )));
    }
    if ids.iter().any(|&i| i as usize >= params.dims.vocab) {
        return Err(PolicyError::ShapeMismatch(
            "id out of vocabulary range".to_string(),
        ));
    }
    let (b, t) = ids.dim();
    let rows: Vec<Vec<u32>> = (0..b)
        .map(|row| {
            let len = (0..t).take_while(|&i| mask[(row, i)]).count();
            ids.row(row).iter().take(len).copied().collect()
        })
        .collect();
    let fwds = forward_batch(params, &rows);
    let mut out = Array3::zeros((b, t, params.dims.vocab));
    for (row, fwd) in fwds.iter().enumerate() {
        for step in 0..fwd.len() {
            out.slice_mut(ndarray::s![row, step, ..])
                .assign(&fwd.logits.row(step));
        }
    }
    Ok(out)
}

/// Sum of masked log-probabilities of `actions` at their actionable steps.
/// Inputs are GO followed by the actions shifted by one.
pub fn sequence_log_prob(params: &PolicyParams, actions: &[u32], actionable: &[bool]) -> f64 {
    assert_eq!(actions.len(), actionable.len());
    if actions.is_empty() {
        return 0.0;
    }
    let fwd = forward_seq(params, &inputs_for(actions));
    actions
        .iter()
        .zip(actionable)
        .enumerate()
        .filter(|(_, (_, &a))| a)
        .map(|(t, (&action, _))| fwd.log_probs[(t, action as usize)])
        .sum()
}

/// GO followed by all but the last action: the inputs whose step
/// distributions score `actions`.
pub fn inputs_for(actions: &[u32]) -> Vec<u32> {
    let mut ids = Vec::with_capacity(actions.len());
    ids.push(GO_ID);
    ids.extend_from_slice(&actions[..actions.len().saturating_sub(1)]);
    ids
}

/// Per-step critic values over the last-layer hidden states.
pub fn value_estimate(
    params: &PolicyParams,
    hidden: &ArrayView2<f64>,
) -> Result<Array1<f64>, PolicyError> {
    let critic = params.critic.as_ref().ok_or(PolicyError::CriticAbsent)?;
    Ok(hidden.dot(&critic.w) + critic.b[0])
}
