//! Learnable tensors of the embedding + GRU + projection network.

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::seeding;

/// Network shape. Ids 0/1/2 are GO/EOS/PAD by vocabulary construction;
/// GO and PAD are structurally excluded from the action distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub vocab: usize,
    pub embed: usize,
    pub hidden: usize,
    pub layers: usize,
    pub critic: bool,
}

impl ModelDims {
    pub fn new(vocab: usize, embed: usize, hidden: usize, layers: usize) -> ModelDims {
        ModelDims {
            vocab,
            embed,
            hidden,
            layers,
            critic: false,
        }
    }

    pub fn with_critic(mut self) -> ModelDims {
        self.critic = true;
        self
    }
}

/// One GRU layer (update/reset gates, candidate state; the reset gate is
/// applied to the previous hidden state before the candidate's recurrent
/// product).
#[derive(Debug, Clone, PartialEq)]
pub struct GruLayer {
    pub w_update: Array2<f64>,
    pub w_reset: Array2<f64>,
    pub w_cand: Array2<f64>,
    pub u_update: Array2<f64>,
    pub u_reset: Array2<f64>,
    pub u_cand: Array2<f64>,
    pub b_update: Array1<f64>,
    pub b_reset: Array1<f64>,
    pub b_cand: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticHead {
    pub w: Array1<f64>,
    pub b: Array1<f64>, // single element
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub dims: ModelDims,
    pub embedding: Array2<f64>, // [V, E]
    pub gru: Vec<GruLayer>,
    pub head_w: Array2<f64>, // [V, H]
    pub head_b: Array1<f64>, // [V]
    pub critic: Option<CriticHead>,
}

impl PolicyParams {
    /// Random initialization: uniform +-1/sqrt(fan_in) weights, zero biases,
    /// zero critic.
    pub fn init(dims: ModelDims, seed: u64) -> PolicyParams {
        let mut rng = seeding::rng_from(seed);
        let mut uniform = |rows: usize, cols: usize, scale: f64| {
            Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-scale..scale))
        };
        let embedding = uniform(dims.vocab, dims.embed, 0.1);
        let mut gru = Vec::with_capacity(dims.layers);
        for layer in 0..dims.layers {
            let input = if layer == 0 { dims.embed } else { dims.hidden };
            let ws = 1.0 / (input as f64).sqrt();
            let us = 1.0 / (dims.hidden as f64).sqrt();
            gru.push(GruLayer {
                w_update: uniform(dims.hidden, input, ws),
                w_reset: uniform(dims.hidden, input, ws),
                w_cand: uniform(dims.hidden, input, ws),
                u_update: uniform(dims.hidden, dims.hidden, us),
                u_reset: uniform(dims.hidden, dims.hidden, us),
                u_cand: uniform(dims.hidden, dims.hidden, us),
                b_update: Array1::zeros(dims.hidden),
                b_reset: Array1::zeros(dims.hidden),
                b_cand: Array1::zeros(dims.hidden),
            });
        }
        let hs = 1.0 / (dims.hidden as f64).sqrt();
        let head_w = uniform(dims.vocab, dims.hidden, hs);
        PolicyParams {
            dims,
            embedding,
            gru,
            head_w,
            head_b: Array1::zeros(dims.vocab),
            critic: dims.critic.then(|| CriticHead {
                w: Array1::zeros(dims.hidden),
                b: Array1::zeros(1),
            }),
        }
    }

    pub fn zeros(dims: ModelDims) -> PolicyParams {
        let mut gru = Vec::with_capacity(dims.layers);
        for layer in 0..dims.layers {
            let input = if layer == 0 { dims.embed } else { dims.hidden };
            gru.push(GruLayer {
                w_update: Array2::zeros((dims.hidden, input)),
                w_reset: Array2::zeros((dims.hidden, input)),
                w_cand: Array2::zeros((dims.hidden, input)),
                u_update: Array2::zeros((dims.hidden, dims.hidden)),
                u_reset: Array2::zeros((dims.hidden, dims.hidden)),
                u_cand: Array2::zeros((dims.hidden, dims.hidden)),
                b_update: Array1::zeros(dims.hidden),
                b_reset: Array1::zeros(dims.hidden),
                b_cand: Array1::zeros(dims.hidden),
            });
        }
        PolicyParams {
            dims,
            embedding: Array2::zeros((dims.vocab, dims.embed)),
            gru,
            head_w: Array2::zeros((dims.vocab, dims.hidden)),
            head_b: Array1::zeros(dims.vocab),
            critic: dims.critic.then(|| CriticHead {
                w: Array1::zeros(dims.hidden),
                b: Array1::zeros(1),
            }),
        }
    }

    /// Add a zero-initialized critic head (used when fine-tuning a prior
    /// with an advantage-based algorithm).
    pub fn with_critic(mut self) -> PolicyParams {
        if self.critic.is_none() {
            self.critic = Some(CriticHead {
                w: Array1::zeros(self.dims.hidden),
                b: Array1::zeros(1),
            });
            self.dims.critic = true;
        }
        self
    }

    /// Tensors in manifest order as (name, shape, data) triples.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out: Vec<(String, Vec<usize>, &[f64])> = Vec::new();
        out.push((
            "embedding".into(),
            self.embedding.shape().to_vec(),
            self.embedding.as_slice().expect("standard layout"),
        ));
        for (l, layer) in self.gru.iter().enumerate() {
            for (suffix, mat) in [
                ("w_update", &layer.w_update),
                ("w_reset", &layer.w_reset),
                ("w_cand", &layer.w_cand),
                ("u_update", &layer.u_update),
                ("u_reset", &layer.u_reset),
                ("u_cand", &layer.u_cand),
            ] {
                out.push((
                    format!("gru{l}.{suffix}"),
                    mat.shape().to_vec(),
                    mat.as_slice().expect("standard layout"),
                ));
            }
            for (suffix, vec) in [
                ("b_update", &layer.b_update),
                ("b_reset", &layer.b_reset),
                ("b_cand", &layer.b_cand),
            ] {
                out.push((
                    format!("gru{l}.{suffix}"),
                    vec.shape().to_vec(),
                    vec.as_slice().expect("standard layout"),
                ));
            }
        }
        out.push((
            "head.w".into(),
            self.head_w.shape().to_vec(),
            self.head_w.as_slice().expect("standard layout"),
        ));
        out.push((
            "head.b".into(),
            self.head_b.shape().to_vec(),
            self.head_b.as_slice().expect("standard layout"),
        ));
        if let Some(critic) = &self.critic {
            out.push((
                "critic.w".into(),
                critic.w.shape().to_vec(),
                critic.w.as_slice().expect("standard layout"),
            ));
            out.push((
                "critic.b".into(),
                critic.b.shape().to_vec(),
                critic.b.as_slice().expect("standard layout"),
            ));
        }
        out
    }

    /// Mutable view of every tensor, same order as [`Self::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out: Vec<(String, &mut [f64])> = Vec::new();
        out.push((
            "embedding".into(),
            self.embedding.as_slice_mut().expect("standard layout"),
        ));
        for (l, layer) in self.gru.iter_mut().enumerate() {
            out.push((
                format!("gru{l}.w_update"),
                layer.w_update.as_slice_mut().expect("standard layout"),
            ));
            out.push((
                format!("gru{l}.w_reset"),
                layer.w_reset.as_slice_mut().expect("standard layout"),
            ));
            out.push((
                format!("gru{l}.w_cand"),
                layer.w_cand.as_slice_mut().expect("standard layout"),
            ));
            out.push((
                format!("gru{l}.u_update"),
                layer.u_update.as_slice_mut().expect("standard layout"),
            ));
            out.push((
                format!("gru{l}.u_reset"),
                layer.u_reset.as_slice_mut().expect("standard layout"),
            ));
            out.push((
                format!("gru{l}.u_cand"),
                layer.u_cand.as_slice_mut().expect("standard layout"),
            ));
            out.push((
                format!("gru{l}.b_update"),
                layer.b_update.as_slice_mut().expect("standard layout"),
            ));
            out.push((
                format!("gru{l}.b_reset"),
                layer.b_reset.as_slice_mut().expect("standard layout"),
            ));
            out.push((
                format!("gru{l}.b_cand"),
                layer.b_cand.as_slice_mut().expect("standard layout"),
            ));
        }
        out.push((
            "head.w".into(),
            self.head_w.as_slice_mut().expect("standard layout"),
        ));
        out.push((
            "head.b".into(),
            self.head_b.as_slice_mut().expect("standard layout"),
        ));
        if let Some(critic) = &mut self.critic {
            out.push((
                "critic.w".into(),
                critic.w.as_slice_mut().expect("standard layout"),
            ));
            out.push((
                "critic.b".into(),
                critic.b.as_slice_mut().expect("standard layout"),
            ));
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, _, d)| d.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, _, d)| d.iter().all(|x| x.is_finite()))
    }
}

/// Shape-congruent gradient tensors.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub tensors: PolicyParams,
}

impl Gradients {
    pub fn zeros_like(params: &PolicyParams) -> Gradients {
        Gradients {
            tensors: PolicyParams::zeros(params.dims),
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors
            .tensors()
            .iter()
            .map(|(_, _, d)| d.iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    /// Scale down so the global norm does not exceed `max`; returns the
    /// pre-clip norm.
    pub fn clip_global_norm(&mut self, max: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max && norm > 0.0 {
            self.scale(max / norm);
        }
        norm
    }

    pub fn scale(&mut self, s: f64) {
        for (_, data) in self.tensors.tensors_mut() {
            for x in data {
                *x *= s;
            }
        }
    }

    pub fn add(&mut self, other: &Gradients) {
        let theirs = other.tensors.tensors();
        for ((_, data), (_, _, src)) in self.tensors.tensors_mut().into_iter().zip(theirs) {
            for (d, s) in data.iter_mut().zip(src) {
                *d += s;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.all_finite()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_order_is_stable_and_complete() {
        let dims = ModelDims::new(7, 4, 6, 2).with_critic();
        let p = PolicyParams::init(dims, 1);
        let names: Vec<String> = p.tensors().into_iter().map(|(n, _, _)| n).collect();
        assert_eq!(names[0], "embedding");
        assert_eq!(names[1], "gru0.w_update");
        assert_eq!(names.last().unwrap(), "critic.b");
        assert_eq!(names.len(), 1 + 2 * 9 + 2 + 2);
        assert_eq!(
            p.parameter_count(),
            7 * 4 + (6 * 4 + 6 * 4 + 6 * 4 + 3 * 36 + 3 * 6) + (6 * 6 * 3 + 3 * 36 + 3 * 6)
                + 7 * 6
                + 7
                + 6
                + 1
        );
    }

    #[test]
    fn init_is_seed_deterministic() {
        let dims = ModelDims::new(5, 3, 4, 1);
        assert_eq!(PolicyParams::init(dims, 9), PolicyParams::init(dims, 9));
        assert_ne!(PolicyParams::init(dims, 9), PolicyParams::init(dims, 10));
    }

    #[test]
    fn clip_reduces_norm() {
        let dims = ModelDims::new(4, 2, 3, 1);
        let mut g = Gradients::zeros_like(&PolicyParams::zeros(dims));
        g.tensors.head_b.fill(3.0);
        let norm = g.global_norm();
        assert!(norm > 1.0);
        g.clip_global_norm(1.0);
        assert!((g.global_norm() - 1.0).abs() < 1e-12);
    }
}
