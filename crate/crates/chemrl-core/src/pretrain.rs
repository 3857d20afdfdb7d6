//! Teacher-forced maximum-likelihood pretraining of the prior policy.

use std::path::Path;

use rand::seq::SliceRandom;

use thiserror::Error;

use crate::env::{rollout, validity_fraction, PromptSpec};
use crate::policy::{
    adam_step, backward_seq, forward_seq, AdamConfig, Gradients, ModelDims, OptimizerState,
    PolicyParams, EOS_ID, GO_ID,
};
use crate::vocab::{tokenize, Vocabulary};
use crate::{par, seeding};

#[derive(Debug, Error)]
pub enum PretrainError {
    #[error("no usable lines remain after filtering ({skipped} skipped)")]
    EmptyAfterFiltering { skipped: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Vocab(#[from] crate::vocab::VocabError),
}

/// Tokenized, encoded corpus with a train/validation split.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub sequences: Vec<Vec<u32>>,
    pub vocab: Vocabulary,
    pub skipped: usize,
    pub train_idx: Vec<usize>,
    pub valid_idx: Vec<usize>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }
}

/// Load one SMILES per line; `#` comment lines, untokenizable lines, lines
/// longer than `max_len` tokens, and (under a supplied vocabulary) lines
/// with out-of-vocabulary tokens are skipped and counted.
pub fn load_corpus_lines<S: AsRef<str>>(
    lines: impl IntoIterator<Item = S>,
    vocab: Option<Vocabulary>,
    max_len: usize,
    valid_fraction: f64,
    seed: u64,
) -> Result<Corpus, PretrainError> {
    let mut kept_tokens: Vec<Vec<String>> = Vec::new();
    let mut skipped = 0usize;
    for line in lines {
        let line = line.as_ref().trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match tokenize(line) {
            Ok(tokens) if tokens.len() <= max_len => kept_tokens.push(tokens),
            _ => skipped += 1,
        }
    }
    let vocab = match vocab {
        Some(v) => v,
        None => {
            if kept_tokens.is_empty() {
                return Err(PretrainError::EmptyAfterFiltering { skipped });
            }
            Vocabulary::from_token_set(kept_tokens.iter().flatten().cloned())
        }
    };
    let mut sequences = Vec::with_capacity(kept_tokens.len());
    for tokens in kept_tokens {
        match vocab.encode(&tokens) {
            Ok(ids) => sequences.push(ids),
            Err(_) => skipped += 1,
        }
    }
    if sequences.is_empty() {
        return Err(PretrainError::EmptyAfterFiltering { skipped });
    }
    let mut order: Vec<usize> = (0..sequences.len()).collect();
    order.shuffle(&mut seeding::rng_from(seeding::split(seed, "corpus.split")));
    let valid_len = ((sequences.len() as f64) * valid_fraction).round() as usize;
    let valid_len = valid_len.min(sequences.len().saturating_sub(1));
    let valid_idx: Vec<usize> = order[..valid_len].to_vec();
    let train_idx: Vec<usize> = order[valid_len..].to_vec();
    Ok(Corpus {
        sequences,
        vocab,
        skipped,
        train_idx,
        valid_idx,
    })
}

pub fn load_corpus(
    path: &Path,
    vocab: Option<Vocabulary>,
    max_len: usize,
    valid_fraction: f64,
    seed: u64,
) -> Result<Corpus, PretrainError> {
    let text = std::fs::read_to_string(path)?;
    load_corpus_lines(text.lines(), vocab, max_len, valid_fraction, seed)
}

/// Inputs are GO plus the sequence; targets are the sequence plus EOS.
fn targets_of(seq: &[u32]) -> (Vec<u32>, Vec<u32>) {
    let mut inputs = Vec::with_capacity(seq.len() + 1);
    inputs.push(GO_ID);
    inputs.extend_from_slice(seq);
    let mut targets = Vec::with_capacity(seq.len() + 1);
    targets.extend_from_slice(seq);
    targets.push(EOS_ID);
    (inputs, targets)
}

/// Mean negative log-likelihood per target token over a batch.
pub fn teacher_forced_loss(params: &PolicyParams, batch: &[Vec<u32>]) -> f64 {
    let total_tokens: usize = batch.iter().map(|s| s.len() + 1).sum();
    if total_tokens == 0 {
        return 0.0;
    }
    let sums = par::map(batch, |seq| {
        let (inputs, targets) = targets_of(seq);
        let fwd = forward_seq(params, &inputs);
        targets
            .iter()
            .enumerate()
            .map(|(t, &target)| -fwd.log_probs[(t, target as usize)])
            .sum::<f64>()
    });
    sums.iter().sum::<f64>() / total_tokens as f64
}

/// Loss plus gradients for one minibatch.
pub fn teacher_forced_loss_grads(params: &PolicyParams, batch: &[Vec<u32>]) -> (f64, Gradients) {
    let total_tokens: usize = batch.iter().map(|s| s.len() + 1).sum();
    let scale = 1.0 / total_tokens.max(1) as f64;
    let per_seq: Vec<(f64, Gradients)> = par::map(batch, |seq| {
        let (inputs, targets) = targets_of(seq);
        let fwd = forward_seq(params, &inputs);
        let v = params.dims.vocab;
        let mut dlogits = ndarray::Array2::zeros((inputs.len(), v));
        let mut nll = 0.0;
        for (t, &target) in targets.iter().enumerate() {
            nll -= fwd.log_probs[(t, target as usize)];
            for a in 0..v {
                let lp = fwd.log_probs[(t, a)];
                if lp != f64::NEG_INFINITY {
                    dlogits[(t, a)] = lp.exp() * scale;
                }
            }
            dlogits[(t, target as usize)] -= scale;
        }
        let mut grads = Gradients::zeros_like(params);
        backward_seq(params, &fwd, &dlogits, None, &mut grads);
        (nll, grads)
    });
    let mut total = Gradients::zeros_like(params);
    let mut loss = 0.0;
    for (nll, g) in &per_seq {
        loss += nll;
        total.add(g);
    }
    (loss * scale, total)
}

#[derive(Debug, Clone)]
pub struct PretrainConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub layers: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_len: usize,
    pub valid_fraction: f64,
    pub grad_clip: Option<f64>,
    /// Samples drawn per epoch to estimate validity; 0 disables.
    pub validity_samples: usize,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> PretrainConfig {
        PretrainConfig {
            embed_dim: 64,
            hidden_dim: 128,
            layers: 1,
            epochs: 10,
            batch_size: 64,
            learning_rate: 1e-3,
            max_len: 100,
            valid_fraction: 0.1,
            grad_clip: Some(5.0),
            validity_samples: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Absent on the pre-training row (epoch 0).
    pub train_nll: Option<f64>,
    pub valid_nll: f64,
    pub sampled_validity: Option<f64>,
}

/// CSV with columns epoch, train_nll, valid_nll, sampled_validity; absent
/// values are empty fields.
pub fn training_log_csv(log: &[EpochLog]) -> String {
    let mut out = String::from("epoch,train_nll,valid_nll,sampled_validity\n");
    for row in log {
        let train = row.train_nll.map(|v| v.to_string()).unwrap_or_default();
        let sampled = row
            .sampled_validity
            .map(|v| v.to_string())
            .unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.epoch, train, row.valid_nll, sampled
        ));
    }
    out
}

#[derive(Debug, Clone)]
pub struct PretrainOutput {
    /// Parameters of the best-validation epoch.
    pub params: PolicyParams,
    pub vocab: Vocabulary,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
}

/// Shuffled-minibatch Adam over the teacher-forced loss; retains the
/// checkpoint of the epoch with the lowest validation NLL.
pub fn pretrain_run(corpus: &Corpus, cfg: &PretrainConfig) -> PretrainOutput {
    let dims = ModelDims::new(corpus.vocab.len(), cfg.embed_dim, cfg.hidden_dim, cfg.layers);
    let mut params = PolicyParams::init(dims, seeding::split(cfg.seed, "pretrain.init"));
    let mut optimizer = OptimizerState::new(
        &params,
        AdamConfig {
            lr: cfg.learning_rate,
            ..AdamConfig::default()
        },
    );

    let valid_set: Vec<Vec<u32>> = corpus
        .valid_idx
        .iter()
        .map(|&i| corpus.sequences[i].clone())
        .collect();
    let eval_valid = |params: &PolicyParams| -> f64 {
        if valid_set.is_empty() {
            f64::NAN
        } else {
            teacher_forced_loss(params, &valid_set)
        }
    };
    let sample_validity = |params: &PolicyParams, epoch: usize| -> Option<f64> {
        if cfg.validity_samples == 0 {
            return None;
        }
        let seed = seeding::split_index(seeding::split(cfg.seed, "pretrain.sample"), epoch as u64);
        let trajs = rollout(
            params,
            None,
            &corpus.vocab,
            cfg.validity_samples,
            cfg.max_len,
            seed,
            &PromptSpec::DeNovo,
        )
        .expect("de-novo rollout cannot fail");
        Some(validity_fraction(&trajs))
    };

    let mut log = Vec::with_capacity(cfg.epochs + 1);
    log.push(EpochLog {
        epoch: 0,
        train_nll: None,
        valid_nll: eval_valid(&params),
        sampled_validity: sample_validity(&params, 0),
    });

    let mut best = params.clone();
    let mut best_epoch = 0usize;
    let mut best_valid = log[0].valid_nll;
    let shuffle_seed = seeding::split(cfg.seed, "pretrain.shuffle");

    for epoch in 1..=cfg.epochs {
        let mut order = corpus.train_idx.clone();
        order.shuffle(&mut seeding::rng_from(seeding::split_index(
            shuffle_seed,
            epoch as u64,
        )));
        let mut epoch_nll_sum = 0.0;
        let mut epoch_tokens = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<Vec<u32>> = chunk.iter().map(|&i| corpus.sequences[i].clone()).collect();
            let tokens: usize = batch.iter().map(|s| s.len() + 1).sum();
            let (loss, mut grads) = teacher_forced_loss_grads(&params, &batch);
            if let Some(max) = cfg.grad_clip {
                grads.clip_global_norm(max);
            }
            adam_step(&mut params, &grads, &mut optimizer);
            epoch_nll_sum += loss * tokens as f64;
            epoch_tokens += tokens;
        }
        let valid_nll = eval_valid(&params);
        log.push(EpochLog {
            epoch,
            train_nll: Some(epoch_nll_sum / epoch_tokens.max(1) as f64),
            valid_nll,
            sampled_validity: sample_validity(&params, epoch),
        });
        let improved = valid_nll.is_nan() || valid_nll < best_valid;
        if improved {
            best = params.clone();
            best_epoch = epoch;
            best_valid = valid_nll;
        }
    }

    PretrainOutput {
        params: best,
        vocab: corpus.vocab.clone(),
        log,
        best_epoch,
    }
}
