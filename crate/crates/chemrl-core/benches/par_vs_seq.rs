//! Parallel vs sequential dispatch on the data-parallel inner loops:
//! per-sequence forward+backward, batch scoring, and fingerprinting.
//!
//! Run with `cargo bench --bench par_vs_seq` (requires the default
//! `parallel` feature; `par::map` then uses rayon while `par::seq_map` is
//! the single-threaded fallback the non-parallel build compiles to).

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use chemrl_core::chem::{self, DEFAULT_RADIUS, DEFAULT_WIDTH};
use chemrl_core::par;
use chemrl_core::policy::{
    backward_seq, forward_seq, inputs_for, Gradients, ModelDims, PolicyParams,
};
use chemrl_core::pretrain::load_corpus_lines;
use chemrl_core::toy::toy_corpus;

fn nll_worker(params: &PolicyParams, seq: &[u32]) -> Gradients {
    let mut with_eos = seq.to_vec();
    with_eos.push(chemrl_core::policy::EOS_ID);
    let fwd = forward_seq(params, &inputs_for(&with_eos));
    let v = params.dims.vocab;
    let mut dlogits = ndarray::Array2::zeros((fwd.len(), v));
    for (t, &target) in with_eos.iter().enumerate() {
        for a in 0..v {
            let lp = fwd.log_probs[(t, a)];
            if lp != f64::NEG_INFINITY {
                dlogits[(t, a)] = lp.exp();
            }
        }
        dlogits[(t, target as usize)] -= 1.0;
    }
    let mut grads = Gradients::zeros_like(params);
    backward_seq(params, &fwd, &dlogits, None, &mut grads);
    grads
}

fn bench_forward_backward(c: &mut Criterion) {
    let corpus = load_corpus_lines(toy_corpus(256, 1), None, 100, 0.0, 1).unwrap();
    let params = PolicyParams::init(ModelDims::new(corpus.vocab.len(), 64, 128, 1), 7);
    let batch: Vec<Vec<u32>> = corpus.sequences.iter().take(64).cloned().collect();
    let mut group = c.benchmark_group("forward_backward_batch64");
    group.sample_size(10);
    group.bench_with_input(BenchmarkId::new("par", 64), &batch, |b, batch| {
        b.iter(|| par::map(batch, |seq| nll_worker(&params, seq)))
    });
    group.bench_with_input(BenchmarkId::new("seq", 64), &batch, |b, batch| {
        b.iter(|| par::seq_map(batch, |seq| nll_worker(&params, seq)))
    });
    group.finish();
}

fn bench_fingerprints(c: &mut Criterion) {
    let molecules = toy_corpus(512, 3);
    let mut group = c.benchmark_group("fingerprint_batch512");
    group.sample_size(20);
    let work = |smiles: &String| {
        let mol = chem::parse(smiles).unwrap();
        chem::fingerprint(&mol, DEFAULT_RADIUS, DEFAULT_WIDTH)
    };
    group.bench_function("par", |b| b.iter(|| par::map(&molecules, work)));
    group.bench_function("seq", |b| b.iter(|| par::seq_map(&molecules, work)));
    group.finish();
}

fn bench_scoring(c: &mut Criterion) {
    let molecules = toy_corpus(256, 5);
    let target = chem::fingerprint(
        &chem::parse("c1ccc(CCO)cc1").unwrap(),
        DEFAULT_RADIUS,
        DEFAULT_WIDTH,
    );
    let mut group = c.benchmark_group("similarity_batch256");
    group.sample_size(20);
    let work = |smiles: &String| match chem::parse(smiles) {
        Ok(mol) => {
            let fp = chem::fingerprint(&mol, DEFAULT_RADIUS, DEFAULT_WIDTH);
            chem::tanimoto(&fp, &target).unwrap()
        }
        Err(_) => 0.0,
    };
    group.bench_function("par", |b| b.iter(|| par::map(&molecules, work)));
    group.bench_function("seq", |b| b.iter(|| par::seq_map(&molecules, work)));
    group.finish();
}

criterion_group!(
    benches,
    bench_forward_backward,
    bench_fingerprints,
    bench_scoring
);
criterion_main!(benches);
