//! Synthetic SMILES corpora for tests, benches, and demos.
//!
//! The generator mixes short heteroatom chains, substituted benzenes, and
//! small saturated rings; every emitted string parses. Output is a pure
//! function of the seed.

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::chem;
use crate::seeding;

/// Deterministic corpus of `n` valid molecules.
pub fn toy_corpus(n: usize, seed: u64) -> Vec<String> {
    let mut rng = seeding::rng_from(seeding::split(seed, "toy.corpus"));
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let candidate = sample_molecule(&mut rng);
        if chem::parse(&candidate).is_ok() {
            out.push(candidate);
        }
    }
    out
}

fn sample_molecule(rng: &mut ChaCha12Rng) -> String {
    match rng.gen_range(0..10u32) {
        0..=5 => chain(rng),
        6..=8 => aromatic(rng),
        _ => ring(rng),
    }
}

fn chain_atom(rng: &mut ChaCha12Rng) -> &'static str {
    match rng.gen_range(0..10u32) {
        0..=6 => "C",
        7..=8 => "O",
        _ => "N",
    }
}

fn chain(rng: &mut ChaCha12Rng) -> String {
    let len = rng.gen_range(2..=8);
    let mut s = String::new();
    for i in 0..len {
        let atom = chain_atom(rng);
        s.push_str(atom);
        if atom == "C" && i > 0 && i + 1 < len && rng.gen_bool(0.2) {
            s.push_str(if rng.gen_bool(0.5) { "(C)" } else { "(=O)" });
        }
    }
    s
}

fn substituent(rng: &mut ChaCha12Rng) -> &'static str {
    match rng.gen_range(0..6u32) {
        0 => "C",
        1 => "CC",
        2 => "O",
        3 => "N",
        4 => "CCO",
        _ => "C(C)C",
    }
}

fn aromatic(rng: &mut ChaCha12Rng) -> String {
    match rng.gen_range(0..4u32) {
        0 => "c1ccccc1".to_string(),
        1 => format!("c1ccccc1{}", substituent(rng)),
        2 => format!("{}c1ccccc1", substituent(rng)),
        _ => format!("c1ccc({})cc1", substituent(rng)),
    }
}

fn ring(rng: &mut ChaCha12Rng) -> String {
    let base = match rng.gen_range(0..3u32) {
        0 => "C1CCCC1",
        1 => "C1CCCCC1",
        _ => "C1CCOCC1",
    };
    if rng.gen_bool(0.5) {
        format!("{base}{}", substituent(rng))
    } else {
        base.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_is_valid_and_deterministic() {
        let a = toy_corpus(200, 42);
        assert_eq!(a.len(), 200);
        assert!(a.iter().all(|s| chem::parse(s).is_ok()));
        assert_eq!(a, toy_corpus(200, 42));
        assert_ne!(a, toy_corpus(200, 43));
    }

    #[test]
    fn corpus_has_some_variety() {
        let corpus = toy_corpus(300, 7);
        let mut unique = corpus.clone();
        unique.sort();
        unique.dedup();
        assert!(unique.len() > 50, "only {} unique molecules", unique.len());
        assert!(corpus.iter().any(|s| s.contains("c1")));
        assert!(corpus.iter().any(|s| !s.contains('1')));
    }
}
