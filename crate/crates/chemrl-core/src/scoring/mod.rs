//! Pluggable scoring: string -> score oracles, the diversity filter, and
//! chemistry filters.

mod diversity;
mod external;
mod filters;

pub use diversity::{DiversityFilterConfig, DiversityMemory};
pub use external::{ExternalSession, DEFAULT_TIMEOUT_SECS};
pub use filters::{
    chemistry_filter_basic, chemistry_filter_basic_with, chemistry_filter_target,
    BasicFilterLimits, FilterOutcome, ReferenceStats,
};

use std::time::Duration;

use thiserror::Error;

use crate::chem::{
    self, fingerprint, molecular_weight, parse, tanimoto, Fingerprint, MolGraph, DEFAULT_RADIUS,
    DEFAULT_WIDTH,
};
use crate::par;
use crate::vocab::tokenize;

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("external scorer timed out after {secs}s")]
    ExternalScorerTimeout { secs: u64 },
    #[error("external scorer protocol error: {0}")]
    ExternalScorerProtocol(String),
    #[error("scoring task configuration: {0}")]
    Config(String),
}

/// Built-in oracle kinds.
#[derive(Debug, Clone, PartialEq)]
pub enum Oracle {
    /// Fingerprint Tanimoto similarity to a target molecule.
    SimilarityToTarget { target: String },
    /// Gaussian kernel exp(-(MW - target)^2 / (2 width^2)).
    MolWeightTarget { target_da: f64, width_da: f64 },
    /// 1.0 for any parseable molecule.
    ValidityOnly,
    /// 1.0 when the SMILES contains the pattern as a token run.
    TokenPattern { pattern: String },
    /// Weighted arithmetic or geometric mean of sub-oracles.
    Composite {
        parts: Vec<(Oracle, f64)>,
        geometric: bool,
    },
    /// Child process speaking the line-delimited protocol.
    ExternalProcess {
        command: Vec<String>,
        timeout_secs: u64,
    },
}

/// A named scoring function with optional diversity filtering and a budget.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoringTask {
    pub name: String,
    pub oracle: Oracle,
    pub diversity: Option<DiversityFilterConfig>,
}

impl ScoringTask {
    pub fn new(name: &str, oracle: Oracle) -> ScoringTask {
        ScoringTask {
            name: name.to_string(),
            oracle,
            diversity: None,
        }
    }

    pub fn with_diversity(mut self, cfg: DiversityFilterConfig) -> ScoringTask {
        self.diversity = Some(cfg);
        self
    }
}

enum Prepared {
    Similarity { target: Fingerprint },
    MolWeight { target: f64, width: f64 },
    Validity,
    TokenPattern { tokens: Vec<String> },
    Composite { parts: Vec<(Prepared, f64)>, geometric: bool },
    External,
}

impl Prepared {
    fn build(oracle: &Oracle, top_level: bool) -> Result<Prepared, ScoringError> {
        Ok(match oracle {
            Oracle::SimilarityToTarget { target } => {
                let mol = parse(target).map_err(|e| {
                    ScoringError::Config(format!("similarity target `{target}`: {e}"))
                })?;
                Prepared::Similarity {
                    target: fingerprint(&mol, DEFAULT_RADIUS, DEFAULT_WIDTH),
                }
            }
            Oracle::MolWeightTarget {
                target_da,
                width_da,
            } => {
                if *width_da <= 0.0 {
                    return Err(ScoringError::Config("kernel width must be positive".into()));
                }
                Prepared::MolWeight {
                    target: *target_da,
                    width: *width_da,
                }
            }
            Oracle::ValidityOnly => Prepared::Validity,
            Oracle::TokenPattern { pattern } => Prepared::TokenPattern {
                tokens: tokenize(pattern).map_err(|e| {
                    ScoringError::Config(format!("token pattern `{pattern}`: {e}"))
                })?,
            },
            Oracle::Composite { parts, geometric } => {
                if parts.is_empty() {
                    return Err(ScoringError::Config("composite oracle is empty".into()));
                }
                let total: f64 = parts.iter().map(|(_, w)| w).sum();
                if total <= 0.0 || parts.iter().any(|(_, w)| *w < 0.0) {
                    return Err(ScoringError::Config(
                        "composite weights must be non-negative with positive sum".into(),
                    ));
                }
                Prepared::Composite {
                    parts: parts
                        .iter()
                        .map(|(o, w)| Prepared::build(o, false).map(|p| (p, *w)))
                        .collect::<Result<_, _>>()?,
                    geometric: *geometric,
                }
            }
            Oracle::ExternalProcess { .. } => {
                if !top_level {
                    return Err(ScoringError::Config(
                        "an external scorer cannot be nested in a composite".into(),
                    ));
                }
                Prepared::External
            }
        })
    }

    fn evaluate(&self, mol: &MolGraph, smiles: &str) -> f64 {
        match self {
            Prepared::Similarity { target } => {
                let fp = fingerprint(mol, DEFAULT_RADIUS, DEFAULT_WIDTH);
                tanimoto(&fp, target).expect("widths agree")
            }
            Prepared::MolWeight { target, width } => {
                let mw = molecular_weight(mol);
                (-((mw - target) * (mw - target)) / (2.0 * width * width)).exp()
            }
            Prepared::Validity => 1.0,
            Prepared::TokenPattern { tokens } => {
                let Ok(candidate) = tokenize(smiles) else {
                    return 0.0;
                };
                let hit = !tokens.is_empty()
                    && tokens.len() <= candidate.len()
                    && candidate.windows(tokens.len()).any(|w| w == tokens.as_slice());
                if hit {
                    1.0
                } else {
                    0.0
                }
            }
            Prepared::Composite { parts, geometric } => {
                let total: f64 = parts.iter().map(|(_, w)| w).sum();
                if *geometric {
                    let mut acc = 0.0;
                    for (p, w) in parts {
                        let s = p.evaluate(mol, smiles);
                        if s <= 0.0 {
                            return 0.0;
                        }
                        acc += w / total * s.ln();
                    }
                    acc.exp()
                } else {
                    parts
                        .iter()
                        .map(|(p, w)| w / total * p.evaluate(mol, smiles))
                        .sum()
                }
            }
            Prepared::External => unreachable!("external oracles score whole batches"),
        }
    }
}

/// Stateful scorer for one task: owns the diversity memory and any external
/// session. Scores are clamped to [0, 1]; unparseable strings score 0.
pub struct Scorer {
    pub task: ScoringTask,
    prepared: Prepared,
    memory: Option<DiversityMemory>,
    session: Option<ExternalSession>,
    next_id: u64,
}

impl Scorer {
    pub fn new(task: ScoringTask) -> Result<Scorer, ScoringError> {
        let prepared = Prepared::build(&task.oracle, true)?;
        let session = if let Oracle::ExternalProcess {
            command,
            timeout_secs,
        } = &task.oracle
        {
            Some(ExternalSession::spawn(
                command,
                Duration::from_secs(*timeout_secs),
            )?)
        } else {
            None
        };
        let memory = task.diversity.map(DiversityMemory::new);
        Ok(Scorer {
            task,
            prepared,
            memory,
            session,
            next_id: 0,
        })
    }

    /// Score a batch in submission order. Raw scores fan out in parallel
    /// for built-in oracles; the diversity filter is applied sequentially
    /// in oracle-call order.
    pub fn score_batch(&mut self, smiles: &[String]) -> Result<Vec<f64>, ScoringError> {
        let mols: Vec<Option<MolGraph>> = par::map(smiles, |s| parse(s).ok());
        let raw: Vec<f64> = if let Some(session) = &mut self.session {
            let mut items = Vec::new();
            for (i, mol) in mols.iter().enumerate() {
                if mol.is_some() {
                    items.push((self.next_id + i as u64, smiles[i].as_str()));
                }
            }
            let scored = session.score_batch(&items)?;
            self.next_id += smiles.len() as u64;
            let mut by_index = vec![0.0; smiles.len()];
            let mut cursor = 0;
            for (i, mol) in mols.iter().enumerate() {
                if mol.is_some() {
                    by_index[i] = scored[cursor];
                    cursor += 1;
                }
            }
            by_index
        } else {
            let prepared = &self.prepared;
            let pairs: Vec<(Option<&MolGraph>, &String)> =
                mols.iter().map(Option::as_ref).zip(smiles).collect();
            par::map(&pairs, |(mol, s)| match mol {
                Some(mol) => prepared.evaluate(mol, s).clamp(0.0, 1.0),
                None => 0.0,
            })
        };
        let mut out = Vec::with_capacity(raw.len());
        for (i, &score) in raw.iter().enumerate() {
            let filtered = match &mut self.memory {
                Some(memory) => {
                    let fp = mols[i]
                        .as_ref()
                        .map(|m| fingerprint(m, DEFAULT_RADIUS, DEFAULT_WIDTH));
                    memory.apply(fp.as_ref(), score)
                }
                None => score,
            };
            out.push(filtered);
        }
        Ok(out)
    }

    pub fn score(&mut self, smiles: &str) -> Result<f64, ScoringError> {
        Ok(self.score_batch(&[smiles.to_string()])?[0])
    }
}

/// Canonical key of a molecule with the raw string as fallback for
/// unparseable input; the deduplication key used across the crate.
pub fn dedup_key(smiles: &str) -> String {
    match parse(smiles) {
        Ok(mol) => chem::canonical_key(&mol),
        Err(_) => smiles.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn score_once(task: ScoringTask, smiles: &str) -> f64 {
        Scorer::new(task).unwrap().score(smiles).unwrap()
    }

    #[test]
    fn similarity_to_self_is_one() {
        let task = ScoringTask::new(
            "sim",
            Oracle::SimilarityToTarget {
                target: "c1ccccc1CCO".into(),
            },
        );
        assert_eq!(score_once(task, "c1ccccc1CCO"), 1.0);
    }

    #[test]
    fn unparseable_scores_zero() {
        let task = ScoringTask::new("v", Oracle::ValidityOnly);
        assert_eq!(score_once(task.clone(), "C1CC"), 0.0);
        assert_eq!(score_once(task, "CCO"), 1.0);
    }

    #[test]
    fn mol_weight_kernel_peaks_at_target() {
        let mw = molecular_weight(&parse("CCO").unwrap());
        let task = ScoringTask::new(
            "mw",
            Oracle::MolWeightTarget {
                target_da: mw,
                width_da: 50.0,
            },
        );
        assert_eq!(score_once(task, "CCO"), 1.0);
        let off = ScoringTask::new(
            "mw",
            Oracle::MolWeightTarget {
                target_da: mw + 50.0,
                width_da: 50.0,
            },
        );
        let s = score_once(off, "CCO");
        assert!((s - (-0.5f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn token_pattern_matches_token_runs() {
        let task = ScoringTask::new(
            "pat",
            Oracle::TokenPattern {
                pattern: "CCO".into(),
            },
        );
        assert_eq!(score_once(task.clone(), "CCCO"), 1.0);
        assert_eq!(score_once(task, "COC"), 0.0);
        // Cl is one token: the pattern "C" must not match inside it
        let cl = ScoringTask::new(
            "cl",
            Oracle::TokenPattern {
                pattern: "Cl".into(),
            },
        );
        assert_eq!(score_once(cl.clone(), "CCl"), 1.0);
        assert_eq!(score_once(cl, "CC"), 0.0);
    }

    #[test]
    fn composite_means() {
        let parts = vec![
            (Oracle::ValidityOnly, 1.0),
            (
                Oracle::TokenPattern {
                    pattern: "N".into(),
                },
                1.0,
            ),
        ];
        let arith = ScoringTask::new(
            "c",
            Oracle::Composite {
                parts: parts.clone(),
                geometric: false,
            },
        );
        assert_eq!(score_once(arith, "CCO"), 0.5);
        let geo = ScoringTask::new(
            "g",
            Oracle::Composite {
                parts,
                geometric: true,
            },
        );
        assert_eq!(score_once(geo, "CCO"), 0.0);
    }

    #[test]
    fn deterministic_scores() {
        let task = ScoringTask::new(
            "sim",
            Oracle::SimilarityToTarget {
                target: "CCO".into(),
            },
        );
        let a = score_once(task.clone(), "CCN");
        let b = score_once(task, "CCN");
        assert_eq!(a, b);
    }

    #[test]
    fn diversity_filter_composes_with_oracles() {
        let task = ScoringTask::new("v", Oracle::ValidityOnly).with_diversity(
            DiversityFilterConfig {
                bucket_limit: 2,
                ..DiversityFilterConfig::default()
            },
        );
        let mut scorer = Scorer::new(task).unwrap();
        let batch: Vec<String> = (0..4).map(|_| "c1ccccc1CCO".to_string()).collect();
        let scores = scorer.score_batch(&batch).unwrap();
        assert_eq!(scores, vec![1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn bad_configs_are_rejected() {
        assert!(Scorer::new(ScoringTask::new(
            "bad",
            Oracle::SimilarityToTarget {
                target: "C1CC".into()
            }
        ))
        .is_err());
        assert!(Scorer::new(ScoringTask::new(
            "bad",
            Oracle::Composite {
                parts: vec![],
                geometric: false
            }
        ))
        .is_err());
        assert!(Scorer::new(ScoringTask::new(
            "bad",
            Oracle::Composite {
                parts: vec![(
                    Oracle::ExternalProcess {
                        command: vec!["x".into()],
                        timeout_secs: 1
                    },
                    1.0
                )],
                geometric: false
            }
        ))
        .is_err());
    }

    #[test]
    fn dedup_key_canonicalizes_with_raw_fallback() {
        assert_eq!(dedup_key("OCC"), dedup_key("CCO"));
        assert_eq!(dedup_key("C1CC"), "C1CC");
    }
}
