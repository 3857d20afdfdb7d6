//! Scoring-time diversity filter: a bucket memory that zeroes rewards for
//! over-visited chemotypes.

use crate::chem::{tanimoto, Fingerprint};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiversityFilterConfig {
    /// Similarity above this joins an existing bucket.
    pub similarity_threshold: f64,
    /// Bucket occupancy before scores are zeroed.
    pub bucket_limit: usize,
    /// Only candidates scoring above this occupy memory.
    pub min_score: f64,
}

impl Default for DiversityFilterConfig {
    fn default() -> DiversityFilterConfig {
        DiversityFilterConfig {
            similarity_threshold: 0.35,
            bucket_limit: 25,
            min_score: 0.5,
        }
    }
}

/// Buckets of (representative fingerprint, hit count), matched in insertion
/// order. Must be applied in oracle-call order.
#[derive(Debug, Clone)]
pub struct DiversityMemory {
    cfg: DiversityFilterConfig,
    buckets: Vec<(Fingerprint, usize)>,
}

impl DiversityMemory {
    pub fn new(cfg: DiversityFilterConfig) -> DiversityMemory {
        DiversityMemory {
            cfg,
            buckets: Vec::new(),
        }
    }

    pub fn bucket_count(&self) -> usize {
        self.buckets.len()
    }

    /// Filter one raw score. Unparseable candidates (no fingerprint) pass
    /// through untouched.
    pub fn apply(&mut self, fp: Option<&Fingerprint>, raw: f64) -> f64 {
        let Some(fp) = fp else { return raw };
        let hit = self.buckets.iter_mut().find(|(rep, _)| {
            tanimoto(rep, fp).is_ok_and(|s| s > self.cfg.similarity_threshold)
        });
        match hit {
            Some((_, count)) => {
                if *count >= self.cfg.bucket_limit {
                    return 0.0;
                }
                if raw > self.cfg.min_score {
                    *count += 1;
                }
                raw
            }
            None => {
                if raw > self.cfg.min_score {
                    self.buckets.push((fp.clone(), 1));
                }
                raw
            }
        }
    }
}
