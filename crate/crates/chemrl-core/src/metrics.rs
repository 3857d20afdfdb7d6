//! Run-level evaluation: validity, uniqueness, top-k metrics, chemistry-
//! filtered variants, and sphere-exclusion diversity.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use serde::Serialize;

use thiserror::Error;

use crate::chem::{
    chem_parse_fingerprint, tanimoto, Fingerprint, DEFAULT_RADIUS, DEFAULT_WIDTH,
};
use crate::history::RunHistory;
use crate::scoring::{chemistry_filter_basic, chemistry_filter_target, ReferenceStats};
use crate::seeding;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("history is empty")]
    EmptyHistory,
    #[error("no valid molecules")]
    NoValidMolecules,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricConfig {
    pub k: usize,
    pub report_every: u64,
    /// Pairwise similarity bound for the diverse top-k.
    pub diversity_threshold: f64,
    /// Leader radius for sphere-exclusion diversity.
    pub sediv_threshold: f64,
    pub sediv_sample: usize,
}

impl Default for MetricConfig {
    fn default() -> MetricConfig {
        MetricConfig {
            k: 10,
            report_every: 100,
            diversity_threshold: 0.35,
            sediv_threshold: 0.65,
            sediv_sample: 1000,
        }
    }
}

/// Mean of the `k` best rewards over distinct keys (best reward per key);
/// mean over all keys when fewer than `k` exist.
pub fn topk_average(history: &RunHistory, k: usize) -> Result<f64, MetricsError> {
    assert!(k >= 1, "k must be at least 1");
    if history.is_empty() {
        return Err(MetricsError::EmptyHistory);
    }
    let mut best: HashMap<&str, f64> = HashMap::new();
    for r in &history.records {
        let entry = best.entry(r.key.as_str()).or_insert(r.reward);
        if r.reward > *entry {
            *entry = r.reward;
        }
    }
    let mut values: Vec<f64> = best.into_values().collect();
    values.sort_unstable_by(|a, b| b.partial_cmp(a).expect("rewards are finite"));
    Ok(mean_of_top(&values, k))
}

/// Sum the k best (already descending) values, dividing by the count used.
fn mean_of_top(desc: &[f64], k: usize) -> f64 {
    let take = k.min(desc.len());
    let sum: f64 = desc[..take].iter().sum();
    sum / take as f64
}

/// Area under the running top-k average, evaluated every `report_every`
/// oracle calls and at N, rectangular integration normalized by N.
pub fn topk_auc(history: &RunHistory, k: usize, report_every: u64) -> Result<f64, MetricsError> {
    assert!(report_every >= 1, "report_every must be at least 1");
    if history.is_empty() {
        return Err(MetricsError::EmptyHistory);
    }
    let n = history.len() as u64;
    let mut best: HashMap<&str, f64> = HashMap::new();
    // multiset of current best-per-key rewards, keyed by IEEE bits
    // (order-preserving for non-negative values)
    let mut multiset: BTreeMap<u64, usize> = BTreeMap::new();
    let mut auc = 0.0;
    let mut prev_checkpoint = 0u64;
    for r in &history.records {
        match best.get_mut(r.key.as_str()) {
            None => {
                best.insert(r.key.as_str(), r.reward);
                *multiset.entry(r.reward.to_bits()).or_insert(0) += 1;
            }
            Some(current) => {
                if r.reward > *current {
                    let old = current.to_bits();
                    match multiset.get_mut(&old) {
                        Some(c) if *c > 1 => *c -= 1,
                        _ => {
                            multiset.remove(&old);
                        }
                    }
                    *current = r.reward;
                    *multiset.entry(r.reward.to_bits()).or_insert(0) += 1;
                }
            }
        }
        let call = r.oracle_call;
        if call % report_every == 0 || call == n {
            let value = topk_from_multiset(&multiset, k);
            auc += value * (call - prev_checkpoint) as f64;
            prev_checkpoint = call;
        }
    }
    Ok(auc / n as f64)
}

fn topk_from_multiset(multiset: &BTreeMap<u64, usize>, k: usize) -> f64 {
    let mut sum = 0.0;
    let mut taken = 0usize;
    'outer: for (&bits, &count) in multiset.iter().rev() {
        let value = f64::from_bits(bits);
        for _ in 0..count {
            sum += value;
            taken += 1;
            if taken == k {
                break 'outer;
            }
        }
    }
    if taken == 0 {
        0.0
    } else {
        sum / taken as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiverseSelection {
    pub smiles: String,
    pub reward: f64,
    pub key: String,
}

/// Greedy scan in descending reward order (ties broken by earliest oracle
/// call); a molecule joins iff its similarity to every accepted one is
/// below the threshold. Unparseable molecules cannot join.
pub fn diverse_topk(history: &RunHistory, k: usize, threshold: f64) -> Vec<DiverseSelection> {
    struct Candidate<'a> {
        key: &'a str,
        smiles: &'a str,
        reward: f64,
        first_at_best: u64,
    }
    let mut best: HashMap<&str, Candidate> = HashMap::new();
    for r in &history.records {
        if !r.valid {
            continue;
        }
        match best.get_mut(r.key.as_str()) {
            None => {
                best.insert(
                    r.key.as_str(),
                    Candidate {
                        key: &r.key,
                        smiles: &r.smiles,
                        reward: r.reward,
                        first_at_best: r.oracle_call,
                    },
                );
            }
            Some(c) => {
                if r.reward > c.reward {
                    c.reward = r.reward;
                    c.smiles = &r.smiles;
                    c.first_at_best = r.oracle_call;
                }
            }
        }
    }
    let mut candidates: Vec<Candidate> = best.into_values().collect();
    candidates.sort_unstable_by(|a, b| {
        b.reward
            .partial_cmp(&a.reward)
            .expect("rewards are finite")
            .then(a.first_at_best.cmp(&b.first_at_best))
    });
    let mut accepted: Vec<(DiverseSelection, Fingerprint)> = Vec::new();
    for c in candidates {
        if accepted.len() == k {
            break;
        }
        let Some(fp) = chem_parse_fingerprint(c.smiles, DEFAULT_RADIUS, DEFAULT_WIDTH) else {
            continue;
        };
        let diverse = accepted
            .iter()
            .all(|(_, afp)| tanimoto(afp, &fp).expect("widths agree") < threshold);
        if diverse {
            accepted.push((
                DiverseSelection {
                    smiles: c.smiles.to_string(),
                    reward: c.reward,
                    key: c.key.to_string(),
                },
                fp,
            ));
        }
    }
    accepted.into_iter().map(|(sel, _)| sel).collect()
}

/// Shuffle-sample up to `sample_size` fingerprints without replacement,
/// then greedy leader selection: a molecule joins iff its similarity to
/// every leader is below the threshold. Returns |leaders| / |sample|.
pub fn sphere_exclusion_diversity(
    fingerprints: &[Fingerprint],
    sample_size: usize,
    threshold: f64,
    seed: u64,
) -> Result<f64, MetricsError> {
    if fingerprints.is_empty() {
        return Err(MetricsError::NoValidMolecules);
    }
    let mut order: Vec<usize> = (0..fingerprints.len()).collect();
    order.shuffle(&mut seeding::rng_from(seed));
    order.truncate(sample_size.max(1));
    let mut leaders: Vec<&Fingerprint> = Vec::new();
    for &i in &order {
        let fp = &fingerprints[i];
        if leaders
            .iter()
            .all(|l| tanimoto(l, fp).expect("widths agree") < threshold)
        {
            leaders.push(fp);
        }
    }
    Ok(leaders.len() as f64 / order.len() as f64)
}

/// Metrics over the subset passing the chemistry filters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilteredMetrics {
    pub pass_fraction: f64,
    pub diverse_topk_avg: Option<f64>,
    pub diverse_topk_auc: Option<f64>,
    pub sediv: Option<f64>,
}

/// Restrict the history to molecules passing B-CF (and T-CF when reference
/// stats are supplied), then recompute the diverse metrics on the subset.
/// The AUC keeps the original oracle-call axis; empty prefixes contribute 0.
pub fn filtered_metrics(
    history: &RunHistory,
    stats: Option<&ReferenceStats>,
    cfg: &MetricConfig,
) -> Result<FilteredMetrics, MetricsError> {
    if history.is_empty() {
        return Err(MetricsError::EmptyHistory);
    }
    let passing: Vec<bool> = crate::par::map(&history.records, |r| {
        let Ok(mol) = crate::chem::parse(&r.smiles) else {
            return false;
        };
        if !chemistry_filter_basic(&mol).pass {
            return false;
        }
        match stats {
            Some(stats) => chemistry_filter_target(&mol, stats).pass,
            None => true,
        }
    });
    let n = history.len() as u64;
    let pass_count = passing.iter().filter(|&&p| p).count();
    let pass_fraction = pass_count as f64 / n as f64;
    if pass_count == 0 {
        return Ok(FilteredMetrics {
            pass_fraction,
            diverse_topk_avg: None,
            diverse_topk_auc: None,
            sediv: None,
        });
    }
    // subset re-assembled as its own history for selection machinery
    let mut subset = RunHistory::new(&history.algorithm, history.seed);
    for (r, &pass) in history.records.iter().zip(&passing) {
        if pass {
            subset.push(&r.smiles, r.reward);
        }
    }
    let selection = diverse_topk(&subset, cfg.k, cfg.diversity_threshold);
    let diverse_topk_avg = (!selection.is_empty())
        .then(|| selection.iter().map(|s| s.reward).sum::<f64>() / selection.len() as f64);

    // diverse top-k AUC along the original oracle-call axis
    let mut auc = 0.0;
    let mut prev = 0u64;
    let mut prefix = RunHistory::new(&history.algorithm, history.seed);
    for (r, &pass) in history.records.iter().zip(&passing) {
        if pass {
            prefix.push(&r.smiles, r.reward);
        }
        let call = r.oracle_call;
        if call % cfg.report_every == 0 || call == n {
            let sel = diverse_topk(&prefix, cfg.k, cfg.diversity_threshold);
            let value = if sel.is_empty() {
                0.0
            } else {
                sel.iter().map(|s| s.reward).sum::<f64>() / sel.len() as f64
            };
            auc += value * (call - prev) as f64;
            prev = call;
        }
    }
    let diverse_topk_auc = Some(auc / n as f64);

    let fps: Vec<Fingerprint> = subset
        .records
        .iter()
        .filter_map(|r| chem_parse_fingerprint(&r.smiles, DEFAULT_RADIUS, DEFAULT_WIDTH))
        .collect();
    let sediv = sphere_exclusion_diversity(
        &fps,
        cfg.sediv_sample,
        cfg.sediv_threshold,
        seeding::split(history.seed, "metrics.sediv"),
    )
    .ok();
    Ok(FilteredMetrics {
        pass_fraction,
        diverse_topk_avg,
        diverse_topk_auc,
        sediv,
    })
}

/// Per-run metric bundle; absent metrics stay `None` (null in JSON, empty
/// in CSV), never silently zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricBundle {
    pub oracle_calls: u64,
    pub valid: f64,
    pub unique: f64,
    pub topk_avg: Option<f64>,
    pub topk_auc: Option<f64>,
    pub diverse_topk_avg: Option<f64>,
    pub sediv: Option<f64>,
    pub bt_cf: Option<f64>,
    pub bt_cf_diverse_topk_avg: Option<f64>,
    pub bt_cf_diverse_topk_auc: Option<f64>,
    pub bt_cf_sediv: Option<f64>,
}

pub const METRIC_NAMES: [&str; 10] = [
    "valid",
    "unique",
    "topk_avg",
    "topk_auc",
    "diverse_topk_avg",
    "sediv",
    "bt_cf",
    "bt_cf_diverse_topk_avg",
    "bt_cf_diverse_topk_auc",
    "bt_cf_sediv",
];

impl MetricBundle {
    pub fn fields(&self) -> Vec<(&'static str, Option<f64>)> {
        vec![
            ("valid", Some(self.valid)),
            ("unique", Some(self.unique)),
            ("topk_avg", self.topk_avg),
            ("topk_auc", self.topk_auc),
            ("diverse_topk_avg", self.diverse_topk_avg),
            ("sediv", self.sediv),
            ("bt_cf", self.bt_cf),
            ("bt_cf_diverse_topk_avg", self.bt_cf_diverse_topk_avg),
            ("bt_cf_diverse_topk_auc", self.bt_cf_diverse_topk_auc),
            ("bt_cf_sediv", self.bt_cf_sediv),
        ]
    }
}

/// All metrics for one run history.
pub fn compute_bundle(
    history: &RunHistory,
    cfg: &MetricConfig,
    stats: Option<&ReferenceStats>,
) -> Result<MetricBundle, MetricsError> {
    if history.is_empty() {
        return Err(MetricsError::EmptyHistory);
    }
    let topk_avg = topk_average(history, cfg.k).ok();
    let auc = topk_auc(history, cfg.k, cfg.report_every).ok();
    let selection = diverse_topk(history, cfg.k, cfg.diversity_threshold);
    let diverse_topk_avg = (!selection.is_empty())
        .then(|| selection.iter().map(|s| s.reward).sum::<f64>() / selection.len() as f64);
    let fps: Vec<Fingerprint> = history
        .records
        .iter()
        .filter(|r| r.valid)
        .filter_map(|r| chem_parse_fingerprint(&r.smiles, DEFAULT_RADIUS, DEFAULT_WIDTH))
        .collect();
    let sediv = sphere_exclusion_diversity(
        &fps,
        cfg.sediv_sample,
        cfg.sediv_threshold,
        seeding::split(history.seed, "metrics.sediv"),
    )
    .ok();
    let filtered = filtered_metrics(history, stats, cfg)?;
    Ok(MetricBundle {
        oracle_calls: history.len() as u64,
        valid: history.valid_fraction(),
        unique: history.unique_fraction(),
        topk_avg,
        topk_auc: auc,
        diverse_topk_avg,
        sediv,
        bt_cf: Some(filtered.pass_fraction),
        bt_cf_diverse_topk_avg: filtered.diverse_topk_avg,
        bt_cf_diverse_topk_auc: filtered.diverse_topk_auc,
        bt_cf_sediv: filtered.sediv,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
    pub seeds: usize,
}

/// Mean and sample standard deviation (0 for a single seed).
pub fn aggregate(values: &[f64]) -> Option<Aggregate> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Some(Aggregate {
        mean,
        std,
        seeds: values.len(),
    })
}

/// Per-task-per-seed aggregation plus the suite-level sum over tasks
/// (mean summed, std as the root of summed variances).
pub fn summarize_runs(
    per_task_seeds: &BTreeMap<String, Vec<MetricBundle>>,
) -> BTreeMap<String, BTreeMap<&'static str, Option<Aggregate>>> {
    let mut out = BTreeMap::new();
    for (task, bundles) in per_task_seeds {
        let mut metrics: BTreeMap<&'static str, Option<Aggregate>> = BTreeMap::new();
        for name in METRIC_NAMES {
            let values: Vec<f64> = bundles
                .iter()
                .flat_map(|b| b.fields().into_iter().find(|(n, _)| *n == name))
                .filter_map(|(_, v)| v)
                .collect();
            metrics.insert(name, aggregate(&values));
        }
        out.insert(task.clone(), metrics);
    }
    out
}

/// Suite score per metric: sum of per-task means; std is sqrt of summed
/// variances. Tasks lacking a metric are skipped.
pub fn suite_totals(
    per_task: &BTreeMap<String, BTreeMap<&'static str, Option<Aggregate>>>,
) -> BTreeMap<&'static str, Option<Aggregate>> {
    let mut out = BTreeMap::new();
    for name in METRIC_NAMES {
        let parts: Vec<&Aggregate> = per_task
            .values()
            .filter_map(|metrics| metrics.get(name).and_then(Option::as_ref))
            .collect();
        if parts.is_empty() {
            out.insert(name, None);
            continue;
        }
        let mean = parts.iter().map(|a| a.mean).sum::<f64>();
        let var = parts.iter().map(|a| a.std * a.std).sum::<f64>();
        out.insert(
            name,
            Some(Aggregate {
                mean,
                std: var.sqrt(),
                seeds: parts.iter().map(|a| a.seeds).min().unwrap_or(0),
            }),
        );
    }
    out
}
