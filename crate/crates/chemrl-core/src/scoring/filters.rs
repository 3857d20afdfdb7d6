//! Chemistry filters: the basic property filter (B-CF) and the
//! training-distribution target filter (T-CF).

use serde::{Deserialize, Serialize};

use crate::chem::{
    fingerprint, logp_estimate, molecular_weight, novel_bits_fraction, parse,
    rooted_serializations, rotatable_bond_count, tables::tables, BitUniverse, Element, MolGraph,
    DEFAULT_RADIUS, DEFAULT_WIDTH,
};
use crate::vocab::tokenize;

/// Thresholds of the basic chemistry filter.
#[derive(Debug, Clone, PartialEq)]
pub struct BasicFilterLimits {
    pub logp_max: f64,
    pub rotatable_max: usize,
    pub mw_min: f64,
    pub mw_max: f64,
    pub allowed_elements: Vec<Element>,
}

impl Default for BasicFilterLimits {
    fn default() -> BasicFilterLimits {
        BasicFilterLimits {
            logp_max: 4.5,
            rotatable_max: 7,
            mw_min: 150.0,
            mw_max: 650.0,
            allowed_elements: vec![
                Element::C,
                Element::S,
                Element::O,
                Element::N,
                Element::H,
                Element::F,
                Element::Cl,
                Element::Br,
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterOutcome {
    pub pass: bool,
    pub reasons: Vec<String>,
}

impl FilterOutcome {
    fn from_reasons(reasons: Vec<String>) -> FilterOutcome {
        FilterOutcome {
            pass: reasons.is_empty(),
            reasons,
        }
    }
}

/// Token-level match of an alert fragment against one serialization of
/// the molecule.
fn matches_alert(tokens: &[String], pattern: &str) -> bool {
    let Ok(pattern_tokens) = tokenize(pattern) else {
        return false;
    };
    if pattern_tokens.is_empty() || pattern_tokens.len() > tokens.len() {
        return false;
    }
    tokens
        .windows(pattern_tokens.len())
        .any(|w| w == pattern_tokens.as_slice())
}

/// B-CF with explicit limits.
pub fn chemistry_filter_basic_with(mol: &MolGraph, limits: &BasicFilterLimits) -> FilterOutcome {
    let mut reasons = Vec::new();
    let logp = logp_estimate(mol).value;
    if logp > limits.logp_max {
        reasons.push(format!("logp {logp:.2} > {}", limits.logp_max));
    }
    let rot = rotatable_bond_count(mol);
    if rot > limits.rotatable_max {
        reasons.push(format!("rotatable {rot} > {}", limits.rotatable_max));
    }
    let mw = molecular_weight(mol);
    if mw < limits.mw_min || mw > limits.mw_max {
        reasons.push(format!(
            "weight {mw:.1} outside {}..{}",
            limits.mw_min, limits.mw_max
        ));
    }
    for atom in &mol.atoms {
        if !limits.allowed_elements.contains(&atom.element) {
            reasons.push(format!("element {} not allowed", atom.element));
            break;
        }
    }
    let rooted: Vec<Vec<String>> = rooted_serializations(mol)
        .iter()
        .map(|s| tokenize(s).unwrap_or_default())
        .collect();
    'alerts: for (pattern, label) in &tables().alerts {
        for tokens in &rooted {
            if matches_alert(tokens, pattern) {
                reasons.push(format!("alert {label}"));
                break 'alerts;
            }
        }
    }
    FilterOutcome::from_reasons(reasons)
}

/// B-CF at the shipped default limits.
pub fn chemistry_filter_basic(mol: &MolGraph) -> FilterOutcome {
    chemistry_filter_basic_with(mol, &BasicFilterLimits::default())
}

/// Reference-corpus statistics backing the T-CF.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceStats {
    pub mw_mean: f64,
    pub mw_std: f64,
    pub logp_mean: f64,
    pub logp_std: f64,
    pub bits: BitUniverse,
    pub molecules: usize,
}

#[derive(Serialize, Deserialize)]
struct ReferenceStatsFile {
    version: u32,
    mw_mean: f64,
    mw_std: f64,
    logp_mean: f64,
    logp_std: f64,
    fingerprint_width: u32,
    bits: Vec<u32>,
    molecules: usize,
}

impl ReferenceStats {
    /// Descriptor means/stds and the union fingerprint universe over the
    /// parseable corpus lines.
    pub fn from_corpus<S: AsRef<str>>(lines: impl IntoIterator<Item = S>) -> Option<ReferenceStats> {
        let mut mws = Vec::new();
        let mut logps = Vec::new();
        let mut bits: Vec<u32> = Vec::new();
        for line in lines {
            let Ok(mol) = parse(line.as_ref().trim()) else {
                continue;
            };
            mws.push(molecular_weight(&mol));
            logps.push(logp_estimate(&mol).value);
            bits.extend(fingerprint(&mol, DEFAULT_RADIUS, DEFAULT_WIDTH).bits());
        }
        if mws.is_empty() {
            return None;
        }
        let stats = |xs: &[f64]| {
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            (mean, var.sqrt())
        };
        let (mw_mean, mw_std) = stats(&mws);
        let (logp_mean, logp_std) = stats(&logps);
        Some(ReferenceStats {
            mw_mean,
            mw_std,
            logp_mean,
            logp_std,
            bits: BitUniverse::from_sorted_bits(bits, DEFAULT_WIDTH),
            molecules: mws.len(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ReferenceStatsFile {
            version: 1,
            mw_mean: self.mw_mean,
            mw_std: self.mw_std,
            logp_mean: self.logp_mean,
            logp_std: self.logp_std,
            fingerprint_width: self.bits.width(),
            bits: self.bits.bits().to_vec(),
            molecules: self.molecules,
        })
        .expect("stats serialize")
    }

    pub fn from_json(text: &str) -> Result<ReferenceStats, String> {
        let f: ReferenceStatsFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if f.version != 1 {
            return Err(format!("unsupported reference stats version {}", f.version));
        }
        Ok(ReferenceStats {
            mw_mean: f.mw_mean,
            mw_std: f.mw_std,
            logp_mean: f.logp_mean,
            logp_std: f.logp_std,
            bits: BitUniverse::from_sorted_bits(f.bits, f.fingerprint_width),
            molecules: f.molecules,
        })
    }
}

/// T-CF: descriptors within mean +- 4 sigma of the reference distribution
/// and at most 10% novel fingerprint bits.
pub fn chemistry_filter_target(mol: &MolGraph, stats: &ReferenceStats) -> FilterOutcome {
    let mut reasons = Vec::new();
    let mw = molecular_weight(mol);
    let (mw_lo, mw_hi) = (
        stats.mw_mean - 4.0 * stats.mw_std,
        stats.mw_mean + 4.0 * stats.mw_std,
    );
    if mw < mw_lo || mw > mw_hi {
        reasons.push(format!("weight {mw:.1} outside reference {mw_lo:.1}..{mw_hi:.1}"));
    }
    let logp = logp_estimate(mol).value;
    let (lp_lo, lp_hi) = (
        stats.logp_mean - 4.0 * stats.logp_std,
        stats.logp_mean + 4.0 * stats.logp_std,
    );
    if logp < lp_lo || logp > lp_hi {
        reasons.push(format!("logp {logp:.2} outside reference {lp_lo:.2}..{lp_hi:.2}"));
    }
    let fp = fingerprint(mol, DEFAULT_RADIUS, stats.bits.width());
    let novel = novel_bits_fraction(&fp, &stats.bits).expect("widths match by construction");
    if novel > 0.10 {
        reasons.push(format!("novel bits {:.0}% > 10%", novel * 100.0));
    }
    FilterOutcome::from_reasons(reasons)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heavy_molecule_fails_weight_clause() {
        // 50 carbons: ~700 Da
        let smiles = "C".repeat(50);
        let out = chemistry_filter_basic(&parse(&smiles).unwrap());
        assert!(!out.pass);
        assert!(out.reasons.iter().any(|r| r.contains("weight")));
    }

    #[test]
    fn phosphorus_fails_the_atom_set() {
        let out = chemistry_filter_basic(&parse("CP(C)CCCCCCCCC").unwrap());
        assert!(out.reasons.iter().any(|r| r.contains("element P")));
    }

    #[test]
    fn logp_boundary_is_inclusive() {
        // per-atom logP of aliphatic carbon is 0.31; 14 carbons: 4.34 <= 4.5
        // passes, 16 carbons: 4.96 fails (weight still in range)
        let pass = parse(&"C".repeat(14)).unwrap();
        let out = chemistry_filter_basic(&pass);
        assert!(!out.reasons.iter().any(|r| r.contains("logp")), "{:?}", out.reasons);
        let fail = parse(&"C".repeat(16)).unwrap();
        let out = chemistry_filter_basic(&fail);
        assert!(out.reasons.iter().any(|r| r.contains("logp")));
    }

    #[test]
    fn alerts_match_fragment_tokens() {
        let azo = parse("CCCCCCCCCCN=NCCCCCCCCCC").unwrap();
        let out = chemistry_filter_basic(&azo);
        assert!(out.reasons.iter().any(|r| r.contains("alert azo")), "{:?}", out.reasons);
    }

    #[test]
    fn reference_corpus_members_pass_their_own_descriptor_bounds() {
        let corpus = [
            "CCOc1ccccc1",
            "CC(=O)NCCC",
            "c1ccccc1CCN",
            "CCCCCCO",
            "CNC(=O)CC",
        ];
        let stats = ReferenceStats::from_corpus(corpus).unwrap();
        for s in corpus {
            let out = chemistry_filter_target(&parse(s).unwrap(), &stats);
            assert!(out.pass, "{s}: {:?}", out.reasons);
        }
    }

    #[test]
    fn out_of_distribution_weight_fails_target_filter() {
        let corpus = ["CCO", "CCC", "CCN", "CCCO"];
        let stats = ReferenceStats::from_corpus(corpus).unwrap();
        let big = parse(&"C".repeat(40)).unwrap();
        let out = chemistry_filter_target(&big, &stats);
        assert!(!out.pass);
        assert!(out.reasons.iter().any(|r| r.contains("weight")));
    }

    #[test]
    fn novel_ring_system_fails_bit_rule() {
        let corpus = ["CCCCO", "CCCCN", "CCCC", "CCOCC"];
        let stats = ReferenceStats::from_corpus(corpus).unwrap();
        let aromatic = parse("c1ccccc1").unwrap();
        let out = chemistry_filter_target(&aromatic, &stats);
        assert!(out.reasons.iter().any(|r| r.contains("novel bits")));
    }

    #[test]
    fn relaxing_thresholds_never_flips_pass_to_fail() {
        let defaults = BasicFilterLimits::default();
        let relaxed = BasicFilterLimits {
            logp_max: defaults.logp_max + 2.0,
            rotatable_max: defaults.rotatable_max + 3,
            mw_min: defaults.mw_min - 50.0,
            mw_max: defaults.mw_max + 100.0,
            allowed_elements: {
                let mut a = defaults.allowed_elements.clone();
                a.push(Element::I);
                a
            },
        };
        for smiles in [
            "CC(=O)Nc1ccc(O)cc1",
            "CCCCCCCCSC",
            "BrCCBr",
            "c1ccccc1c1ccccc1CCO",
            "CCCCCCCCCCCC",
            "ICCI",
        ] {
            let mol = parse(smiles).unwrap();
            let strict = chemistry_filter_basic_with(&mol, &defaults);
            let loose = chemistry_filter_basic_with(&mol, &relaxed);
            if strict.pass {
                assert!(loose.pass, "{smiles}: relaxing flipped pass to fail");
            }
        }
    }

    #[test]
    fn stats_json_round_trip() {
        let stats = ReferenceStats::from_corpus(["CCO", "CCN"]).unwrap();
        let json = stats.to_json();
        let back = ReferenceStats::from_json(&json).unwrap();
        assert_eq!(stats, back);
    }
}
