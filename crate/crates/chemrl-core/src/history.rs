//! The per-run record stream: one row per oracle call.
//!
//! CSV schema (v1): `oracle_call,smiles,reward,valid,unique_so_far,
//! algorithm,seed`. Oracle-call indices are 1..N contiguous; rewards lie in
//! [0, 1]. Deduplication keys are canonical keys with the raw string as
//! fallback and are recomputed on load.

use std::collections::HashSet;

use thiserror::Error;

use crate::chem;
use crate::scoring::dedup_key;

#[derive(Debug, Error)]
pub enum HistoryError {
    #[error("history is empty")]
    EmptyHistory,
    #[error("history schema mismatch at line {line}: {detail}")]
    SchemaMismatch { line: usize, detail: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRecord {
    pub oracle_call: u64,
    pub smiles: String,
    pub reward: f64,
    pub valid: bool,
    pub key: String,
    pub unique_so_far: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunHistory {
    pub algorithm: String,
    pub seed: u64,
    pub records: Vec<HistoryRecord>,
    keys_seen: HashSet<String>,
}

impl RunHistory {
    pub fn new(algorithm: &str, seed: u64) -> RunHistory {
        RunHistory {
            algorithm: algorithm.to_string(),
            seed,
            records: Vec::new(),
            keys_seen: HashSet::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Append one scored molecule.
    pub fn push(&mut self, smiles: &str, reward: f64) {
        debug_assert!((0.0..=1.0).contains(&reward), "reward in [0,1]");
        let valid = chem::parse(smiles).is_ok();
        let key = dedup_key(smiles);
        self.keys_seen.insert(key.clone());
        self.records.push(HistoryRecord {
            oracle_call: self.records.len() as u64 + 1,
            smiles: smiles.to_string(),
            reward,
            valid,
            key,
            unique_so_far: self.keys_seen.len() as u64,
        });
    }

    pub fn valid_fraction(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().filter(|r| r.valid).count() as f64 / self.records.len() as f64
    }

    /// Distinct keys divided by total calls.
    pub fn unique_fraction(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.keys_seen.len() as f64 / self.records.len() as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("oracle_call,smiles,reward,valid,unique_so_far,algorithm,seed\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.oracle_call,
                csv_cell(&r.smiles),
                r.reward,
                u8::from(r.valid),
                r.unique_so_far,
                csv_cell(&self.algorithm),
                self.seed
            ));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<RunHistory, HistoryError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(HistoryError::EmptyHistory)?;
        if header != "oracle_call,smiles,reward,valid,unique_so_far,algorithm,seed" {
            return Err(HistoryError::SchemaMismatch {
                line: 1,
                detail: format!("unexpected header `{header}`"),
            });
        }
        let mut history: Option<RunHistory> = None;
        for (idx, line) in lines {
            let lineno = idx + 1;
            if line.is_empty() {
                continue;
            }
            let cells = split_csv(line);
            if cells.len() != 7 {
                return Err(HistoryError::SchemaMismatch {
                    line: lineno,
                    detail: format!("expected 7 columns, found {}", cells.len()),
                });
            }
            let fail = |detail: String| HistoryError::SchemaMismatch {
                line: lineno,
                detail,
            };
            let oracle_call: u64 = cells[0]
                .parse()
                .map_err(|_| fail(format!("bad oracle_call `{}`", cells[0])))?;
            let reward: f64 = cells[2]
                .parse()
                .map_err(|_| fail(format!("bad reward `{}`", cells[2])))?;
            if !(0.0..=1.0).contains(&reward) {
                return Err(fail(format!("reward {reward} outside [0,1]")));
            }
            let valid = match cells[3].as_str() {
                "0" => false,
                "1" => true,
                other => return Err(fail(format!("bad valid flag `{other}`"))),
            };
            let seed: u64 = cells[6]
                .parse()
                .map_err(|_| fail(format!("bad seed `{}`", cells[6])))?;
            let h = history.get_or_insert_with(|| RunHistory::new(&cells[5], seed));
            if cells[5] != h.algorithm || seed != h.seed {
                return Err(fail("algorithm/seed differ across rows".to_string()));
            }
            if oracle_call != h.records.len() as u64 + 1 {
                return Err(fail(format!(
                    "oracle_call {oracle_call} breaks 1..N contiguity"
                )));
            }
            h.push(&cells[1], reward);
            let rec = h.records.last().expect("just pushed");
            if rec.valid != valid {
                return Err(fail(format!(
                    "valid flag {} disagrees with parse result {}",
                    u8::from(valid),
                    u8::from(rec.valid)
                )));
            }
        }
        history.ok_or(HistoryError::EmptyHistory)
    }
}

fn csv_cell(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn split_csv(line: &str) -> Vec<String> {
    let mut cells = Vec::new();
    let mut cell = String::new();
    let mut quoted = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '"' if quoted => {
                if chars.peek() == Some(&'"') {
                    chars.next();
                    cell.push('"');
                } else {
                    quoted = false;
                }
            }
            '"' => quoted = true,
            ',' if !quoted => {
                cells.push(std::mem::take(&mut cell));
            }
            other => cell.push(other),
        }
    }
    cells.push(cell);
    cells
}
