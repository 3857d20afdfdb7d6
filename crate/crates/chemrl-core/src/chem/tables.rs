//! Shipped descriptor data tables.
//!
//! Atomic weights, logP atom contributions, and substructure alerts are
//! versioned UTF-8 CSV files (`pattern,value` rows, `#` comments). The copies
//! under `data/` are compiled in; setting `CHEMRL_DATA_DIR` to a directory
//! containing files of the same names overrides them at first use.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use super::graph::Element;
use super::ChemError;

pub const ATOMIC_WEIGHTS_FILE: &str = "atomic_weights_v1.csv";
pub const LOGP_FILE: &str = "logp_contributions_v1.csv";
pub const ALERTS_FILE: &str = "substructure_alerts_v1.csv";

const ATOMIC_WEIGHTS_BUILTIN: &str = include_str!("../../data/atomic_weights_v1.csv");
const LOGP_BUILTIN: &str = include_str!("../../data/logp_contributions_v1.csv");
const ALERTS_BUILTIN: &str = include_str!("../../data/substructure_alerts_v1.csv");

/// Key into the logP contribution table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LogpType {
    Heavy { element: Element, aromatic: bool },
    HydrogenOn(Element),
}

#[derive(Debug, Clone)]
pub struct Tables {
    weights: HashMap<Element, f64>,
    logp: HashMap<LogpType, f64>,
    /// (token pattern, label) pairs.
    pub alerts: Vec<(String, String)>,
}

impl Tables {
    pub fn atomic_weight(&self, element: Element) -> f64 {
        *self
            .weights
            .get(&element)
            .unwrap_or_else(|| panic!("atomic weight table is missing {element}"))
    }

    pub fn logp_contribution(&self, ty: LogpType) -> Option<f64> {
        self.logp.get(&ty).copied()
    }

    pub fn parse(weights_csv: &str, logp_csv: &str, alerts_csv: &str) -> Result<Tables, ChemError> {
        let mut weights = HashMap::new();
        for (pattern, value) in csv_rows(weights_csv, ATOMIC_WEIGHTS_FILE)? {
            let element = Element::from_symbol(&pattern).ok_or_else(|| ChemError::BadTable {
                file: ATOMIC_WEIGHTS_FILE.into(),
                detail: format!("unknown element `{pattern}`"),
            })?;
            weights.insert(element, parse_value(&value, ATOMIC_WEIGHTS_FILE)?);
        }
        let mut logp = HashMap::new();
        for (pattern, value) in csv_rows(logp_csv, LOGP_FILE)? {
            let ty = parse_logp_pattern(&pattern).ok_or_else(|| ChemError::BadTable {
                file: LOGP_FILE.into(),
                detail: format!("unknown atom-type pattern `{pattern}`"),
            })?;
            logp.insert(ty, parse_value(&value, LOGP_FILE)?);
        }
        let mut alerts = Vec::new();
        for (pattern, label) in csv_rows(alerts_csv, ALERTS_FILE)? {
            alerts.push((pattern, label));
        }
        Ok(Tables {
            weights,
            logp,
            alerts,
        })
    }

    /// Load all three tables from a directory.
    pub fn load_from_dir(dir: &Path) -> Result<Tables, ChemError> {
        let read = |name: &str| {
            fs::read_to_string(dir.join(name)).map_err(|e| ChemError::BadTable {
                file: name.into(),
                detail: format!("{}: {e}", dir.join(name).display()),
            })
        };
        Tables::parse(
            &read(ATOMIC_WEIGHTS_FILE)?,
            &read(LOGP_FILE)?,
            &read(ALERTS_FILE)?,
        )
    }

    fn builtin() -> Tables {
        Tables::parse(ATOMIC_WEIGHTS_BUILTIN, LOGP_BUILTIN, ALERTS_BUILTIN)
            .expect("built-in tables are well-formed")
    }
}

/// The process-wide tables, honoring `CHEMRL_DATA_DIR` on first access.
pub fn tables() -> &'static Tables {
    static TABLES: OnceLock<Tables> = OnceLock::new();
    TABLES.get_or_init(|| match std::env::var_os("CHEMRL_DATA_DIR") {
        Some(dir) => Tables::load_from_dir(Path::new(&dir)).unwrap_or_else(|e| {
            panic!("CHEMRL_DATA_DIR={}: {e}", Path::new(&dir).display());
        }),
        None => Tables::builtin(),
    })
}

fn csv_rows(text: &str, file: &str) -> Result<Vec<(String, String)>, ChemError> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (a, b) = line.split_once(',').ok_or_else(|| ChemError::BadTable {
            file: file.into(),
            detail: format!("line {}: expected `pattern,value`", lineno + 1),
        })?;
        rows.push((a.trim().to_string(), b.trim().to_string()));
    }
    Ok(rows)
}

fn parse_value(s: &str, file: &str) -> Result<f64, ChemError> {
    s.parse().map_err(|_| ChemError::BadTable {
        file: file.into(),
        detail: format!("bad numeric value `{s}`"),
    })
}

fn parse_logp_pattern(pattern: &str) -> Option<LogpType> {
    if let Some(elem) = pattern.strip_prefix("H@") {
        return Element::from_symbol(elem).map(LogpType::HydrogenOn);
    }
    let aromatic = pattern.chars().next()?.is_ascii_lowercase();
    let symbol = if aromatic {
        let mut cs = pattern.chars();
        let first = cs.next()?.to_ascii_uppercase();
        let rest: String = cs.collect();
        format!("{first}{rest}")
    } else {
        pattern.to_string()
    };
    let element = Element::from_symbol(&symbol)?;
    if aromatic && !element.supports_aromatic() {
        return None;
    }
    Some(LogpType::Heavy { element, aromatic })
}
