//! SMILES parsing, molecular descriptors, fingerprints, and canonical keys.

mod canon;
mod descriptors;
mod fingerprint;
mod graph;
mod parser;
pub mod tables;

pub use canon::{canonical_key, rooted_serializations, write_smiles};
pub use descriptors::{
    logp_estimate, logp_estimate_with, molecular_weight, molecular_weight_with,
    rotatable_bond_count, LogpEstimate,
};
pub use fingerprint::{
    fingerprint, novel_bits_fraction, tanimoto, BitUniverse, Fingerprint, DEFAULT_RADIUS,
    DEFAULT_WIDTH,
};
pub use graph::{Atom, Bond, Element, MolGraph};
pub use parser::{parse, ParseError, ParseErrorKind};

use thiserror::Error;

/// Parse-then-fingerprint convenience; `None` for unparseable input.
pub fn chem_parse_fingerprint(smiles: &str, radius: u32, width: u32) -> Option<Fingerprint> {
    parse(smiles).ok().map(|mol| fingerprint(&mol, radius, width))
}

#[derive(Debug, Error)]
pub enum ChemError {
    #[error("fingerprint width mismatch: {a} vs {b}")]
    WidthMismatch { a: usize, b: usize },
    #[error("bad data table {file}: {detail}")]
    BadTable { file: String, detail: String },
}
