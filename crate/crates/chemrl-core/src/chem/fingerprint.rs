//! Atom-environment fingerprints and Tanimoto similarity.
//!
//! Layer 0 hashes each atom's local invariant (element, charge, degree,
//! hydrogen count, aromaticity); layer r hashes the atom's layer r-1
//! identifier together with the sorted multiset of (bond kind, neighbor
//! layer r-1 identifier) pairs. Every identifier of every layer sets bit
//! `id mod width`. The hash is a fixed 64-bit mixer, so fingerprints are
//! stable across runs and invariant under atom reordering.

use super::graph::MolGraph;
use super::ChemError;

pub const DEFAULT_RADIUS: u32 = 2;
pub const DEFAULT_WIDTH: u32 = 2048;

/// Set of set-bit indices in a fixed-width bit space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fingerprint {
    width: u32,
    radius: u32,
    bits: Vec<u32>, // sorted, deduplicated
}

impl Fingerprint {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn radius(&self) -> u32 {
        self.radius
    }

    pub fn bits(&self) -> &[u32] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.len()
    }

    pub fn contains(&self, bit: u32) -> bool {
        self.bits.binary_search(&bit).is_ok()
    }

    fn from_bits(mut bits: Vec<u32>, width: u32, radius: u32) -> Fingerprint {
        bits.sort_unstable();
        bits.dedup();
        Fingerprint {
            width,
            radius,
            bits,
        }
    }

    fn intersection_size(&self, other: &Fingerprint) -> usize {
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < self.bits.len() && j < other.bits.len() {
            match self.bits[i].cmp(&other.bits[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }
}

/// Union of fingerprints from a reference set, used as a bit universe.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BitUniverse {
    width: u32,
    bits: Vec<u32>, // sorted, deduplicated
}

impl BitUniverse {
    pub fn new(width: u32) -> BitUniverse {
        BitUniverse {
            width,
            bits: Vec::new(),
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn bits(&self) -> &[u32] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn absorb(&mut self, fp: &Fingerprint) -> Result<(), ChemError> {
        if fp.width != self.width {
            return Err(ChemError::WidthMismatch {
                a: self.width as usize,
                b: fp.width as usize,
            });
        }
        self.bits.extend_from_slice(&fp.bits);
        self.bits.sort_unstable();
        self.bits.dedup();
        Ok(())
    }

    pub fn from_sorted_bits(bits: Vec<u32>, width: u32) -> BitUniverse {
        let mut b = bits;
        b.sort_unstable();
        b.dedup();
        BitUniverse { width, bits: b }
    }

    pub fn contains(&self, bit: u32) -> bool {
        self.bits.binary_search(&bit).is_ok()
    }
}

fn mix(mut h: u64, v: u64) -> u64 {
    h ^= v.wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(h << 6)
        .wrapping_add(h >> 2);
    h = h.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    h ^ (h >> 27)
}

fn bond_kind(order: u8, aromatic: bool) -> u64 {
    if aromatic {
        4
    } else {
        u64::from(order)
    }
}

/// Iterative-neighborhood fingerprint. `width` must be a power of two.
pub fn fingerprint(mol: &MolGraph, radius: u32, width: u32) -> Fingerprint {
    assert!(
        width.is_power_of_two(),
        "fingerprint width must be a power of two, got {width}"
    );
    let adj = mol.adjacency();
    let n = mol.atom_count();
    let mut ids: Vec<u64> = (0..n)
        .map(|i| mix(0x243F_6A88_85A3_08D3, mol.atom_invariant(i)))
        .collect();
    let mut bits: Vec<u32> = ids.iter().map(|&id| (id % u64::from(width)) as u32).collect();
    for _ in 0..radius {
        let mut next = Vec::with_capacity(n);
        for i in 0..n {
            let mut env: Vec<(u64, u64)> = adj[i]
                .iter()
                .map(|&bi| {
                    let b = &mol.bonds[bi];
                    (bond_kind(b.order, b.aromatic), ids[b.other(i)])
                })
                .collect();
            if env.is_empty() {
                // isolated atom: the environment never grows
                next.push(ids[i]);
                continue;
            }
            env.sort_unstable();
            let mut h = mix(0x1319_8A2E_0370_7344, ids[i]);
            for (kind, nid) in env {
                h = mix(h, kind);
                h = mix(h, nid);
            }
            next.push(h);
        }
        ids = next;
        bits.extend(ids.iter().map(|&id| (id % u64::from(width)) as u32));
    }
    Fingerprint::from_bits(bits, width, radius)
}

/// |a & b| / |a | b|; 1.0 when both are empty.
pub fn tanimoto(a: &Fingerprint, b: &Fingerprint) -> Result<f64, ChemError> {
    if a.width != b.width {
        return Err(ChemError::WidthMismatch {
            a: a.width as usize,
            b: b.width as usize,
        });
    }
    let inter = a.intersection_size(b);
    let union = a.count() + b.count() - inter;
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

/// Fraction of fingerprint bits absent from the reference universe;
/// 0.0 for an empty fingerprint.
pub fn novel_bits_fraction(fp: &Fingerprint, universe: &BitUniverse) -> Result<f64, ChemError> {
    if fp.width != universe.width() {
        return Err(ChemError::WidthMismatch {
            a: fp.width as usize,
            b: universe.width() as usize,
        });
    }
    if fp.bits.is_empty() {
        return Ok(0.0);
    }
    let novel = fp.bits.iter().filter(|b| !universe.contains(**b)).count();
    Ok(novel as f64 / fp.count() as f64)
}
