//! Additive molecular descriptors backed by the shipped data tables.

use super::graph::{Element, MolGraph};
use super::tables::{tables, LogpType, Tables};

/// Sum of standard atomic weights over heavy atoms plus attached hydrogens.
pub fn molecular_weight(mol: &MolGraph) -> f64 {
    molecular_weight_with(mol, tables())
}

pub fn molecular_weight_with(mol: &MolGraph, tables: &Tables) -> f64 {
    let h = tables.atomic_weight(Element::H);
    mol.atoms
        .iter()
        .map(|a| tables.atomic_weight(a.element) + f64::from(a.hydrogens) * h)
        .sum()
}

/// Count of single, non-aromatic, non-ring bonds whose endpoints are both
/// heavy atoms of degree >= 2. No amide exclusion.
pub fn rotatable_bond_count(mol: &MolGraph) -> usize {
    mol.bonds
        .iter()
        .enumerate()
        .filter(|(i, b)| {
            b.order == 1
                && !b.aromatic
                && !mol.ring_bond[*i]
                && mol.atoms[b.a].element != Element::H
                && mol.atoms[b.b].element != Element::H
                && mol.degree(b.a) >= 2
                && mol.degree(b.b) >= 2
        })
        .count()
}

/// Atom-contribution logP estimate with per-hydrogen terms keyed by the
/// heavy neighbor's element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogpEstimate {
    pub value: f64,
    /// Atoms that matched no table row and contributed 0.
    pub unknown_atoms: usize,
}

pub fn logp_estimate(mol: &MolGraph) -> LogpEstimate {
    logp_estimate_with(mol, tables())
}

pub fn logp_estimate_with(mol: &MolGraph, tables: &Tables) -> LogpEstimate {
    let mut value = 0.0;
    let mut unknown = 0;
    for atom in &mol.atoms {
        match tables.logp_contribution(LogpType::Heavy {
            element: atom.element,
            aromatic: atom.aromatic,
        }) {
            Some(c) => value += c,
            None => unknown += 1,
        }
        if atom.hydrogens > 0 {
            match tables.logp_contribution(LogpType::HydrogenOn(atom.element)) {
                Some(c) => value += f64::from(atom.hydrogens) * c,
                None => unknown += 1,
            }
        }
    }
    LogpEstimate {
        value,
        unknown_atoms: unknown,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse;

    #[test]
    fn water_and_methane_weights_match_the_table() {
        // 15.999 + 2 * 1.008
        assert!((molecular_weight(&parse("O").unwrap()) - 18.015).abs() < 0.01);
        // 12.011 + 4 * 1.008
        assert!((molecular_weight(&parse("C").unwrap()) - 16.043).abs() < 0.01);
        // ethanol: 2C + O + 6H
        assert!((molecular_weight(&parse("CCO").unwrap()) - 46.069).abs() < 0.01);
    }

    #[test]
    fn rotatable_bonds_need_internal_single_bonds() {
        assert_eq!(rotatable_bond_count(&parse("CC").unwrap()), 0);
        // enumerated by hand: only the central C-C qualifies
        assert_eq!(rotatable_bond_count(&parse("CCCC").unwrap()), 1);
        // only the biaryl bond has two non-terminal endpoints outside rings
        assert_eq!(
            rotatable_bond_count(&parse("c1ccccc1-c1ccccc1").unwrap()),
            1
        );
        // double bonds do not rotate; the two internal single bonds do
        assert_eq!(rotatable_bond_count(&parse("CCC=CCC").unwrap()), 2);
    }

    #[test]
    fn hexane_logp_is_six_aliphatic_carbons() {
        let t = tables();
        let per_c = t
            .logp_contribution(LogpType::Heavy {
                element: Element::C,
                aromatic: false,
            })
            .unwrap();
        let est = logp_estimate(&parse("CCCCCC").unwrap());
        assert_eq!(est.unknown_atoms, 0);
        assert!((est.value - 6.0 * per_c).abs() < 1e-12);
    }

    #[test]
    fn water_logp_is_oxygen_plus_hydrogens() {
        let t = tables();
        let o = t
            .logp_contribution(LogpType::Heavy {
                element: Element::O,
                aromatic: false,
            })
            .unwrap();
        let h_on_o = t.logp_contribution(LogpType::HydrogenOn(Element::O)).unwrap();
        let est = logp_estimate(&parse("O").unwrap());
        assert!((est.value - (o + 2.0 * h_on_o)).abs() < 1e-12);
    }

    #[test]
    fn empty_table_gives_zero_with_unknown_flags() {
        let t = Tables::parse(
            "H,1.008\nC,12.011\nO,15.999",
            "# empty\n",
            "# empty\n",
        )
        .unwrap();
        let est = logp_estimate_with(&parse("CCO").unwrap(), &t);
        assert_eq!(est.value, 0.0);
        assert!(est.unknown_atoms > 0);
    }
}
