//! Molecular graph representation.

use std::fmt;

/// Heavy-atom elements the parser understands, plus explicit hydrogen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Element {
    H,
    B,
    C,
    N,
    O,
    F,
    P,
    S,
    Cl,
    Br,
    I,
}

impl Element {
    pub fn symbol(self) -> &'static str {
        match self {
            Element::H => "H",
            Element::B => "B",
            Element::C => "C",
            Element::N => "N",
            Element::O => "O",
            Element::F => "F",
            Element::P => "P",
            Element::S => "S",
            Element::Cl => "Cl",
            Element::Br => "Br",
            Element::I => "I",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Element> {
        Some(match s {
            "H" => Element::H,
            "B" => Element::B,
            "C" => Element::C,
            "N" => Element::N,
            "O" => Element::O,
            "F" => Element::F,
            "P" => Element::P,
            "S" => Element::S,
            "Cl" => Element::Cl,
            "Br" => Element::Br,
            "I" => Element::I,
            _ => return None,
        })
    }

    /// Allowed valences at zero formal charge. A formal charge of `q` shifts
    /// every entry by `q`.
    pub fn allowed_valences(self) -> &'static [i32] {
        match self {
            Element::H => &[1],
            Element::B => &[3],
            Element::C => &[4],
            Element::N => &[3],
            Element::O => &[2],
            Element::F => &[1],
            Element::P => &[3, 5],
            Element::S => &[2, 4, 6],
            Element::Cl => &[1],
            Element::Br => &[1],
            Element::I => &[1],
        }
    }

    /// Elements writable without brackets when their hydrogen count is the
    /// default fill.
    pub fn in_organic_subset(self) -> bool {
        !matches!(self, Element::H)
    }

    /// Elements that may carry the aromatic flag.
    pub fn supports_aromatic(self) -> bool {
        matches!(
            self,
            Element::B | Element::C | Element::N | Element::O | Element::P | Element::S
        )
    }

    fn code(self) -> u8 {
        match self {
            Element::H => 0,
            Element::B => 1,
            Element::C => 2,
            Element::N => 3,
            Element::O => 4,
            Element::F => 5,
            Element::P => 6,
            Element::S => 7,
            Element::Cl => 8,
            Element::Br => 9,
            Element::I => 10,
        }
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Atom {
    pub element: Element,
    pub charge: i32,
    pub aromatic: bool,
    /// Hydrogens attached to this atom (implicit fill for plain atoms,
    /// bracket-specified count otherwise).
    pub hydrogens: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    /// 1, 2 or 3; aromatic bonds carry order 1 plus the flag.
    pub order: u8,
    pub aromatic: bool,
}

impl Bond {
    pub fn other(&self, atom: usize) -> usize {
        if self.a == atom {
            self.b
        } else {
            self.a
        }
    }
}

/// A parsed molecule: atoms, bonds, and a per-bond flag marking bonds that
/// lie on at least one cycle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MolGraph {
    pub atoms: Vec<Atom>,
    pub bonds: Vec<Bond>,
    pub ring_bond: Vec<bool>,
}

impl MolGraph {
    /// Assemble a graph from atoms and bonds, computing ring-bond flags.
    pub fn new(atoms: Vec<Atom>, bonds: Vec<Bond>) -> MolGraph {
        let ring_bond = MolGraph::compute_ring_bonds(atoms.len(), &bonds);
        MolGraph {
            atoms,
            bonds,
            ring_bond,
        }
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    /// Bond indices incident to each atom.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.atoms.len()];
        for (i, b) in self.bonds.iter().enumerate() {
            adj[b.a].push(i);
            adj[b.b].push(i);
        }
        adj
    }

    /// Heavy-atom degree (number of incident bonds).
    pub fn degree(&self, atom: usize) -> usize {
        self.bonds
            .iter()
            .filter(|b| b.a == atom || b.b == atom)
            .count()
    }

    /// Sum of bond orders at an atom, aromatic bonds counted as 1.
    pub fn bond_order_sum(&self, atom: usize) -> i32 {
        self.bonds
            .iter()
            .filter(|b| b.a == atom || b.b == atom)
            .map(|b| i32::from(b.order))
            .sum()
    }

    /// Stable per-atom seed for fingerprint and canonical-key hashing.
    pub(crate) fn atom_invariant(&self, atom: usize) -> u64 {
        let a = &self.atoms[atom];
        let mut v = u64::from(a.element.code());
        v = v << 8 | (a.charge + 16) as u64;
        v = v << 8 | u64::from(a.hydrogens);
        v = v << 8 | u64::from(a.aromatic);
        v = v << 8 | self.degree(atom) as u64;
        v
    }

    /// Mark bonds that lie on a cycle (non-bridge edges), via one DFS over
    /// each connected component.
    pub(crate) fn compute_ring_bonds(atoms: usize, bonds: &[Bond]) -> Vec<bool> {
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); atoms]; // (neighbor, bond idx)
        for (i, b) in bonds.iter().enumerate() {
            adj[b.a].push((b.b, i));
            adj[b.b].push((b.a, i));
        }
        let mut ring = vec![false; bonds.len()];
        let mut disc = vec![usize::MAX; atoms];
        let mut low = vec![0usize; atoms];
        let mut timer = 0usize;
        // Iterative Tarjan bridge finding; a bond is a ring bond iff it is
        // not a bridge.
        for root in 0..atoms {
            if disc[root] != usize::MAX {
                continue;
            }
            // stack entries: (node, incoming bond, next child index)
            let mut stack: Vec<(usize, usize, usize)> = vec![(root, usize::MAX, 0)];
            disc[root] = timer;
            low[root] = timer;
            timer += 1;
            while let Some(&(v, in_bond, ci)) = stack.last() {
                if ci < adj[v].len() {
                    stack.last_mut().expect("non-empty").2 += 1;
                    let (u, bi) = adj[v][ci];
                    if bi == in_bond {
                        continue;
                    }
                    if disc[u] == usize::MAX {
                        disc[u] = timer;
                        low[u] = timer;
                        timer += 1;
                        stack.push((u, bi, 0));
                    } else {
                        low[v] = low[v].min(disc[u]);
                        ring[bi] = true; // back edge: always on a cycle
                    }
                } else {
                    stack.pop();
                    if let Some(&(p, _, _)) = stack.last() {
                        low[p] = low[p].min(low[v]);
                        if low[v] <= disc[p] {
                            ring[in_bond] = true; // tree edge inside a cycle
                        }
                    }
                }
            }
        }
        ring
    }

    /// Connected components as atom index lists, in first-atom order.
    pub(crate) fn components(&self) -> Vec<Vec<usize>> {
        let adj = self.adjacency();
        let mut seen = vec![false; self.atoms.len()];
        let mut out = Vec::new();
        for start in 0..self.atoms.len() {
            if seen[start] {
                continue;
            }
            let mut comp = Vec::new();
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(v) = stack.pop() {
                comp.push(v);
                for &bi in &adj[v] {
                    let u = self.bonds[bi].other(v);
                    if !seen[u] {
                        seen[u] = true;
                        stack.push(u);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }
}
