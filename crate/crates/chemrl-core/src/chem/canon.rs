//! Canonical serialization of molecular graphs.
//!
//! Atom ranks come from iterative neighborhood refinement. Serialization is
//! a depth-first SMILES writer that starts from every atom of the lowest
//! rank class and, whenever several unvisited neighbors share a rank, forks
//! the remaining traversal per choice; the lexicographically smallest
//! complete string wins. All tie-breaking compares rendered strings, never
//! input atom order, so the key is invariant under atom permutations up to
//! refinement resolution (WL-indistinguishable graphs may collide; a fork
//! budget guards pathological symmetry and falls back to a deterministic
//! greedy order).

use super::graph::{Element, MolGraph};

/// Budget of machine steps across one `canonical_key` call.
const FORK_BUDGET: i64 = 200_000;

/// Opaque canonical key; also a parseable SMILES string for the same graph.
pub fn canonical_key(mol: &MolGraph) -> String {
    let ranks = refined_ranks(mol);
    let ctx = Ctx {
        mol,
        adj: mol.adjacency(),
        ranks: &ranks,
    };
    let mut parts: Vec<String> = mol
        .components()
        .iter()
        .map(|comp| canonical_component(&ctx, comp))
        .collect();
    parts.sort();
    parts.join(".")
}

/// Canonical SMILES serializer (same string as [`canonical_key`]).
pub fn write_smiles(mol: &MolGraph) -> String {
    canonical_key(mol)
}

/// One greedy serialization rooted at every atom. Fragment matching scans
/// all of them, which catches linear motifs regardless of where the
/// canonical traversal roots.
pub fn rooted_serializations(mol: &MolGraph) -> Vec<String> {
    let ranks = refined_ranks(mol);
    let ctx = Ctx {
        mol,
        adj: mol.adjacency(),
        ranks: &ranks,
    };
    (0..mol.atom_count())
        .map(|start| greedy_fallback(&ctx, start))
        .collect()
}

fn canonical_component(ctx: &Ctx<'_>, comp: &[usize]) -> String {
    let min_rank = comp.iter().map(|&a| ctx.ranks[a]).min().expect("non-empty");
    let starts: Vec<usize> = comp
        .iter()
        .copied()
        .filter(|&a| ctx.ranks[a] == min_rank)
        .collect();
    let mut budget = FORK_BUDGET;
    let mut best: Option<String> = None;
    for &start in &starts {
        match run(Machine::new(ctx, start), &mut budget) {
            Some(s) => {
                best = Some(match best {
                    None => s,
                    Some(b) => b.min(s),
                })
            }
            None => return greedy_fallback(ctx, starts[0]),
        }
    }
    best.expect("at least one start")
}

/// Deterministic non-forking order used only when the budget is exhausted.
fn greedy_fallback(ctx: &Ctx<'_>, start: usize) -> String {
    let mut m = Machine::new(ctx, start);
    loop {
        let Some(&v) = m.stack.last() else {
            return m.render();
        };
        match m.next_candidates(v).first() {
            Some(&(_, u, bi)) => m.take(v, u, bi),
            None => {
                m.stack.pop();
            }
        }
    }
}

struct Ctx<'a> {
    mol: &'a MolGraph,
    adj: Vec<Vec<usize>>,
    ranks: &'a [u32],
}

#[derive(Clone)]
struct Machine<'a> {
    ctx: &'a Ctx<'a>,
    visited: Vec<bool>,
    bond_done: Vec<bool>,
    stack: Vec<usize>,
    children: Vec<Vec<(usize, usize)>>, // per atom: (bond idx, child atom)
    back_edges: Vec<usize>,
    preorder: Vec<usize>,              // atoms in visit order
    preorder_index: Vec<usize>,
    root: usize,
}

impl<'a> Machine<'a> {
    fn new(ctx: &'a Ctx<'a>, start: usize) -> Machine<'a> {
        let n = ctx.mol.atom_count();
        let mut m = Machine {
            ctx,
            visited: vec![false; n],
            bond_done: vec![false; ctx.mol.bonds.len()],
            stack: vec![start],
            children: vec![Vec::new(); n],
            back_edges: Vec::new(),
            preorder: Vec::new(),
            preorder_index: vec![usize::MAX; n],
            root: start,
        };
        m.visited[start] = true;
        m.preorder_index[start] = 0;
        m.preorder.push(start);
        m
    }

    /// Sweep bonds to visited atoms into back edges, then list unvisited
    /// neighbors of `v` sorted by rank.
    fn next_candidates(&mut self, v: usize) -> Vec<(u32, usize, usize)> {
        let mut cands = Vec::new();
        for i in 0..self.ctx.adj[v].len() {
            let bi = self.ctx.adj[v][i];
            if self.bond_done[bi] {
                continue;
            }
            let u = self.ctx.mol.bonds[bi].other(v);
            if self.visited[u] {
                self.bond_done[bi] = true;
                self.back_edges.push(bi);
            } else {
                cands.push((self.ctx.ranks[u], u, bi));
            }
        }
        cands.sort_unstable();
        cands
    }

    fn take(&mut self, v: usize, u: usize, bond: usize) {
        self.bond_done[bond] = true;
        self.visited[u] = true;
        self.preorder_index[u] = self.preorder.len();
        self.preorder.push(u);
        self.children[v].push((bond, u));
        self.stack.push(u);
    }

    fn render(&self) -> String {
        let mol = self.ctx.mol;
        // ring-closure digits, assigned in atom emission order
        let mut openings: Vec<Vec<(usize, usize)>> = vec![Vec::new(); mol.atom_count()];
        let mut closings: Vec<Vec<(usize, usize)>> = vec![Vec::new(); mol.atom_count()];
        for &bi in &self.back_edges {
            let b = &mol.bonds[bi];
            let (first, second) = if self.preorder_index[b.a] < self.preorder_index[b.b] {
                (b.a, b.b)
            } else {
                (b.b, b.a)
            };
            openings[first].push((self.preorder_index[second], bi));
            closings[second].push((self.preorder_index[first], bi));
        }
        let mut digit_of_bond = vec![0usize; mol.bonds.len()];
        let mut next_digit = 1usize;
        for &a in &self.preorder {
            closings[a].sort_unstable();
            openings[a].sort_unstable();
            for &(_, bi) in &openings[a] {
                digit_of_bond[bi] = next_digit;
                next_digit += 1;
            }
        }

        let mut out = String::new();
        // iterative tree walk; frames: (atom, next child index)
        let mut frames: Vec<(usize, usize)> = vec![(self.root, 0)];
        self.emit_atom(self.root, &openings, &closings, &digit_of_bond, &mut out);
        while let Some(&(v, ci)) = frames.last() {
            if ci >= self.children[v].len() {
                frames.pop();
                if let Some(last) = frames.last_mut() {
                    // close the branch parenthesis unless this was the
                    // last child of its parent
                    if last.1 < self.children[last.0].len() {
                        out.push(')');
                    }
                }
                continue;
            }
            frames.last_mut().expect("non-empty").1 += 1;
            let (bond, child) = self.children[v][ci];
            if ci + 1 < self.children[v].len() {
                out.push('(');
            }
            out.push_str(&bond_str(mol, bond));
            self.emit_atom(child, &openings, &closings, &digit_of_bond, &mut out);
            frames.push((child, 0));
        }
        out
    }

    fn emit_atom(
        &self,
        a: usize,
        openings: &[Vec<(usize, usize)>],
        closings: &[Vec<(usize, usize)>],
        digit_of_bond: &[usize],
        out: &mut String,
    ) {
        out.push_str(&atom_token(self.ctx.mol, a));
        for &(_, bi) in &closings[a] {
            push_digit(digit_of_bond[bi], out);
        }
        for &(_, bi) in &openings[a] {
            out.push_str(&bond_str(self.ctx.mol, bi));
            push_digit(digit_of_bond[bi], out);
        }
    }
}

fn run(mut m: Machine<'_>, budget: &mut i64) -> Option<String> {
    loop {
        *budget -= 1;
        if *budget < 0 {
            return None;
        }
        let Some(&v) = m.stack.last() else {
            return Some(m.render());
        };
        let cands = m.next_candidates(v);
        let Some(&(min_rank, first_u, first_bi)) = cands.first() else {
            m.stack.pop();
            continue;
        };
        let tied: Vec<(u32, usize, usize)> = cands
            .iter()
            .copied()
            .take_while(|c| c.0 == min_rank)
            .collect();
        if tied.len() == 1 {
            m.take(v, first_u, first_bi);
            continue;
        }
        let mut best: Option<String> = None;
        for &(_, u, bi) in &tied {
            let mut fork = m.clone();
            fork.take(v, u, bi);
            let s = run(fork, budget)?;
            best = Some(match best {
                None => s,
                Some(b) => b.min(s),
            });
        }
        return best;
    }
}

fn push_digit(d: usize, out: &mut String) {
    assert!(d <= 99, "too many simultaneous ring closures");
    if d <= 9 {
        out.push((b'0' + d as u8) as char);
    } else {
        out.push('%');
        out.push_str(&format!("{d:02}"));
    }
}

/// Bond prefix, empty when the bond is the default between its endpoints.
fn bond_str(mol: &MolGraph, bond: usize) -> String {
    let b = &mol.bonds[bond];
    let both_aromatic = mol.atoms[b.a].aromatic && mol.atoms[b.b].aromatic;
    match (b.order, b.aromatic) {
        (1, true) => {
            if both_aromatic {
                String::new()
            } else {
                ":".into()
            }
        }
        (1, false) => {
            if both_aromatic {
                "-".into()
            } else {
                String::new()
            }
        }
        (2, _) => "=".into(),
        (3, _) => "#".into(),
        _ => unreachable!("bond orders are 1..=3"),
    }
}

/// Atom token in minimal form: bare organic-subset symbol when re-parsing
/// would infer the stored hydrogen count, bracket form otherwise.
fn atom_token(mol: &MolGraph, idx: usize) -> String {
    let a = &mol.atoms[idx];
    let bond_sum = mol.bond_order_sum(idx);
    let bare_ok = a.charge == 0
        && a.element.in_organic_subset()
        && (!a.aromatic || a.element.supports_aromatic())
        && i32::from(a.hydrogens) == default_fill(a.element, a.aromatic, bond_sum);
    let mut sym = a.element.symbol().to_string();
    if a.aromatic {
        sym = sym.to_ascii_lowercase();
    }
    if bare_ok {
        return sym;
    }
    let mut tok = String::from("[");
    tok.push_str(&sym);
    match a.hydrogens {
        0 => {}
        1 => tok.push('H'),
        n => {
            tok.push('H');
            tok.push_str(&n.to_string());
        }
    }
    match a.charge {
        0 => {}
        1 => tok.push('+'),
        -1 => tok.push('-'),
        n if n > 0 => tok.push_str(&format!("+{n}")),
        n => tok.push_str(&format!("-{}", -n)),
    }
    tok.push(']');
    tok
}

/// Hydrogen count the parser would infer for a bare atom in this bond
/// context, or -1 when no valence fits (forcing bracket form).
fn default_fill(element: Element, aromatic: bool, bond_sum: i32) -> i32 {
    if aromatic {
        if element == Element::C {
            (3 - bond_sum).max(0)
        } else {
            0
        }
    } else {
        element
            .allowed_valences()
            .iter()
            .filter(|&&v| v >= bond_sum)
            .min()
            .map(|&v| v - bond_sum)
            .unwrap_or(-1)
    }
}

/// Dense atom ranks from iterative neighborhood refinement.
pub(crate) fn refined_ranks(mol: &MolGraph) -> Vec<u32> {
    let n = mol.atom_count();
    if n == 0 {
        return Vec::new();
    }
    let adj = mol.adjacency();
    let initial: Vec<u64> = (0..n).map(|i| mol.atom_invariant(i)).collect();
    let mut ranks = dense_ranks(&initial);
    let mut classes = distinct(&ranks);
    for _ in 0..n {
        let signatures: Vec<(u32, Vec<(u64, u32)>)> = (0..n)
            .map(|i| {
                let mut env: Vec<(u64, u32)> = adj[i]
                    .iter()
                    .map(|&bi| {
                        let b = &mol.bonds[bi];
                        let kind = if b.aromatic { 4 } else { u64::from(b.order) };
                        (kind, ranks[b.other(i)])
                    })
                    .collect();
                env.sort_unstable();
                (ranks[i], env)
            })
            .collect();
        let mut sorted: Vec<&(u32, Vec<(u64, u32)>)> = signatures.iter().collect();
        sorted.sort();
        sorted.dedup();
        let new_ranks: Vec<u32> = signatures
            .iter()
            .map(|sig| sorted.binary_search(&sig).expect("present") as u32)
            .collect();
        let new_classes = distinct(&new_ranks);
        ranks = new_ranks;
        if new_classes == classes {
            break;
        }
        classes = new_classes;
    }
    ranks
}

fn dense_ranks(values: &[u64]) -> Vec<u32> {
    let mut sorted: Vec<u64> = values.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    values
        .iter()
        .map(|v| sorted.binary_search(v).expect("present") as u32)
        .collect()
}

fn distinct(ranks: &[u32]) -> usize {
    let mut r = ranks.to_vec();
    r.sort_unstable();
    r.dedup();
    r.len()
}
