//! SMILES parsing to a molecular graph.
//!
//! Supported grammar: the organic subset (B, C, N, O, P, S, F, Cl, Br, I and
//! aromatic b, c, n, o, p, s), bracket atoms with isotope/chirality
//! pass-through, bond symbols `- = # : / \`, branches, ring closures
//! (digits and `%nn`), and `.` fragment separators. Stereochemistry is parsed
//! and discarded. Lowercase (aromatic) atoms must lie on a ring.
//!
//! Hydrogen filling: plain atoms receive the smallest allowed valence that
//! covers their bond-order sum; plain aromatic carbon fills toward valence 4
//! counting one bond for the aromatic system, other plain aromatic atoms get
//! no hydrogens (pyrrole-type nitrogen must be written `[nH]`). Bracket atoms
//! use their explicit count.

use std::collections::HashMap;
use std::fmt;

use super::graph::{Atom, Bond, Element, MolGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    UnbalancedParenthesis,
    /// Also covers inconsistent ring closures: conflicting bond orders,
    /// self-closures, duplicate closures, and malformed `%` pairs.
    UnclosedRing,
    UnknownElement,
    /// Also reports aromatic atoms outside any ring and dangling bond
    /// symbols, both of which leave an unsatisfiable valence.
    ValenceViolation,
    EmptyInput,
    MalformedBracketAtom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParseError {
    pub kind: ParseErrorKind,
    /// Byte offset of the offending character in the input.
    pub position: usize,
}

impl ParseError {
    fn new(kind: ParseErrorKind, position: usize) -> ParseError {
        ParseError { kind, position }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} at byte {}", self.kind, self.position)
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, Copy)]
struct PendingBond {
    order: u8,
    aromatic: bool,
    position: usize,
}

#[derive(Debug, Clone, Copy)]
struct RingOpen {
    atom: usize,
    bond: Option<PendingBond>,
    position: usize,
}

struct AtomBuild {
    element: Element,
    charge: i32,
    aromatic: bool,
    explicit_h: Option<u8>,
    position: usize,
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
    atoms: Vec<AtomBuild>,
    bonds: Vec<Bond>,
    prev: Option<usize>,
    pending: Option<PendingBond>,
    branch_stack: Vec<usize>,
    open_parens: Vec<usize>,
    ring_open: HashMap<u16, RingOpen>,
}

/// Parse a SMILES string. On failure, reports the leftmost error.
pub fn parse(smiles: &str) -> Result<MolGraph, ParseError> {
    if smiles.is_empty() {
        return Err(ParseError::new(ParseErrorKind::EmptyInput, 0));
    }
    let mut p = Parser {
        bytes: smiles.as_bytes(),
        pos: 0,
        atoms: Vec::new(),
        bonds: Vec::new(),
        prev: None,
        pending: None,
        branch_stack: Vec::new(),
        open_parens: Vec::new(),
        ring_open: HashMap::new(),
    };
    p.run()?;
    p.finish()
}

impl<'a> Parser<'a> {
    fn err(&self, kind: ParseErrorKind, position: usize) -> ParseError {
        ParseError::new(kind, position)
    }

    fn run(&mut self) -> Result<(), ParseError> {
        while self.pos < self.bytes.len() {
            let c = self.bytes[self.pos];
            let at = self.pos;
            match c {
                b'(' => {
                    if self.prev.is_none() || self.pending.is_some() {
                        return Err(self.err(ParseErrorKind::UnbalancedParenthesis, at));
                    }
                    self.branch_stack.push(self.prev.expect("checked"));
                    self.open_parens.push(at);
                    self.pos += 1;
                }
                b')' => {
                    if let Some(pb) = self.pending {
                        return Err(self.err(ParseErrorKind::ValenceViolation, pb.position));
                    }
                    match self.branch_stack.pop() {
                        Some(p) => self.prev = Some(p),
                        None => return Err(self.err(ParseErrorKind::UnbalancedParenthesis, at)),
                    }
                    self.open_parens.pop();
                    self.pos += 1;
                }
                b'-' | b'/' | b'\\' => {
                    self.set_pending(1, false, at)?;
                    self.pos += 1;
                }
                b'=' => {
                    self.set_pending(2, false, at)?;
                    self.pos += 1;
                }
                b'#' => {
                    self.set_pending(3, false, at)?;
                    self.pos += 1;
                }
                b':' => {
                    self.set_pending(1, true, at)?;
                    self.pos += 1;
                }
                b'.' => {
                    if let Some(pb) = self.pending {
                        return Err(self.err(ParseErrorKind::ValenceViolation, pb.position));
                    }
                    self.prev = None;
                    self.pos += 1;
                }
                b'0'..=b'9' => {
                    self.ring_closure(u16::from(c - b'0'), at)?;
                    self.pos += 1;
                }
                b'%' => {
                    let d1 = self.bytes.get(at + 1).copied();
                    let d2 = self.bytes.get(at + 2).copied();
                    match (d1, d2) {
                        (Some(x), Some(y)) if x.is_ascii_digit() && y.is_ascii_digit() => {
                            let num = u16::from(x - b'0') * 10 + u16::from(y - b'0');
                            self.ring_closure(num, at)?;
                            self.pos += 3;
                        }
                        _ => return Err(self.err(ParseErrorKind::UnclosedRing, at)),
                    }
                }
                b'[' => {
                    let atom = self.bracket_atom()?;
                    self.add_atom(atom)?;
                }
                b'*' => return Err(self.err(ParseErrorKind::UnknownElement, at)),
                _ => {
                    let atom = self.plain_atom()?;
                    self.add_atom(atom)?;
                }
            }
        }
        if let Some(pb) = self.pending {
            return Err(self.err(ParseErrorKind::ValenceViolation, pb.position));
        }
        if let Some(&open) = self.open_parens.first() {
            return Err(self.err(ParseErrorKind::UnbalancedParenthesis, open));
        }
        Ok(())
    }

    fn set_pending(&mut self, order: u8, aromatic: bool, at: usize) -> Result<(), ParseError> {
        if self.pending.is_some() || self.prev.is_none() {
            return Err(self.err(ParseErrorKind::ValenceViolation, at));
        }
        self.pending = Some(PendingBond {
            order,
            aromatic,
            position: at,
        });
        Ok(())
    }

    fn plain_atom(&mut self) -> Result<AtomBuild, ParseError> {
        let at = self.pos;
        let c = self.bytes[at];
        // two-letter organic-subset symbols
        if c == b'C' || c == b'B' {
            let two = &self.bytes[at..(at + 2).min(self.bytes.len())];
            if two == b"Cl" || two == b"Br" {
                self.pos += 2;
                let element = if two == b"Cl" {
                    Element::Cl
                } else {
                    Element::Br
                };
                return Ok(AtomBuild {
                    element,
                    charge: 0,
                    aromatic: false,
                    explicit_h: None,
                    position: at,
                });
            }
        }
        let (element, aromatic) = match c {
            b'B' => (Element::B, false),
            b'C' => (Element::C, false),
            b'N' => (Element::N, false),
            b'O' => (Element::O, false),
            b'P' => (Element::P, false),
            b'S' => (Element::S, false),
            b'F' => (Element::F, false),
            b'I' => (Element::I, false),
            b'b' => (Element::B, true),
            b'c' => (Element::C, true),
            b'n' => (Element::N, true),
            b'o' => (Element::O, true),
            b'p' => (Element::P, true),
            b's' => (Element::S, true),
            _ => return Err(self.err(ParseErrorKind::UnknownElement, at)),
        };
        self.pos += 1;
        Ok(AtomBuild {
            element,
            charge: 0,
            aromatic,
            explicit_h: None,
            position: at,
        })
    }

    fn bracket_atom(&mut self) -> Result<AtomBuild, ParseError> {
        let open = self.pos;
        let mut j = open + 1;
        let bytes = self.bytes;
        let malformed = |at: usize| ParseError::new(ParseErrorKind::MalformedBracketAtom, at);
        // isotope: pass-through
        while j < bytes.len() && bytes[j].is_ascii_digit() {
            j += 1;
        }
        if j >= bytes.len() {
            return Err(malformed(open));
        }
        // element symbol
        let sym_at = j;
        let (element, aromatic) = {
            let c = bytes[j];
            if c.is_ascii_uppercase() {
                // a following lowercase letter belongs to a two-letter symbol
                let next_lower = bytes
                    .get(j + 1)
                    .is_some_and(|b| b.is_ascii_lowercase());
                if next_lower {
                    let sym = std::str::from_utf8(&bytes[j..j + 2]).expect("ascii");
                    j += 2;
                    match Element::from_symbol(sym) {
                        Some(e) => (e, false),
                        None => return Err(self.err(ParseErrorKind::UnknownElement, sym_at)),
                    }
                } else {
                    let sym = std::str::from_utf8(&bytes[j..j + 1]).expect("ascii");
                    j += 1;
                    match Element::from_symbol(sym) {
                        Some(e) => (e, false),
                        None => return Err(self.err(ParseErrorKind::UnknownElement, sym_at)),
                    }
                }
            } else if c.is_ascii_lowercase() {
                j += 1;
                let element = match c {
                    b'b' => Element::B,
                    b'c' => Element::C,
                    b'n' => Element::N,
                    b'o' => Element::O,
                    b'p' => Element::P,
                    b's' => Element::S,
                    _ => return Err(self.err(ParseErrorKind::UnknownElement, sym_at)),
                };
                (element, true)
            } else {
                return Err(malformed(j));
            }
        };
        // chirality: pass-through
        while j < bytes.len() && bytes[j] == b'@' {
            j += 1;
        }
        // hydrogen count
        let mut hydrogens: u8 = 0;
        if j < bytes.len() && bytes[j] == b'H' {
            j += 1;
            let mut n: u32 = 1;
            if j < bytes.len() && bytes[j].is_ascii_digit() {
                n = 0;
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    n = n * 10 + u32::from(bytes[j] - b'0');
                    if n > 99 {
                        return Err(malformed(j));
                    }
                    j += 1;
                }
            }
            hydrogens = n as u8;
        }
        // charge
        let mut charge: i32 = 0;
        if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
            let sign: i32 = if bytes[j] == b'+' { 1 } else { -1 };
            let symbol = bytes[j];
            j += 1;
            if j < bytes.len() && bytes[j].is_ascii_digit() {
                let mut n: i32 = 0;
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    n = n * 10 + i32::from(bytes[j] - b'0');
                    if n > 9 {
                        return Err(malformed(j));
                    }
                    j += 1;
                }
                charge = sign * n;
            } else {
                charge = sign;
                while j < bytes.len() && bytes[j] == symbol {
                    charge += sign;
                    j += 1;
                }
            }
        }
        // atom class: pass-through
        if j < bytes.len() && bytes[j] == b':' {
            j += 1;
            if j >= bytes.len() || !bytes[j].is_ascii_digit() {
                return Err(malformed(j.min(bytes.len() - 1)));
            }
            while j < bytes.len() && bytes[j].is_ascii_digit() {
                j += 1;
            }
        }
        if j >= bytes.len() {
            return Err(malformed(open));
        }
        if bytes[j] != b']' {
            return Err(malformed(j));
        }
        self.pos = j + 1;
        Ok(AtomBuild {
            element,
            charge,
            aromatic,
            explicit_h: Some(hydrogens),
            position: open,
        })
    }

    fn add_atom(&mut self, atom: AtomBuild) -> Result<(), ParseError> {
        let idx = self.atoms.len();
        if let Some(prev) = self.prev {
            let (order, aromatic) = self.resolve_bond(prev, &atom);
            self.push_bond(prev, idx, order, aromatic);
        } else if let Some(pb) = self.pending {
            return Err(self.err(ParseErrorKind::ValenceViolation, pb.position));
        }
        self.pending = None;
        self.prev = Some(idx);
        self.atoms.push(atom);
        Ok(())
    }

    fn resolve_bond(&mut self, prev: usize, next: &AtomBuild) -> (u8, bool) {
        match self.pending.take() {
            Some(pb) => (pb.order, pb.aromatic),
            None => {
                if self.atoms[prev].aromatic && next.aromatic {
                    (1, true)
                } else {
                    (1, false)
                }
            }
        }
    }

    fn push_bond(&mut self, a: usize, b: usize, order: u8, aromatic: bool) {
        self.bonds.push(Bond {
            a,
            b,
            order,
            aromatic,
        });
    }

    fn has_bond(&self, a: usize, b: usize) -> bool {
        self.bonds
            .iter()
            .any(|bd| (bd.a == a && bd.b == b) || (bd.a == b && bd.b == a))
    }

    fn ring_closure(&mut self, num: u16, at: usize) -> Result<(), ParseError> {
        let here = match self.prev {
            Some(p) => p,
            None => return Err(self.err(ParseErrorKind::UnclosedRing, at)),
        };
        match self.ring_open.remove(&num) {
            None => {
                self.ring_open.insert(
                    num,
                    RingOpen {
                        atom: here,
                        bond: self.pending.take(),
                        position: at,
                    },
                );
                Ok(())
            }
            Some(open) => {
                if open.atom == here || self.has_bond(open.atom, here) {
                    return Err(self.err(ParseErrorKind::UnclosedRing, at));
                }
                let close_bond = self.pending.take();
                let (order, aromatic) = match (open.bond, close_bond) {
                    (Some(a), Some(b)) => {
                        if a.order != b.order || a.aromatic != b.aromatic {
                            return Err(self.err(ParseErrorKind::UnclosedRing, at));
                        }
                        (a.order, a.aromatic)
                    }
                    (Some(x), None) | (None, Some(x)) => (x.order, x.aromatic),
                    (None, None) => {
                        if self.atoms[open.atom].aromatic && self.atoms[here].aromatic {
                            (1, true)
                        } else {
                            (1, false)
                        }
                    }
                };
                self.push_bond(open.atom, here, order, aromatic);
                Ok(())
            }
        }
    }

    fn finish(self) -> Result<MolGraph, ParseError> {
        // deferred errors are reported leftmost-first
        let mut deferred: Vec<ParseError> = Vec::new();
        for open in self.ring_open.values() {
            deferred.push(ParseError::new(ParseErrorKind::UnclosedRing, open.position));
        }

        let ring_bond = MolGraph::compute_ring_bonds(self.atoms.len(), &self.bonds);
        let mut bond_sum = vec![0i32; self.atoms.len()];
        let mut on_ring = vec![false; self.atoms.len()];
        for (i, b) in self.bonds.iter().enumerate() {
            bond_sum[b.a] += i32::from(b.order);
            bond_sum[b.b] += i32::from(b.order);
            if ring_bond[i] {
                on_ring[b.a] = true;
                on_ring[b.b] = true;
            }
        }

        let mut atoms = Vec::with_capacity(self.atoms.len());
        for (i, ab) in self.atoms.iter().enumerate() {
            if ab.aromatic && !ab.element.supports_aromatic() {
                deferred.push(ParseError::new(ParseErrorKind::UnknownElement, ab.position));
                continue;
            }
            if ab.aromatic && !on_ring[i] {
                deferred.push(ParseError::new(
                    ParseErrorKind::ValenceViolation,
                    ab.position,
                ));
                continue;
            }
            let hydrogens = match ab.explicit_h {
                Some(h) => h,
                None if ab.aromatic => {
                    if ab.element == Element::C {
                        (3 - bond_sum[i]).max(0) as u8
                    } else {
                        0
                    }
                }
                None => match implicit_fill(ab.element, bond_sum[i]) {
                    Some(h) => h,
                    None => {
                        deferred.push(ParseError::new(
                            ParseErrorKind::ValenceViolation,
                            ab.position,
                        ));
                        continue;
                    }
                },
            };
            let max_valence = ab
                .element
                .allowed_valences()
                .iter()
                .map(|v| v + ab.charge)
                .max()
                .unwrap_or(0);
            if bond_sum[i] + i32::from(hydrogens) > max_valence {
                deferred.push(ParseError::new(
                    ParseErrorKind::ValenceViolation,
                    ab.position,
                ));
                continue;
            }
            atoms.push(Atom {
                element: ab.element,
                charge: ab.charge,
                aromatic: ab.aromatic,
                hydrogens,
            });
        }

        if let Some(err) = deferred.into_iter().min_by_key(|e| e.position) {
            return Err(err);
        }
        Ok(MolGraph {
            atoms,
            bonds: self.bonds,
            ring_bond,
        })
    }
}

/// Hydrogens needed to reach the smallest allowed valence covering the bond
/// sum, or `None` if no allowed valence is large enough.
fn implicit_fill(element: Element, bond_sum: i32) -> Option<u8> {
    element
        .allowed_valences()
        .iter()
        .filter(|&&v| v >= bond_sum)
        .min()
        .map(|v| (v - bond_sum) as u8)
}
