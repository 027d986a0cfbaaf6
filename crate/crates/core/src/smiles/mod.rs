//! A practical SMILES subset parsed into heavy-atom molecular graphs.
//!
//! Supported: the organic subset (`B C N O P S F Cl Br I` and aromatic
//! `b c n o p s`), bracket atoms with isotope, charge and hydrogen count,
//! explicit bonds `- = # :`, ring closures (`1`..`9`, `%nn`) and branches.
//! Implicit hydrogens are never materialized as atoms. Aromaticity is read
//! from the notation only: a bond between two lowercase atoms, or written
//! `:`, is aromatic. Stereo marks (`/ \ @`) are skipped with a warning;
//! isotopes are parsed and discarded. Multi-fragment input (`.`) and
//! wildcards are rejected.

mod elements;

use std::collections::HashMap;

use serde::Serialize;

use crate::autodiff::Tensor;

pub use elements::{atomic_number, symbol as element_symbol};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SmilesError {
    #[error("empty SMILES string")]
    Empty,
    #[error("non-ASCII byte at offset {offset}")]
    NonAscii { offset: usize },
    #[error("unexpected character {found:?} at offset {offset}")]
    Lexical { offset: usize, found: char },
    #[error("invalid bracket atom at offset {offset}: {detail}")]
    BracketAtom { offset: usize, detail: String },
    #[error("unbalanced parenthesis at offset {offset}")]
    UnbalancedParenthesis { offset: usize },
    #[error("ring closure {label} is never closed")]
    UnmatchedRingClosure { label: u16 },
    #[error("bond symbol at offset {offset} has no atom to attach to")]
    DanglingBond { offset: usize },
    #[error("ring closure at offset {offset} has no preceding atom")]
    RingClosureWithoutAtom { offset: usize },
    #[error("conflicting bond symbols for ring closure {label}")]
    RingBondConflict { label: u16 },
    #[error("duplicate or self bond at offset {offset}")]
    DuplicateBond { offset: usize },
    #[error("unsupported SMILES feature at offset {offset}: {feature}")]
    Unsupported { offset: usize, feature: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum BondType {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondType {
    pub const ALL: [BondType; 4] = [
        BondType::Single,
        BondType::Double,
        BondType::Triple,
        BondType::Aromatic,
    ];

    /// Channel index in [`BondChannelAdjacency`].
    pub fn channel(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Atom {
    pub atomic_number: u8,
    pub aromatic: bool,
    pub formal_charge: i8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Bond {
    pub i: usize,
    pub j: usize,
    pub bond_type: BondType,
}

/// Heavy-atom graph of one molecule; bonds are undirected.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct MolecularGraph {
    pub atoms: Vec<Atom>,
    pub bonds: Vec<Bond>,
}

impl MolecularGraph {
    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn bond_count(&self) -> usize {
        self.bonds.len()
    }

    pub fn count_bonds(&self, kind: BondType) -> usize {
        self.bonds.iter().filter(|b| b.bond_type == kind).count()
    }

    pub fn degree(&self, atom: usize) -> usize {
        self.bonds
            .iter()
            .filter(|b| b.i == atom || b.j == atom)
            .count()
    }

    /// Same molecule with atoms relabeled so old atom `k` becomes `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> MolecularGraph {
        let mut atoms = self.atoms.clone();
        for (old, &new) in perm.iter().enumerate() {
            atoms[new] = self.atoms[old];
        }
        let bonds = self
            .bonds
            .iter()
            .map(|b| Bond {
                i: perm[b.i],
                j: perm[b.j],
                bond_type: b.bond_type,
            })
            .collect();
        MolecularGraph { atoms, bonds }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BondSymbol {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondSymbol {
    fn bond_type(self) -> BondType {
        match self {
            BondSymbol::Single => BondType::Single,
            BondSymbol::Double => BondType::Double,
            BondSymbol::Triple => BondType::Triple,
            BondSymbol::Aromatic => BondType::Aromatic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenKind {
    Atom {
        atomic_number: u8,
        aromatic: bool,
        charge: i8,
        /// written inside `[...]`
        bracket: bool,
    },
    Bond(BondSymbol),
    RingClosure(u16),
    Open,
    Close,
    Dot,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    /// Byte offset of the token's first character.
    pub offset: usize,
}

fn organic(z: u8, aromatic: bool) -> TokenKind {
    TokenKind::Atom {
        atomic_number: z,
        aromatic,
        charge: 0,
        bracket: false,
    }
}

/// Splits a SMILES string into tokens.
pub fn tokenize(smiles: &str) -> Result<Vec<Token>, SmilesError> {
    if smiles.is_empty() {
        return Err(SmilesError::Empty);
    }
    if let Some(offset) = smiles.bytes().position(|b| !b.is_ascii()) {
        return Err(SmilesError::NonAscii { offset });
    }
    let bytes = smiles.as_bytes();
    let mut tokens = Vec::new();
    let mut pos = 0;
    while pos < bytes.len() {
        let offset = pos;
        let c = bytes[pos] as char;
        let next = bytes.get(pos + 1).map(|&b| b as char);
        let (kind, width) = match c {
            'C' if next == Some('l') => (organic(17, false), 2),
            'B' if next == Some('r') => (organic(35, false), 2),
            'B' => (organic(5, false), 1),
            'C' => (organic(6, false), 1),
            'N' => (organic(7, false), 1),
            'O' => (organic(8, false), 1),
            'P' => (organic(15, false), 1),
            'S' => (organic(16, false), 1),
            'F' => (organic(9, false), 1),
            'I' => (organic(53, false), 1),
            'b' => (organic(5, true), 1),
            'c' => (organic(6, true), 1),
            'n' => (organic(7, true), 1),
            'o' => (organic(8, true), 1),
            'p' => (organic(15, true), 1),
            's' => (organic(16, true), 1),
            '-' => (TokenKind::Bond(BondSymbol::Single), 1),
            '=' => (TokenKind::Bond(BondSymbol::Double), 1),
            '#' => (TokenKind::Bond(BondSymbol::Triple), 1),
            ':' => (TokenKind::Bond(BondSymbol::Aromatic), 1),
            '(' => (TokenKind::Open, 1),
            ')' => (TokenKind::Close, 1),
            '.' => (TokenKind::Dot, 1),
            '0'..='9' => (TokenKind::RingClosure(c as u16 - '0' as u16), 1),
            '%' => {
                let digits = bytes.get(pos + 1..pos + 3).filter(|d| d.iter().all(u8::is_ascii_digit));
                match digits {
                    Some(d) => {
                        let label = (d[0] - b'0') as u16 * 10 + (d[1] - b'0') as u16;
                        (TokenKind::RingClosure(label), 3)
                    }
                    None => return Err(SmilesError::Lexical { offset, found: c }),
                }
            }
            '/' | '\\' => {
                log::warn!("skipping directional bond '{c}' at offset {offset}");
                pos += 1;
                continue;
            }
            '[' => {
                let close = smiles[pos..]
                    .find(']')
                    .ok_or(SmilesError::BracketAtom {
                        offset,
                        detail: "missing ']'".into(),
                    })?;
                let kind = bracket_atom(&smiles[pos + 1..pos + close], offset)?;
                (kind, close + 1)
            }
            '*' => {
                return Err(SmilesError::Unsupported {
                    offset,
                    feature: "wildcard atom",
                })
            }
            '$' => {
                return Err(SmilesError::Unsupported {
                    offset,
                    feature: "quadruple bond",
                })
            }
            _ => return Err(SmilesError::Lexical { offset, found: c }),
        };
        tokens.push(Token { kind, offset });
        pos += width;
    }
    Ok(tokens)
}

/// Parses the inside of `[...]`: isotope? symbol chirality? hcount? charge? class?
fn bracket_atom(body: &str, offset: usize) -> Result<TokenKind, SmilesError> {
    let bad = |detail: &str| SmilesError::BracketAtom {
        offset,
        detail: detail.to_string(),
    };
    let b = body.as_bytes();
    let mut p = 0;
    while p < b.len() && b[p].is_ascii_digit() {
        p += 1;
    }
    if p > 0 {
        log::debug!("discarding isotope {} at offset {offset}", &body[..p]);
    }
    let (atomic_number, aromatic) = match b.get(p) {
        Some(&u) if u.is_ascii_uppercase() => {
            let two = b
                .get(p + 1)
                .filter(|l| l.is_ascii_lowercase())
                .and_then(|_| atomic_number(&body[p..p + 2]));
            match two {
                Some(z) => {
                    p += 2;
                    (z, false)
                }
                None => {
                    let z = atomic_number(&body[p..p + 1]).ok_or_else(|| bad("unknown element"))?;
                    p += 1;
                    (z, false)
                }
            }
        }
        Some(&l) if l.is_ascii_lowercase() => {
            let candidates: &[(&str, u8)] = &[
                ("se", 34),
                ("as", 33),
                ("te", 52),
                ("b", 5),
                ("c", 6),
                ("n", 7),
                ("o", 8),
                ("p", 15),
                ("s", 16),
            ];
            let (sym, z) = candidates
                .iter()
                .find(|(s, _)| body[p..].starts_with(s))
                .ok_or_else(|| bad("unknown aromatic element"))?;
            p += sym.len();
            (*z, true)
        }
        Some(b'*') => {
            return Err(SmilesError::Unsupported {
                offset,
                feature: "wildcard atom",
            })
        }
        _ => return Err(bad("missing element symbol")),
    };
    if b.get(p) == Some(&b'@') {
        log::warn!("skipping chirality mark at offset {offset}");
        while b.get(p) == Some(&b'@') {
            p += 1;
        }
        // extended forms such as @TH1 / @SP2 / @OH15
        while p < b.len() && (b[p].is_ascii_uppercase() && b[p] != b'H' || b[p].is_ascii_digit()) {
            p += 1;
        }
    }
    if b.get(p) == Some(&b'H') {
        p += 1;
        while p < b.len() && b[p].is_ascii_digit() {
            p += 1;
        }
    }
    let mut charge: i32 = 0;
    if let Some(&sign) = b.get(p).filter(|&&c| c == b'+' || c == b'-') {
        let unit = if sign == b'+' { 1 } else { -1 };
        p += 1;
        let start = p;
        while p < b.len() && b[p].is_ascii_digit() {
            p += 1;
        }
        if p > start {
            let mag: i32 = body[start..p].parse().map_err(|_| bad("bad charge"))?;
            charge = unit * mag;
        } else {
            charge = unit;
            while b.get(p) == Some(&sign) {
                charge += unit;
                p += 1;
            }
        }
    }
    if b.get(p) == Some(&b':') {
        p += 1;
        let start = p;
        while p < b.len() && b[p].is_ascii_digit() {
            p += 1;
        }
        if p == start {
            return Err(bad("atom class needs digits"));
        }
    }
    if p != b.len() {
        return Err(bad("trailing characters"));
    }
    let charge = i8::try_from(charge).map_err(|_| bad("charge out of range"))?;
    Ok(TokenKind::Atom {
        atomic_number,
        aromatic,
        charge,
        bracket: true,
    })
}

/// Builds the molecular graph depth-first from a token stream.
pub fn parse(tokens: &[Token]) -> Result<MolecularGraph, SmilesError> {
    let mut g = MolecularGraph::default();
    let mut prev: Option<usize> = None;
    let mut pending: Option<(BondSymbol, usize)> = None;
    let mut branches: Vec<(usize, usize)> = Vec::new();
    let mut rings: HashMap<u16, (usize, Option<BondSymbol>)> = HashMap::new();

    for tok in tokens {
        match tok.kind {
            TokenKind::Atom {
                atomic_number,
                aromatic,
                charge,
                ..
            } => {
                let idx = g.atoms.len();
                g.atoms.push(Atom {
                    atomic_number,
                    aromatic,
                    formal_charge: charge,
                });
                if let Some(p) = prev {
                    let sym = pending.take().map(|(s, _)| s);
                    add_bond(&mut g, p, idx, sym, tok.offset)?;
                } else if let Some((_, off)) = pending {
                    return Err(SmilesError::DanglingBond { offset: off });
                }
                prev = Some(idx);
            }
            TokenKind::Bond(sym) => {
                if prev.is_none() || pending.is_some() {
                    return Err(SmilesError::DanglingBond { offset: tok.offset });
                }
                pending = Some((sym, tok.offset));
            }
            TokenKind::RingClosure(label) => {
                let Some(here) = prev else {
                    return Err(SmilesError::RingClosureWithoutAtom { offset: tok.offset });
                };
                let sym = pending.take().map(|(s, _)| s);
                match rings.remove(&label) {
                    Some((other, open_sym)) => {
                        let sym = match (open_sym, sym) {
                            (Some(a), Some(b)) if a != b => {
                                return Err(SmilesError::RingBondConflict { label })
                            }
                            (a, b) => a.or(b),
                        };
                        add_bond(&mut g, other, here, sym, tok.offset)?;
                    }
                    None => {
                        rings.insert(label, (here, sym));
                    }
                }
            }
            TokenKind::Open => {
                match (prev, pending) {
                    (Some(p), None) => branches.push((p, tok.offset)),
                    (None, _) => return Err(SmilesError::UnbalancedParenthesis { offset: tok.offset }),
                    (_, Some((_, off))) => return Err(SmilesError::DanglingBond { offset: off }),
                }
            }
            TokenKind::Close => {
                if let Some((_, off)) = pending {
                    return Err(SmilesError::DanglingBond { offset: off });
                }
                let (p, _) = branches
                    .pop()
                    .ok_or(SmilesError::UnbalancedParenthesis { offset: tok.offset })?;
                prev = Some(p);
            }
            TokenKind::Dot => {
                return Err(SmilesError::Unsupported {
                    offset: tok.offset,
                    feature: "multi-fragment input",
                })
            }
        }
    }
    if let Some((_, off)) = branches.last() {
        return Err(SmilesError::UnbalancedParenthesis { offset: *off });
    }
    if let Some((_, off)) = pending {
        return Err(SmilesError::DanglingBond { offset: off });
    }
    if let Some(&label) = rings.keys().min() {
        return Err(SmilesError::UnmatchedRingClosure { label });
    }
    if g.atoms.is_empty() {
        return Err(SmilesError::Empty);
    }
    Ok(g)
}

fn add_bond(
    g: &mut MolecularGraph,
    i: usize,
    j: usize,
    sym: Option<BondSymbol>,
    offset: usize,
) -> Result<(), SmilesError> {
    let duplicate = g
        .bonds
        .iter()
        .any(|b| (b.i == i && b.j == j) || (b.i == j && b.j == i));
    if i == j || duplicate {
        return Err(SmilesError::DuplicateBond { offset });
    }
    let bond_type = match sym {
        Some(s) => s.bond_type(),
        None if g.atoms[i].aromatic && g.atoms[j].aromatic => BondType::Aromatic,
        None => BondType::Single,
    };
    g.bonds.push(Bond { i, j, bond_type });
    Ok(())
}

/// `parse(tokenize(smiles))`.
pub fn parse_smiles(smiles: &str) -> Result<MolecularGraph, SmilesError> {
    parse(&tokenize(smiles)?)
}

/// One symmetric 0/1 adjacency matrix per bond type.
#[derive(Debug, Clone, PartialEq)]
pub struct BondChannelAdjacency {
    channels: [Tensor; 4],
}

impl BondChannelAdjacency {
    pub fn atom_count(&self) -> usize {
        self.channels[0].rows()
    }

    pub fn channel(&self, kind: BondType) -> &Tensor {
        &self.channels[kind.channel()]
    }

    pub fn channels(&self) -> &[Tensor; 4] {
        &self.channels
    }
}

/// Splits a molecule's bonds into per-type adjacency channels.
pub fn to_channels(g: &MolecularGraph) -> BondChannelAdjacency {
    let n = g.atom_count();
    let mut channels: [Tensor; 4] = std::array::from_fn(|_| Tensor::zeros(vec![n, n]));
    for b in &g.bonds {
        let data = channels[b.bond_type.channel()].data_mut();
        data[b.i * n + b.j] = 1.0;
        data[b.j * n + b.i] = 1.0;
    }
    BondChannelAdjacency { channels }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn atom_tok(z: u8, aromatic: bool) -> TokenKind {
        organic(z, aromatic)
    }

    fn kinds(s: &str) -> Vec<TokenKind> {
        tokenize(s).unwrap().into_iter().map(|t| t.kind).collect()
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(
            kinds("CCO"),
            vec![atom_tok(6, false), atom_tok(6, false), atom_tok(8, false)]
        );
        assert_eq!(
            kinds("C(=O)O"),
            vec![
                atom_tok(6, false),
                TokenKind::Open,
                TokenKind::Bond(BondSymbol::Double),
                atom_tok(8, false),
                TokenKind::Close,
                atom_tok(8, false),
            ]
        );
        assert_eq!(
            kinds("C1%12"),
            vec![
                atom_tok(6, false),
                TokenKind::RingClosure(1),
                TokenKind::RingClosure(12)
            ]
        );
        assert_eq!(kinds("ClBr"), vec![atom_tok(17, false), atom_tok(35, false)]);
    }

    #[test]
    fn tokenize_reports_offsets() {
        assert_eq!(
            tokenize("CCX").unwrap_err(),
            SmilesError::Lexical {
                offset: 2,
                found: 'X'
            }
        );
        assert!(matches!(tokenize("C%1"), Err(SmilesError::Lexical { offset: 1, .. })));
        assert_eq!(tokenize("").unwrap_err(), SmilesError::Empty);
        assert!(matches!(tokenize("C*"), Err(SmilesError::Unsupported { offset: 1, .. })));
    }

    #[test]
    fn bracket_atoms() {
        let k = kinds("[13CH3+]");
        assert_eq!(
            k,
            vec![TokenKind::Atom {
                atomic_number: 6,
                aromatic: false,
                charge: 1,
                bracket: true
            }]
        );
        let k = kinds("[O-][N+](=O)[nH][Fe+2][Cl--][C@@H]");
        let charges: Vec<i8> = k
            .iter()
            .filter_map(|t| match t {
                TokenKind::Atom { charge, .. } => Some(*charge),
                _ => None,
            })
            .collect();
        assert_eq!(charges, vec![-1, 1, 0, 0, 2, -2, 0]);
        assert!(matches!(k[6], TokenKind::Atom { atomic_number: 7, aromatic: true, .. }));
        assert!(matches!(k[7], TokenKind::Atom { atomic_number: 26, .. }));
        assert!(tokenize("[Xq]").is_err());
        assert!(tokenize("[C").is_err());
        assert!(tokenize("[CH3+x]").is_err());
    }

    #[test]
    fn parse_ethanol() {
        let g = parse_smiles("CCO").unwrap();
        let z: Vec<u8> = g.atoms.iter().map(|a| a.atomic_number).collect();
        assert_eq!(z, vec![6, 6, 8]);
        assert_eq!(
            g.bonds,
            vec![
                Bond { i: 0, j: 1, bond_type: BondType::Single },
                Bond { i: 1, j: 2, bond_type: BondType::Single },
            ]
        );
    }

    #[test]
    fn parse_benzene_ring() {
        let g = parse_smiles("c1ccccc1").unwrap();
        assert_eq!(g.atom_count(), 6);
        assert!(g.atoms.iter().all(|a| a.aromatic && a.atomic_number == 6));
        assert_eq!(g.count_bonds(BondType::Aromatic), 6);
        assert!((0..6).all(|i| g.degree(i) == 2));
    }

    #[test]
    fn branches_and_ring_bond_symbols() {
        let g = parse_smiles("CC(C)(C)O").unwrap();
        assert_eq!(g.degree(1), 4);
        let g = parse_smiles("C=1CCC1").unwrap();
        assert_eq!(g.count_bonds(BondType::Double), 1);
        let g = parse_smiles("C1CCC=1").unwrap();
        assert_eq!(g.count_bonds(BondType::Double), 1);
        assert_eq!(
            parse_smiles("C=1CCC#1").unwrap_err(),
            SmilesError::RingBondConflict { label: 1 }
        );
        // aromatic atom next to aliphatic is single; explicit '-' between aromatics is single
        let g = parse_smiles("c1ccccc1-c1ccccc1").unwrap();
        assert_eq!(g.count_bonds(BondType::Single), 1);
        assert_eq!(g.count_bonds(BondType::Aromatic), 12);
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(parse_smiles("C("), Err(SmilesError::UnbalancedParenthesis { .. })));
        assert!(matches!(parse_smiles("C)C"), Err(SmilesError::UnbalancedParenthesis { .. })));
        assert_eq!(
            parse_smiles("C1").unwrap_err(),
            SmilesError::UnmatchedRingClosure { label: 1 }
        );
        assert!(matches!(parse_smiles("CC="), Err(SmilesError::DanglingBond { .. })));
        assert!(matches!(parse_smiles("=C"), Err(SmilesError::DanglingBond { .. })));
        assert!(matches!(parse_smiles("C(=)C"), Err(SmilesError::DanglingBond { .. })));
        assert!(matches!(
            parse_smiles("CC.O"),
            Err(SmilesError::Unsupported { feature: "multi-fragment input", .. })
        ));
        assert!(matches!(parse_smiles("C11"), Err(SmilesError::DuplicateBond { .. })));
        assert!(matches!(parse_smiles("C12CC12"), Err(SmilesError::DuplicateBond { .. })));
    }

    #[test]
    fn stereo_marks_are_skipped() {
        let g = parse_smiles("F/C=C/F").unwrap();
        assert_eq!(g.atom_count(), 4);
        assert_eq!(g.count_bonds(BondType::Double), 1);
        assert_eq!(g.count_bonds(BondType::Single), 2);
        let g = parse_smiles("N[C@@H](C)C(=O)O").unwrap();
        assert_eq!(g.atom_count(), 6);
    }

    #[test]
    fn channel_examples() {
        let ch = to_channels(&parse_smiles("CC").unwrap());
        assert_eq!(ch.channel(BondType::Single).data(), &[0.0, 1.0, 1.0, 0.0]);
        for kind in [BondType::Double, BondType::Triple, BondType::Aromatic] {
            assert_eq!(ch.channel(kind).sum(), 0.0);
        }

        let ch = to_channels(&parse_smiles("O=C=O").unwrap());
        let d = ch.channel(BondType::Double);
        assert_eq!(d.at(0, 1), 1.0);
        assert_eq!(d.at(1, 2), 1.0);
        assert_eq!(d.at(0, 2), 0.0);

        let ch = to_channels(&parse_smiles("c1ccccc1").unwrap());
        let a = ch.channel(BondType::Aromatic);
        for i in 0..6 {
            assert_eq!(a.row(i).iter().sum::<f64>(), 2.0);
        }
    }

    fn check_channels(g: &MolecularGraph) {
        let ch = to_channels(g);
        let n = g.atom_count();
        for i in 0..n {
            let mut deg = 0.0;
            for c in ch.channels() {
                assert_eq!(c.at(i, i), 0.0);
                for j in 0..n {
                    assert_eq!(c.at(i, j), c.at(j, i));
                }
                deg += c.row(i).iter().sum::<f64>();
            }
            assert_eq!(deg as usize, g.degree(i));
            for j in 0..n {
                let on: f64 = ch.channels().iter().map(|c| c.at(i, j)).sum();
                assert!(on <= 1.0);
            }
        }
    }

    fn connected(g: &MolecularGraph) -> bool {
        let n = g.atom_count();
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for b in &g.bonds {
                let v = if b.i == u {
                    b.j
                } else if b.j == u {
                    b.i
                } else {
                    continue;
                };
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    proptest! {
        #[test]
        fn random_ascii_never_panics(s in "[ -~]{0,40}") {
            let _ = parse_smiles(&s);
        }

        #[test]
        fn smiles_alphabet_fuzz_keeps_invariants(s in "[CNOcnos()=#:1-3%\\[\\]H+\\-]{1,30}") {
            if let Ok(g) = parse_smiles(&s) {
                check_channels(&g);
                prop_assert!(connected(&g));
                for b in &g.bonds {
                    prop_assert!(b.i != b.j && b.i < g.atom_count() && b.j < g.atom_count());
                    if b.bond_type == BondType::Aromatic {
                        prop_assert!(g.atoms[b.i].aromatic || g.atoms[b.j].aromatic || s.contains(':'));
                    }
                }
            }
        }
    }
}
