//! Restricted SMILES reader/writer and node featurization.
//!
//! Supported: organic-subset atoms, bracket atoms with charge, bond symbols
//! `- = # :`, branches, ring closures (`1`-`9`, `%nn`), lowercase aromatic
//! atoms and `.` separators. Stereo marks (`/ \ @`), isotopes, hydrogen
//! counts and atom classes are accepted inside the grammar but discarded.
//! Hydrogens never become nodes.

use std::collections::{BTreeMap, HashMap};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{AttributedGraph, Element, ElementLabel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    pub fn code(self) -> u8 {
        match self {
            BondOrder::Single => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
            BondOrder::Aromatic => 4,
        }
    }
}

/// An undirected bond, stored with `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Bond {
    pub i: usize,
    pub j: usize,
    pub order: BondOrder,
}

impl Bond {
    pub fn new(a: usize, b: usize, order: BondOrder) -> Self {
        Bond {
            i: a.min(b),
            j: a.max(b),
            order,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Molecule {
    pub graph: AttributedGraph,
    pub bonds: Vec<Bond>,
    pub source: String,
}

impl Molecule {
    /// Builds a molecule from atoms and bonds, featurized with the default scheme.
    pub fn from_parts(atoms: Vec<ElementLabel>, bonds: Vec<Bond>, source: String) -> Result<Self> {
        let n = atoms.len();
        let mut adjacency = Array2::<u8>::zeros((n, n));
        for b in &bonds {
            if b.i == b.j || b.j >= n {
                return Err(Error::Structure(format!("invalid bond {}-{}", b.i, b.j)));
            }
            if adjacency[[b.i, b.j]] != 0 {
                return Err(Error::Structure(format!("duplicate bond {}-{}", b.i, b.j)));
            }
            adjacency[[b.i, b.j]] = 1;
            adjacency[[b.j, b.i]] = 1;
        }
        let mut bonds = bonds;
        bonds.sort_unstable();
        let scheme = FeaturizationScheme::default();
        let features = scheme.features(&atoms, &adjacency);
        let graph = AttributedGraph::new(features, adjacency, atoms)?;
        Ok(Molecule {
            graph,
            bonds,
            source,
        })
    }

    pub fn n_atoms(&self) -> usize {
        self.graph.n_nodes()
    }

    pub fn atoms(&self) -> &[ElementLabel] {
        self.graph.node_elements()
    }

    pub fn bond_order(&self, a: usize, b: usize) -> Option<BondOrder> {
        let key = (a.min(b), a.max(b));
        self.bonds
            .binary_search_by(|bond| (bond.i, bond.j).cmp(&key))
            .ok()
            .map(|idx| self.bonds[idx].order)
    }
}

/// Layout of a node feature row: element one-hot, degree one-hot (0..=5),
/// formal charge one-hot (-2..=+2), aromatic flag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeaturizationScheme {
    pub element_vocab: Vec<Element>,
}

impl Default for FeaturizationScheme {
    fn default() -> Self {
        FeaturizationScheme {
            element_vocab: Element::ALL.to_vec(),
        }
    }
}

impl FeaturizationScheme {
    pub const MAX_DEGREE: usize = 5;
    pub const MIN_CHARGE: i8 = -2;
    pub const MAX_CHARGE: i8 = 2;

    pub fn new(element_vocab: Vec<Element>) -> Result<Self> {
        if !element_vocab.contains(&Element::Other) {
            return Err(Error::Config("element vocabulary must contain `Other`".into()));
        }
        let mut sorted = element_vocab.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != element_vocab.len() {
            return Err(Error::Config("duplicate element in vocabulary".into()));
        }
        Ok(FeaturizationScheme { element_vocab })
    }

    pub fn feature_dim(&self) -> usize {
        self.element_vocab.len() + (Self::MAX_DEGREE + 1) + 5 + 1
    }

    fn element_slot(&self, e: Element) -> usize {
        self.element_vocab
            .iter()
            .position(|&v| v == e)
            .or_else(|| self.element_vocab.iter().position(|&v| v == Element::Other))
            .expect("vocabulary contains Other")
    }

    fn features(&self, atoms: &[ElementLabel], adjacency: &Array2<u8>) -> Array2<f64> {
        let n = atoms.len();
        let n_elem = self.element_vocab.len();
        let degree_base = n_elem;
        let charge_base = degree_base + Self::MAX_DEGREE + 1;
        let aromatic_slot = charge_base + 5;
        let mut x = Array2::zeros((n, self.feature_dim()));
        for (row, atom) in atoms.iter().enumerate() {
            let degree = adjacency.row(row).iter().filter(|&&a| a != 0).count();
            let charge = atom.formal_charge.clamp(Self::MIN_CHARGE, Self::MAX_CHARGE);
            x[[row, self.element_slot(atom.symbol)]] = 1.0;
            x[[row, degree_base + degree.min(Self::MAX_DEGREE)]] = 1.0;
            x[[row, charge_base + (charge - Self::MIN_CHARGE) as usize]] = 1.0;
            if atom.aromatic {
                x[[row, aromatic_slot]] = 1.0;
            }
        }
        x
    }
}

/// Builds the node feature matrix of `m` under `scheme`.
pub fn featurize(m: &Molecule, scheme: &FeaturizationScheme) -> AttributedGraph {
    let x = scheme.features(m.atoms(), m.graph.adjacency());
    m.graph
        .with_features(x)
        .expect("feature rows match node count")
}

struct RingOpen {
    atom: usize,
    order: Option<BondOrder>,
    offset: usize,
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
    atoms: Vec<ElementLabel>,
    bonds: BTreeMap<(usize, usize), BondOrder>,
    prev: Option<usize>,
    branches: Vec<(Option<usize>, usize)>,
    pending: Option<(BondOrder, usize)>,
    rings: HashMap<u32, RingOpen>,
}

fn parse_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        offset,
        message: message.into(),
    }
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn peek_at(&self, k: usize) -> Option<u8> {
        self.bytes.get(self.pos + k).copied()
    }

    fn default_order(&self, a: usize, b: usize) -> BondOrder {
        if self.atoms[a].aromatic && self.atoms[b].aromatic {
            BondOrder::Aromatic
        } else {
            BondOrder::Single
        }
    }

    fn add_bond(&mut self, a: usize, b: usize, order: BondOrder, offset: usize) -> Result<()> {
        if a == b {
            return Err(parse_err(offset, "ring closure onto the same atom"));
        }
        let key = (a.min(b), a.max(b));
        if self.bonds.insert(key, order).is_some() {
            return Err(parse_err(offset, format!("duplicate bond between atoms {a} and {b}")));
        }
        Ok(())
    }

    fn push_atom(&mut self, label: ElementLabel, offset: usize) -> Result<()> {
        let idx = self.atoms.len();
        self.atoms.push(label);
        if let Some(prev) = self.prev {
            let order = match self.pending.take() {
                Some((o, _)) => o,
                None => self.default_order(prev, idx),
            };
            self.add_bond(prev, idx, order, offset)?;
        } else if let Some((_, off)) = self.pending {
            return Err(parse_err(off, "bond symbol without a preceding atom"));
        }
        self.prev = Some(idx);
        Ok(())
    }

    fn ring_closure(&mut self, number: u32, offset: usize) -> Result<()> {
        let atom = self
            .prev
            .ok_or_else(|| parse_err(offset, "ring closure before any atom"))?;
        let order = self.pending.take().map(|(o, _)| o);
        match self.rings.remove(&number) {
            Some(open) => {
                let order = match (open.order, order) {
                    (Some(a), Some(b)) if a != b => {
                        return Err(parse_err(offset, format!("conflicting bond orders on ring {number}")));
                    }
                    (Some(a), _) | (None, Some(a)) => a,
                    (None, None) => self.default_order(open.atom, atom),
                };
                self.add_bond(open.atom, atom, order, offset)
            }
            None => {
                self.rings.insert(number, RingOpen { atom, order, offset });
                Ok(())
            }
        }
    }

    fn organic_atom(&mut self) -> Result<Option<ElementLabel>> {
        let c = match self.peek() {
            Some(c) => c,
            None => return Ok(None),
        };
        let two = |p: &Self, second: u8| p.peek_at(1) == Some(second);
        let (symbol, aromatic, len) = match c {
            b'B' if two(self, b'r') => (Element::Br, false, 2),
            b'C' if two(self, b'l') => (Element::Cl, false, 2),
            b'B' => (Element::B, false, 1),
            b'C' => (Element::C, false, 1),
            b'N' => (Element::N, false, 1),
            b'O' => (Element::O, false, 1),
            b'P' => (Element::P, false, 1),
            b'S' => (Element::S, false, 1),
            b'F' => (Element::F, false, 1),
            b'I' => (Element::I, false, 1),
            b'b' => (Element::B, true, 1),
            b'c' => (Element::C, true, 1),
            b'n' => (Element::N, true, 1),
            b'o' => (Element::O, true, 1),
            b'p' => (Element::P, true, 1),
            b's' => (Element::S, true, 1),
            _ => return Ok(None),
        };
        self.pos += len;
        Ok(Some(ElementLabel {
            symbol,
            formal_charge: 0,
            aromatic,
        }))
    }

    fn bracket_atom(&mut self) -> Result<ElementLabel> {
        let open = self.pos;
        self.pos += 1;
        while matches!(self.peek(), Some(b'0'..=b'9')) {
            self.pos += 1;
        }
        let sym_start = self.pos;
        let (symbol, aromatic) = match self.peek() {
            Some(c) if c.is_ascii_uppercase() => {
                self.pos += 1;
                if matches!(self.peek(), Some(l) if l.is_ascii_lowercase()) {
                    self.pos += 1;
                }
                let text = std::str::from_utf8(&self.bytes[sym_start..self.pos]).unwrap_or("");
                (Element::from_symbol(text), false)
            }
            Some(c) if c.is_ascii_lowercase() => {
                let rest = &self.bytes[self.pos..];
                let len = if rest.starts_with(b"se") || rest.starts_with(b"as") || rest.starts_with(b"te") {
                    2
                } else if matches!(c, b'b' | b'c' | b'n' | b'o' | b'p' | b's') {
                    1
                } else {
                    return Err(parse_err(self.pos, format!("unknown aromatic atom '{}'", c as char)));
                };
                let text = std::str::from_utf8(&rest[..len]).unwrap_or("");
                let mut cap = text.to_string();
                cap[..1].make_ascii_uppercase();
                self.pos += len;
                (Element::from_symbol(&cap), true)
            }
            Some(b'*') => return Err(parse_err(self.pos, "wildcard atoms are not supported")),
            _ => return Err(parse_err(self.pos, "expected element symbol in bracket atom")),
        };

        while self.peek() == Some(b'@') {
            self.pos += 1;
        }
        if matches!(self.peek(), Some(b'T' | b'A' | b'S' | b'O')) {
            // extended chirality classes such as @TH1 / @SP2
            while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() && c != b'H') {
                self.pos += 1;
            }
        }
        if self.peek() == Some(b'H') {
            self.pos += 1;
            while matches!(self.peek(), Some(b'0'..=b'9')) {
                self.pos += 1;
            }
        }
        let mut charge: i32 = 0;
        if let Some(sign @ (b'+' | b'-')) = self.peek() {
            let unit = if sign == b'+' { 1 } else { -1 };
            self.pos += 1;
            let digits_start = self.pos;
            while matches!(self.peek(), Some(b'0'..=b'9')) {
                self.pos += 1;
            }
            if self.pos > digits_start {
                let text = std::str::from_utf8(&self.bytes[digits_start..self.pos]).unwrap_or("0");
                charge = unit * text.parse::<i32>().map_err(|_| parse_err(digits_start, "bad charge"))?;
            } else {
                charge = unit;
                while self.peek() == Some(sign) {
                    self.pos += 1;
                    charge += unit;
                }
            }
        }
        if self.peek() == Some(b':') {
            self.pos += 1;
            while matches!(self.peek(), Some(b'0'..=b'9')) {
                self.pos += 1;
            }
        }
        if self.peek() != Some(b']') {
            return Err(parse_err(
                if self.pos < self.bytes.len() { self.pos } else { open },
                "unterminated or malformed bracket atom",
            ));
        }
        self.pos += 1;
        Ok(ElementLabel {
            symbol,
            formal_charge: charge.clamp(i8::MIN as i32, i8::MAX as i32) as i8,
            aromatic,
        })
    }

    fn run(mut self, source: &str) -> Result<Molecule> {
        while let Some(c) = self.peek() {
            let offset = self.pos;
            match c {
                b'(' => {
                    if self.prev.is_none() {
                        return Err(parse_err(offset, "branch before any atom"));
                    }
                    if self.pending.is_some() {
                        return Err(parse_err(offset, "bond symbol before branch"));
                    }
                    self.branches.push((self.prev, offset));
                    self.pos += 1;
                }
                b')' => {
                    if self.pending.is_some() {
                        return Err(parse_err(offset, "dangling bond symbol"));
                    }
                    let (prev, _) = self
                        .branches
                        .pop()
                        .ok_or_else(|| parse_err(offset, "unbalanced ')'"))?;
                    self.prev = prev;
                    self.pos += 1;
                }
                b'-' | b'=' | b'#' | b':' | b'/' | b'\\' => {
                    if self.pending.is_some() {
                        return Err(parse_err(offset, "consecutive bond symbols"));
                    }
                    let order = match c {
                        b'=' => BondOrder::Double,
                        b'#' => BondOrder::Triple,
                        b':' => BondOrder::Aromatic,
                        _ => BondOrder::Single,
                    };
                    self.pending = Some((order, offset));
                    self.pos += 1;
                }
                b'.' => {
                    if self.pending.is_some() {
                        return Err(parse_err(offset, "bond symbol before '.'"));
                    }
                    self.prev = None;
                    self.pos += 1;
                }
                b'0'..=b'9' => {
                    self.pos += 1;
                    self.ring_closure((c - b'0') as u32, offset)?;
                }
                b'%' => {
                    let d1 = self.peek_at(1);
                    let d2 = self.peek_at(2);
                    match (d1, d2) {
                        (Some(a @ b'0'..=b'9'), Some(b @ b'0'..=b'9')) => {
                            self.pos += 3;
                            let number = 10 * (a - b'0') as u32 + (b - b'0') as u32;
                            self.ring_closure(number, offset)?;
                        }
                        _ => return Err(parse_err(offset, "'%' must be followed by two digits")),
                    }
                }
                b'[' => {
                    let label = self.bracket_atom()?;
                    self.push_atom(label, offset)?;
                }
                _ => match self.organic_atom()? {
                    Some(label) => self.push_atom(label, offset)?,
                    None => {
                        return Err(parse_err(offset, format!("unknown atom token '{}'", c as char)));
                    }
                },
            }
        }
        if let Some(&(_, offset)) = self.branches.last() {
            return Err(parse_err(offset, "unbalanced '('"));
        }
        if let Some(open) = self.rings.values().min_by_key(|o| o.offset) {
            return Err(parse_err(open.offset, "unmatched ring-closure digit"));
        }
        if let Some((_, offset)) = self.pending {
            return Err(parse_err(offset, "dangling bond symbol"));
        }
        if self.atoms.is_empty() {
            return Err(parse_err(0, "no atoms"));
        }
        let bonds = self
            .bonds
            .into_iter()
            .map(|((i, j), order)| Bond { i, j, order })
            .collect();
        Molecule::from_parts(self.atoms, bonds, source.to_string())
    }
}

/// Parses a SMILES string into a molecular graph.
pub fn parse_smiles(s: &str) -> Result<Molecule> {
    if s.is_empty() {
        return Err(parse_err(0, "empty input"));
    }
    if let Some(pos) = s.bytes().position(|b| !b.is_ascii() || b.is_ascii_whitespace()) {
        return Err(parse_err(pos, "non-ASCII or whitespace byte"));
    }
    Parser {
        bytes: s.as_bytes(),
        pos: 0,
        atoms: Vec::new(),
        bonds: BTreeMap::new(),
        prev: None,
        branches: Vec::new(),
        pending: None,
        rings: HashMap::new(),
    }
    .run(s)
}

fn atom_text(label: &ElementLabel) -> String {
    let organic = matches!(
        label.symbol,
        Element::B | Element::C | Element::N | Element::O | Element::P | Element::S
    ) || (!label.aromatic
        && matches!(label.symbol, Element::F | Element::Cl | Element::Br | Element::I));
    let symbol = if label.aromatic {
        label.symbol.symbol().to_ascii_lowercase()
    } else {
        label.symbol.symbol().to_string()
    };
    if organic && label.formal_charge == 0 {
        return symbol;
    }
    let charge = match label.formal_charge {
        0 => String::new(),
        1 => "+".into(),
        -1 => "-".into(),
        q if q > 0 => format!("+{q}"),
        q => format!("-{}", -q),
    };
    format!("[{symbol}{charge}]")
}

fn bond_text(order: BondOrder, a: &ElementLabel, b: &ElementLabel) -> &'static str {
    let both_aromatic = a.aromatic && b.aromatic;
    match order {
        BondOrder::Single if both_aromatic => "-",
        BondOrder::Single => "",
        BondOrder::Double => "=",
        BondOrder::Triple => "#",
        BondOrder::Aromatic if both_aromatic => "",
        BondOrder::Aromatic => ":",
    }
}

/// Writes a (non-canonical) SMILES string for the given atoms and bonds,
/// traversing depth-first from the lowest-index atom of each component.
pub fn write_smiles(atoms: &[ElementLabel], bonds: &[Bond]) -> String {
    let n = atoms.len();
    let mut adj: Vec<Vec<(usize, BondOrder)>> = vec![Vec::new(); n];
    for b in bonds {
        adj[b.i].push((b.j, b.order));
        adj[b.j].push((b.i, b.order));
    }
    for list in &mut adj {
        list.sort_unstable();
    }

    // First pass: DFS order, tree children and ring-closure edges.
    let mut order_index = vec![usize::MAX; n];
    let mut children: Vec<Vec<(usize, BondOrder)>> = vec![Vec::new(); n];
    let mut closures: Vec<Vec<(usize, BondOrder)>> = vec![Vec::new(); n];
    let mut roots = Vec::new();
    let mut counter = 0;
    for root in 0..n {
        if order_index[root] != usize::MAX {
            continue;
        }
        roots.push(root);
        let mut stack = vec![(root, usize::MAX)];
        while let Some((v, parent)) = stack.pop() {
            if order_index[v] != usize::MAX {
                continue;
            }
            order_index[v] = counter;
            counter += 1;
            if parent != usize::MAX {
                let order = adj[v].iter().find(|(u, _)| *u == parent).unwrap().1;
                children[parent].push((v, order));
            }
            for &(u, _) in adj[v].iter().rev() {
                if order_index[u] == usize::MAX {
                    stack.push((u, v));
                }
            }
        }
    }
    for b in bonds {
        let is_tree = children[b.i].iter().any(|(c, _)| *c == b.j)
            || children[b.j].iter().any(|(c, _)| *c == b.i);
        if !is_tree {
            let (first, second) = if order_index[b.i] < order_index[b.j] {
                (b.i, b.j)
            } else {
                (b.j, b.i)
            };
            closures[first].push((second, b.order));
            closures[second].push((first, b.order));
        }
    }

    let mut out = String::new();
    let mut open_rings: HashMap<(usize, usize), u32> = HashMap::new();
    let mut free: Vec<bool> = vec![true; 100];

    fn emit(
        v: usize,
        atoms: &[ElementLabel],
        children: &[Vec<(usize, BondOrder)>],
        closures: &[Vec<(usize, BondOrder)>],
        order_index: &[usize],
        open_rings: &mut HashMap<(usize, usize), u32>,
        free: &mut [bool],
        out: &mut String,
    ) {
        out.push_str(&atom_text(&atoms[v]));
        let mut ring_list = closures[v].clone();
        ring_list.sort_by_key(|(u, _)| order_index[*u]);
        for (u, order) in ring_list {
            let key = (v.min(u), v.max(u));
            if let Some(num) = open_rings.remove(&key) {
                out.push_str(bond_text(order, &atoms[v], &atoms[u]));
                free[num as usize] = true;
                push_ring_number(out, num);
            } else {
                let num = (1..100).find(|&k| free[k]).expect("fewer than 100 open rings") as u32;
                free[num as usize] = false;
                open_rings.insert(key, num);
                out.push_str(bond_text(order, &atoms[v], &atoms[u]));
                push_ring_number(out, num);
            }
        }
        let kids = &children[v];
        for (idx, &(c, order)) in kids.iter().enumerate() {
            let last = idx + 1 == kids.len();
            if !last {
                out.push('(');
            }
            out.push_str(bond_text(order, &atoms[v], &atoms[c]));
            emit(c, atoms, children, closures, order_index, open_rings, free, out);
            if !last {
                out.push(')');
            }
        }
    }

    fn push_ring_number(out: &mut String, num: u32) {
        if num < 10 {
            out.push(char::from(b'0' + num as u8));
        } else {
            out.push_str(&format!("%{num:02}"));
        }
    }

    for (k, &root) in roots.iter().enumerate() {
        if k > 0 {
            out.push('.');
        }
        emit(
            root,
            atoms,
            &children,
            &closures,
            &order_index,
            &mut open_rings,
            &mut free,
            &mut out,
        );
    }
    out
}

impl Molecule {
    pub fn to_smiles(&self) -> String {
        write_smiles(self.atoms(), &self.bonds)
    }
}
