//! Labeled molecule sets: CSV ingestion, a planted-motif generator and
//! seeded train/validation/test splits.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Element, ElementLabel};
use crate::miner::{contains, LabeledGraph};
use crate::smiles::{parse_smiles, write_smiles, Bond, BondOrder, Molecule};
use crate::train::Example;

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub id: String,
    pub molecule: Molecule,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub entries: Vec<Entry>,
    /// Source path or generator description.
    pub provenance: String,
    /// Rows whose SMILES failed to parse.
    pub skipped: usize,
    /// Rows with an empty label cell.
    pub dropped_blank: usize,
}

impl LabeledSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `[negatives, positives]`.
    pub fn class_counts(&self) -> [usize; 2] {
        let mut counts = [0, 0];
        for e in &self.entries {
            counts[e.label] += 1;
        }
        counts
    }

    pub fn examples(&self) -> Vec<Example<'_>> {
        self.entries.iter().map(|e| (&e.molecule.graph, e.label)).collect()
    }
}

fn parse_label(raw: &str, row: usize) -> Result<Option<usize>> {
    let text = raw.trim();
    if text.is_empty() {
        return Ok(None);
    }
    match text.parse::<f64>() {
        Ok(0.0) => Ok(Some(0)),
        Ok(1.0) => Ok(Some(1)),
        _ => Err(Error::Data(format!("row {row}: label {text:?} is not 0 or 1"))),
    }
}

/// Reads a headered CSV. Rows with a blank label are dropped, rows whose
/// SMILES does not parse are skipped with a warning; both are counted.
/// Without `id_column`, ids are the 0-based data row indices.
pub fn load_csv(path: &Path, smiles_column: &str, label_column: &str, id_column: Option<&str>) -> Result<LabeledSet> {
    let mut reader = csv::ReaderBuilder::new().flexible(false).from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::Data(format!("{}: empty file", path.display())));
    }
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Data(format!("{}: no column named {name:?}", path.display())))
    };
    let smiles_idx = column(smiles_column)?;
    let label_idx = column(label_column)?;
    let id_idx = id_column.map(column).transpose()?;

    let mut rows = Vec::new();
    let mut dropped_blank = 0;
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let field = |i: usize| record.get(i).unwrap_or("").to_string();
        match parse_label(&field(label_idx), row)? {
            None => dropped_blank += 1,
            Some(label) => {
                let id = id_idx.map_or_else(|| row.to_string(), field);
                rows.push((row, id, field(smiles_idx), label));
            }
        }
    }
    if rows.is_empty() && dropped_blank == 0 {
        return Err(Error::Data(format!("{}: no data rows", path.display())));
    }

    let mut seen = HashSet::new();
    for (row, id, _, _) in &rows {
        if !seen.insert(id.as_str()) {
            return Err(Error::Data(format!("{}: duplicate id {id:?} at row {row}", path.display())));
        }
    }

    let parsed: Vec<Option<Entry>> = rows
        .into_par_iter()
        .map(|(row, id, smiles, label)| match parse_smiles(smiles.trim()) {
            Ok(molecule) if molecule.n_atoms() > 0 => Some(Entry { id, molecule, label }),
            Ok(_) => {
                log::warn!("row {row}: empty molecule, skipped");
                None
            }
            Err(e) => {
                log::warn!("row {row}: {e}; skipped");
                None
            }
        })
        .collect();
    let total = parsed.len();
    let entries: Vec<Entry> = parsed.into_iter().flatten().collect();
    Ok(LabeledSet {
        skipped: total - entries.len(),
        entries,
        provenance: path.display().to_string(),
        dropped_blank,
    })
}

const MIN_ATOMS: usize = 6;
const MAX_ATOMS: usize = 20;
const MAX_DEGREE: usize = 4;
const RING_PROBABILITY: f64 = 0.3;
const DECOY_RATE: f64 = 0.08;

struct Skeleton {
    atoms: Vec<ElementLabel>,
    bonds: Vec<Bond>,
    degree: Vec<usize>,
}

impl Skeleton {
    fn add_bond(&mut self, a: usize, b: usize) {
        self.bonds.push(Bond::new(a, b, BondOrder::Single));
        self.degree[a] += 1;
        self.degree[b] += 1;
    }

    fn tree_distance_from(&self, source: usize) -> Vec<usize> {
        let n = self.atoms.len();
        let mut adj = vec![Vec::new(); n];
        for b in &self.bonds {
            adj[b.i].push(b.j);
            adj[b.j].push(b.i);
        }
        let mut dist = vec![usize::MAX; n];
        dist[source] = 0;
        let mut queue = std::collections::VecDeque::from([source]);
        while let Some(v) = queue.pop_front() {
            for &u in &adj[v] {
                if dist[u] == usize::MAX {
                    dist[u] = dist[v] + 1;
                    queue.push_back(u);
                }
            }
        }
        dist
    }
}

/// Random carbon tree with degree ≤ 4, an optional 5- or 6-ring closure and
/// sporadic N/O decoy atoms.
fn random_skeleton(n: usize, rng: &mut ChaCha8Rng) -> Skeleton {
    let mut s = Skeleton {
        atoms: vec![ElementLabel::new(Element::C); n],
        bonds: Vec::new(),
        degree: vec![0; n],
    };
    for v in 1..n {
        let open: Vec<usize> = (0..v).filter(|&u| s.degree[u] < MAX_DEGREE).collect();
        let parent = open[rng.gen_range(0..open.len())];
        s.add_bond(parent, v);
    }
    if n >= 5 && rng.gen_bool(RING_PROBABILITY) {
        let start = rng.gen_range(0..n);
        if s.degree[start] < MAX_DEGREE {
            let dist = s.tree_distance_from(start);
            let ends: Vec<usize> = (0..n)
                .filter(|&u| (dist[u] == 4 || dist[u] == 5) && s.degree[u] < MAX_DEGREE)
                .collect();
            if !ends.is_empty() {
                let end = ends[rng.gen_range(0..ends.len())];
                s.add_bond(start, end);
            }
        }
    }
    for atom in &mut s.atoms {
        if rng.gen_bool(DECOY_RATE) {
            *atom = ElementLabel::new(if rng.gen_bool(0.5) { Element::N } else { Element::O });
        }
    }
    s
}

fn graft(s: &mut Skeleton, motif: &Molecule, rng: &mut ChaCha8Rng) {
    let offset = s.atoms.len();
    let open: Vec<usize> = (0..offset).filter(|&u| s.degree[u] < MAX_DEGREE).collect();
    let anchor = open[rng.gen_range(0..open.len())];
    s.atoms.extend_from_slice(motif.atoms());
    s.degree.extend(std::iter::repeat_n(0, motif.n_atoms()));
    for b in &motif.bonds {
        s.bonds.push(Bond::new(b.i + offset, b.j + offset, b.order));
        s.degree[b.i + offset] += 1;
        s.degree[b.j + offset] += 1;
    }
    s.add_bond(anchor, offset);
}

/// Balanced planted-motif corpus: positives carry `motif` grafted onto a
/// random carbon skeleton, negatives are resampled until they do not contain it.
/// Molecules are written to SMILES and re-parsed, so `source` round-trips.
pub fn synth_motif_set(n: usize, motif: &str, seed: u64) -> Result<LabeledSet> {
    let motif_mol = parse_smiles(motif)?;
    let m = motif_mol.n_atoms();
    if m == 0 || m > 6 {
        return Err(Error::Config(format!("motif {motif:?} must have 1 to 6 atoms")));
    }
    let motif_graph = LabeledGraph::from_molecule(&motif_mol);
    if !motif_graph.is_connected() {
        return Err(Error::Config(format!("motif {motif:?} is not connected")));
    }
    let min_total = MIN_ATOMS.max(m + 2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_pos = n / 2;
    let mut labels: Vec<usize> = (0..n).map(|i| usize::from(i < n_pos)).collect();
    labels.shuffle(&mut rng);

    let mut entries = Vec::with_capacity(n);
    for (i, &label) in labels.iter().enumerate() {
        let molecule = loop {
            let total = rng.gen_range(min_total..=MAX_ATOMS);
            let skeleton_size = if label == 1 { total - m } else { total };
            let mut s = random_skeleton(skeleton_size, &mut rng);
            if label == 1 {
                graft(&mut s, &motif_mol, &mut rng);
            }
            let text = write_smiles(&s.atoms, &s.bonds);
            let mol = parse_smiles(&text)?;
            if label == 1 || !contains(&LabeledGraph::from_molecule(&mol), &motif_graph) {
                break mol;
            }
        };
        entries.push(Entry {
            id: format!("synth-{i}"),
            molecule,
            label,
        });
    }
    Ok(LabeledSet {
        entries,
        provenance: format!("synth:{motif}:{n}:seed={seed}"),
        skipped: 0,
        dropped_blank: 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    /// Train, validation, test fractions.
    pub ratios: [f64; 3],
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            ratios: [0.8, 0.1, 0.1],
            seed: 0,
            stratified: false,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if self.ratios.iter().any(|r| !(0.0..=1.0).contains(r)) || (self.ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split ratios {:?} must be in [0,1] and sum to 1", self.ratios)));
        }
        Ok(())
    }
}

fn partition_sizes(n: usize, ratios: &[f64; 3]) -> [usize; 3] {
    let train = ((n as f64) * ratios[0]).round() as usize;
    let val = (((n as f64) * ratios[1]).round() as usize).min(n - train.min(n));
    let train = train.min(n);
    [train, val, n - train - val]
}

/// Seeded random split into train, validation and test sets.
pub fn split(set: &LabeledSet, spec: &SplitSpec) -> Result<[LabeledSet; 3]> {
    spec.validate()?;
    if set.len() < 10 {
        return Err(Error::Data(format!("cannot split {} molecules; need at least 10", set.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut parts: [Vec<usize>; 3] = Default::default();
    let groups: Vec<Vec<usize>> = if spec.stratified {
        (0..2)
            .map(|c| (0..set.len()).filter(|&i| set.entries[i].label == c).collect())
            .collect()
    } else {
        vec![(0..set.len()).collect()]
    };
    for mut group in groups {
        group.shuffle(&mut rng);
        let sizes = partition_sizes(group.len(), &spec.ratios);
        let mut rest = group.as_slice();
        for (part, size) in parts.iter_mut().zip(sizes) {
            let (head, tail) = rest.split_at(size);
            part.extend_from_slice(head);
            rest = tail;
        }
    }
    if spec.stratified {
        for part in &mut parts {
            part.shuffle(&mut rng);
        }
    }
    let names = ["train", "validation", "test"];
    let build = |k: usize| LabeledSet {
        entries: parts[k].iter().map(|&i| set.entries[i].clone()).collect(),
        provenance: format!("{} [{}]", set.provenance, names[k]),
        skipped: 0,
        dropped_blank: 0,
    };
    Ok([build(0), build(1), build(2)])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_round_to_nearest() {
        assert_eq!(partition_sizes(100, &[0.8, 0.1, 0.1]), [80, 10, 10]);
        assert_eq!(partition_sizes(10, &[0.8, 0.1, 0.1]), [8, 1, 1]);
        assert_eq!(partition_sizes(7, &[1.0, 0.0, 0.0]), [7, 0, 0]);
    }

    #[test]
    fn labels_parse() {
        assert_eq!(parse_label(" 1 ", 0).unwrap(), Some(1));
        assert_eq!(parse_label("0.0", 0).unwrap(), Some(0));
        assert_eq!(parse_label("", 0).unwrap(), None);
        assert!(parse_label("2", 0).is_err());
        assert!(parse_label("yes", 0).is_err());
    }

    #[test]
    fn bad_ratios_rejected() {
        let spec = SplitSpec {
            ratios: [0.5, 0.2, 0.2],
            ..SplitSpec::default()
        };
        assert!(spec.validate().is_err());
    }
}
