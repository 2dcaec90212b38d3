//! Frequency analysis of salient substructures.
//!
//! Atoms whose normalized saliency exceeds `τ` are "activated"; every
//! connected component of the activated atoms with at least two atoms is a
//! candidate substructure. For each distinct candidate `s` (up to labeled
//! isomorphism) we count, per molecule,
//!
//! * `N_e`: molecules whose explanation yields `s` as a component,
//! * `N_p`, `N_n`: positive / negative molecules containing `s` anywhere,
//!
//! and rank by `R_e = N_e / (N_p + N_n)`, reporting `R_p = N_p / (N_p + N_n)`
//! as the class-specificity baseline.

pub mod canon;
pub mod matching;

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use canon::{canonical_form, canonical_key, LabeledGraph, MAX_CANON_NODES};
pub use matching::contains;

use crate::error::{Error, Result};
use crate::graph::connected_components;
use crate::smiles::{write_smiles, Molecule};

/// A connected labeled substructure identified by its canonical key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanonicalSubgraph {
    #[serde(with = "hex_bytes")]
    pub key: Vec<u8>,
    pub node_count: usize,
    /// Element symbol → count.
    pub elements: BTreeMap<String, usize>,
    /// SMILES-like rendering, written from the canonical vertex order.
    pub rendering: String,
    #[serde(skip)]
    pub graph: Option<LabeledGraph>,
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        let text: String = bytes.iter().map(|b| format!("{b:02x}")).collect();
        s.serialize_str(&text)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(d)?;
        (0..text.len())
            .step_by(2)
            .map(|i| {
                text.get(i..i + 2)
                    .and_then(|h| u8::from_str_radix(h, 16).ok())
                    .ok_or_else(|| serde::de::Error::custom("bad hex key"))
            })
            .collect()
    }
}

impl CanonicalSubgraph {
    pub fn from_graph(g: &LabeledGraph) -> Result<Self> {
        let (key, order) = canonical_form(g)?;
        let canonical = g.reordered(&order);
        let mut elements = BTreeMap::new();
        for label in &canonical.labels {
            let symbol = if label.aromatic {
                label.symbol.symbol().to_ascii_lowercase()
            } else {
                label.symbol.symbol().to_string()
            };
            *elements.entry(symbol).or_insert(0) += 1;
        }
        Ok(CanonicalSubgraph {
            key,
            node_count: g.n_nodes(),
            elements,
            rendering: write_smiles(&canonical.labels, &canonical.bonds()),
            graph: Some(canonical),
        })
    }

    pub fn key_hex(&self) -> String {
        self.key.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Components (≥ 2 atoms) of the atoms with saliency strictly above `tau`.
/// Components beyond the canonicalization cap are skipped with a warning.
pub fn activated_subgraphs(molecule: &Molecule, heatmap: &[f64], tau: f64) -> Result<Vec<CanonicalSubgraph>> {
    if heatmap.len() != molecule.n_atoms() {
        return Err(Error::Structure(format!(
            "heatmap of length {} for {} atoms",
            heatmap.len(),
            molecule.n_atoms()
        )));
    }
    let mask: Vec<bool> = heatmap.iter().map(|&v| v > tau).collect();
    let mut out = Vec::new();
    for component in connected_components(&molecule.graph, &mask)? {
        if component.len() < 2 {
            continue;
        }
        if component.len() > MAX_CANON_NODES {
            log::warn!(
                "skipping activated component of {} atoms in {}",
                component.len(),
                molecule.source
            );
            continue;
        }
        out.push(CanonicalSubgraph::from_graph(&LabeledGraph::induced(molecule, &component))?);
    }
    Ok(out)
}

/// Per-molecule occurrence counts `(N_p, N_n)` of `s` over `(molecule, label)` pairs.
pub fn count_dataset_occurrences<'a, I>(s: &CanonicalSubgraph, dataset: I) -> (usize, usize)
where
    I: IntoIterator<Item = (&'a LabeledGraph, usize)>,
{
    let pattern = s.graph.as_ref().expect("subgraph built with its graph");
    let (mut pos, mut neg) = (0, 0);
    for (target, label) in dataset {
        if contains(target, pattern) {
            if label == 1 {
                pos += 1;
            } else {
                neg += 1;
            }
        }
    }
    (pos, neg)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubstructureRecord {
    pub subgraph: CanonicalSubgraph,
    pub n_explained: usize,
    pub n_pos: usize,
    pub n_neg: usize,
    pub r_e: f64,
    pub r_p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiningConfig {
    pub tau: f64,
    /// Keep substructures with strictly more than this many containing molecules.
    pub min_occurrence: usize,
    pub top_k: usize,
    /// Only explanations of correctly predicted positives contribute to `N_e`.
    pub true_positives_only: bool,
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig {
            tau: 0.0,
            min_occurrence: 10,
            top_k: 10,
            true_positives_only: true,
        }
    }
}

/// One molecule with its label, model prediction and positive-class heatmap.
#[derive(Debug, Clone, Copy)]
pub struct MiningSample<'a> {
    pub molecule: &'a Molecule,
    pub label: usize,
    pub predicted: usize,
    pub heatmap: &'a [f64],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MiningReport {
    pub records: Vec<SubstructureRecord>,
    /// Distinct substructures seen in qualifying explanations.
    pub n_candidates: usize,
    pub n_qualifying_molecules: usize,
    /// Mean `R_p` over the reported records (0 when empty).
    pub average_r_p: f64,
}

fn rank_order(a: &SubstructureRecord, b: &SubstructureRecord) -> std::cmp::Ordering {
    b.r_e
        .total_cmp(&a.r_e)
        .then(b.r_p.total_cmp(&a.r_p))
        .then(b.subgraph.node_count.cmp(&a.subgraph.node_count))
        .then(a.subgraph.key.cmp(&b.subgraph.key))
}

pub fn mine(samples: &[MiningSample<'_>], cfg: &MiningConfig) -> Result<MiningReport> {
    if !(0.0..=1.0).contains(&cfg.tau) {
        return Err(Error::Config(format!("tau {} outside [0, 1]", cfg.tau)));
    }
    let qualifies = |s: &MiningSample<'_>| !cfg.true_positives_only || (s.label == 1 && s.predicted == 1);

    let per_molecule: Vec<Option<Vec<CanonicalSubgraph>>> = samples
        .par_iter()
        .map(|s| {
            if qualifies(s) {
                activated_subgraphs(s.molecule, s.heatmap, cfg.tau).map(Some)
            } else {
                Ok(None)
            }
        })
        .collect::<Result<_>>()?;

    let n_qualifying = per_molecule.iter().filter(|m| m.is_some()).count();
    let mut candidates: BTreeMap<Vec<u8>, (CanonicalSubgraph, usize)> = BTreeMap::new();
    for components in per_molecule.into_iter().flatten() {
        let mut seen = BTreeSet::new();
        for sub in components {
            if !seen.insert(sub.key.clone()) {
                continue;
            }
            candidates
                .entry(sub.key.clone())
                .and_modify(|(_, n)| *n += 1)
                .or_insert((sub, 1));
        }
    }
    let n_candidates = candidates.len();

    let targets: Vec<(LabeledGraph, usize)> = samples
        .par_iter()
        .map(|s| (LabeledGraph::from_molecule(s.molecule), s.label))
        .collect();

    let mut records: Vec<SubstructureRecord> = candidates
        .into_values()
        .collect::<Vec<_>>()
        .into_par_iter()
        .filter_map(|(subgraph, n_explained)| {
            let (n_pos, n_neg) = count_dataset_occurrences(&subgraph, targets.iter().map(|(g, y)| (g, *y)));
            let total = n_pos + n_neg;
            debug_assert!(n_explained <= total, "explained occurrence missed by containment");
            if total <= cfg.min_occurrence {
                return None;
            }
            Some(SubstructureRecord {
                r_e: n_explained as f64 / total as f64,
                r_p: n_pos as f64 / total as f64,
                subgraph,
                n_explained,
                n_pos,
                n_neg,
            })
        })
        .collect();
    records.sort_by(rank_order);
    records.truncate(cfg.top_k);
    let average_r_p = if records.is_empty() {
        0.0
    } else {
        records.iter().map(|r| r.r_p).sum::<f64>() / records.len() as f64
    };
    Ok(MiningReport {
        records,
        n_candidates,
        n_qualifying_molecules: n_qualifying,
        average_r_p,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smiles::parse_smiles;

    #[test]
    fn activation_examples() {
        let m = parse_smiles("CCO").unwrap();
        assert!(activated_subgraphs(&m, &[0.0; 3], 0.0).unwrap().is_empty());
        let subs = activated_subgraphs(&m, &[0.2, 0.3, 0.5], 0.0).unwrap();
        assert_eq!(subs.len(), 1);
        let path = LabeledGraph::from_molecule(&parse_smiles("OCC").unwrap());
        assert_eq!(subs[0].key, canonical_key(&path).unwrap());

        let ring = parse_smiles("C1CCCCC1").unwrap();
        let alternating = [0.1, 0.0, 0.1, 0.0, 0.1, 0.0];
        assert!(activated_subgraphs(&ring, &alternating, 0.0).unwrap().is_empty());
        assert!(activated_subgraphs(&ring, &[0.1; 5], 0.0).is_err());
    }

    #[test]
    fn rendering_is_order_independent() {
        let a = CanonicalSubgraph::from_graph(&LabeledGraph::from_molecule(&parse_smiles("NCC(=O)O").unwrap())).unwrap();
        let b = CanonicalSubgraph::from_graph(&LabeledGraph::from_molecule(&parse_smiles("OC(=O)CN").unwrap())).unwrap();
        assert_eq!(a.key, b.key);
        assert_eq!(a.rendering, b.rendering);
        assert_eq!(a.elements.get("O"), Some(&2));
        let json = serde_json::to_string(&a).unwrap();
        let back: CanonicalSubgraph = serde_json::from_str(&json).unwrap();
        assert_eq!(back.key, a.key);
    }

    #[test]
    fn occurrence_counts() {
        let mols: Vec<LabeledGraph> = ["CC", "CCC", "CCO", "O"]
            .iter()
            .map(|s| LabeledGraph::from_molecule(&parse_smiles(s).unwrap()))
            .collect();
        let labels = [1, 0, 1, 0];
        let cc = CanonicalSubgraph::from_graph(&LabeledGraph::from_molecule(&parse_smiles("CC").unwrap())).unwrap();
        assert_eq!(count_dataset_occurrences(&cc, mols.iter().zip(labels)), (2, 1));
        let nn = CanonicalSubgraph::from_graph(&LabeledGraph::from_molecule(&parse_smiles("NN").unwrap())).unwrap();
        assert_eq!(count_dataset_occurrences(&nn, mols.iter().zip(labels)), (0, 0));
    }
}
