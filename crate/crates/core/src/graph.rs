//! Attributed molecular graphs and the symmetric normalized propagation
//! matrix `D̃^{-1/2} (A + I) D̃^{-1/2}` used by every graph convolution.
//!
//! Everything is dense: molecules have at most a few hundred heavy atoms.

use std::collections::VecDeque;
use std::fmt;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fixed element vocabulary. Anything outside it collapses to [`Element::Other`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Element {
    B,
    C,
    N,
    O,
    P,
    S,
    F,
    Cl,
    Br,
    I,
    Other,
}

impl Element {
    pub const ALL: [Element; 11] = [
        Element::B,
        Element::C,
        Element::N,
        Element::O,
        Element::P,
        Element::S,
        Element::F,
        Element::Cl,
        Element::Br,
        Element::I,
        Element::Other,
    ];

    /// Maps an element symbol (case-sensitive, as written in a bracket atom) to the vocabulary.
    pub fn from_symbol(symbol: &str) -> Element {
        match symbol {
            "B" => Element::B,
            "C" => Element::C,
            "N" => Element::N,
            "O" => Element::O,
            "P" => Element::P,
            "S" => Element::S,
            "F" => Element::F,
            "Cl" => Element::Cl,
            "Br" => Element::Br,
            "I" => Element::I,
            _ => Element::Other,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Element::B => "B",
            Element::C => "C",
            Element::N => "N",
            Element::O => "O",
            Element::P => "P",
            Element::S => "S",
            Element::F => "F",
            Element::Cl => "Cl",
            Element::Br => "Br",
            Element::I => "I",
            Element::Other => "*",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// Per-atom label: element, formal charge and the aromatic flag taken from
/// lowercase SMILES notation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ElementLabel {
    pub symbol: Element,
    pub formal_charge: i8,
    pub aromatic: bool,
}

impl ElementLabel {
    pub fn new(symbol: Element) -> Self {
        ElementLabel {
            symbol,
            formal_charge: 0,
            aromatic: false,
        }
    }
}

/// Immutable graph with node features, binary adjacency and the precomputed
/// normalized propagation matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributedGraph {
    node_features: Array2<f64>,
    adjacency: Array2<u8>,
    node_elements: Vec<ElementLabel>,
    norm_propagation: Array2<f64>,
}

impl AttributedGraph {
    pub fn new(
        node_features: Array2<f64>,
        adjacency: Array2<u8>,
        node_elements: Vec<ElementLabel>,
    ) -> Result<Self> {
        let n = adjacency.nrows();
        if node_features.nrows() != n {
            return Err(Error::Structure(format!(
                "feature matrix has {} rows for {} nodes",
                node_features.nrows(),
                n
            )));
        }
        if node_elements.len() != n {
            return Err(Error::Structure(format!(
                "{} element labels for {} nodes",
                node_elements.len(),
                n
            )));
        }
        let norm_propagation = normalize_adjacency(&adjacency)?;
        Ok(AttributedGraph {
            node_features,
            adjacency,
            node_elements,
            norm_propagation,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.node_features.ncols()
    }

    pub fn node_features(&self) -> &Array2<f64> {
        &self.node_features
    }

    pub fn adjacency(&self) -> &Array2<u8> {
        &self.adjacency
    }

    pub fn node_elements(&self) -> &[ElementLabel] {
        &self.node_elements
    }

    /// The matrix `V` of the graph convolution.
    pub fn norm_propagation(&self) -> &Array2<f64> {
        &self.norm_propagation
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[[i, j]] != 0
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency
            .row(i)
            .into_iter()
            .enumerate()
            .filter(|(_, &a)| a != 0)
            .map(|(j, _)| j)
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors(i).count()
    }

    /// Same topology and labels with a different feature matrix. `V` is reused.
    pub fn with_features(&self, node_features: Array2<f64>) -> Result<Self> {
        if node_features.nrows() != self.n_nodes() {
            return Err(Error::Structure(format!(
                "feature matrix has {} rows for {} nodes",
                node_features.nrows(),
                self.n_nodes()
            )));
        }
        Ok(AttributedGraph {
            node_features,
            ..self.clone()
        })
    }

    /// Relabels nodes so that new node `i` is old node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n_nodes();
        check_permutation(perm, n)?;
        let features = self.node_features.select(ndarray::Axis(0), perm);
        let adjacency = Array2::from_shape_fn((n, n), |(i, j)| self.adjacency[[perm[i], perm[j]]]);
        let elements = perm.iter().map(|&p| self.node_elements[p]).collect();
        AttributedGraph::new(features, adjacency, elements)
    }
}

pub(crate) fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    if perm.len() != n {
        return Err(Error::Structure(format!(
            "permutation of length {} for {} nodes",
            perm.len(),
            n
        )));
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || seen[p] {
            return Err(Error::Structure("not a permutation".into()));
        }
        seen[p] = true;
    }
    Ok(())
}

/// Computes `D̃^{-1/2} (A + I) D̃^{-1/2}` with `D̃_ii = Σ_j (A + I)_ij`.
///
/// The self loop keeps every degree ≥ 1, so isolated nodes are fine.
pub fn normalize_adjacency(adjacency: &Array2<u8>) -> Result<Array2<f64>> {
    let (rows, cols) = adjacency.dim();
    if rows != cols {
        return Err(Error::Structure(format!(
            "adjacency is {rows}x{cols}, expected square"
        )));
    }
    let n = rows;
    for i in 0..n {
        if adjacency[[i, i]] != 0 {
            return Err(Error::Structure(format!("self loop on node {i}")));
        }
        for j in 0..i {
            let a = adjacency[[i, j]];
            if a != adjacency[[j, i]] {
                return Err(Error::Structure(format!(
                    "adjacency not symmetric at ({i}, {j})"
                )));
            }
            if a > 1 {
                return Err(Error::Structure(format!(
                    "non-binary adjacency entry {a} at ({i}, {j})"
                )));
            }
        }
    }

    let inv_sqrt_deg: Vec<f64> = (0..n)
        .map(|i| {
            let d = 1 + adjacency.row(i).iter().map(|&a| a as usize).sum::<usize>();
            1.0 / (d as f64).sqrt()
        })
        .collect();

    Ok(Array2::from_shape_fn((n, n), |(i, j)| {
        let a_tilde = if i == j { 1.0 } else { adjacency[[i, j]] as f64 };
        if a_tilde == 0.0 {
            0.0
        } else {
            inv_sqrt_deg[i] * a_tilde * inv_sqrt_deg[j]
        }
    }))
}

/// Connected components of the subgraph induced by `vertex_mask`.
///
/// Components are ordered by their smallest vertex; vertices within a
/// component are sorted ascending.
pub fn connected_components(graph: &AttributedGraph, vertex_mask: &[bool]) -> Result<Vec<Vec<usize>>> {
    let n = graph.n_nodes();
    if vertex_mask.len() != n {
        return Err(Error::Structure(format!(
            "mask of length {} for {} nodes",
            vertex_mask.len(),
            n
        )));
    }
    let mut visited = vec![false; n];
    let mut components = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..n {
        if !vertex_mask[start] || visited[start] {
            continue;
        }
        visited[start] = true;
        queue.push_back(start);
        let mut component = Vec::new();
        while let Some(v) = queue.pop_front() {
            component.push(v);
            for u in graph.neighbors(v) {
                if vertex_mask[u] && !visited[u] {
                    visited[u] = true;
                    queue.push_back(u);
                }
            }
        }
        component.sort_unstable();
        components.push(component);
    }
    Ok(components)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    pub(crate) fn plain_graph(n: usize, edges: &[(usize, usize)]) -> AttributedGraph {
        let mut adj = Array2::zeros((n, n));
        for &(i, j) in edges {
            adj[[i, j]] = 1;
            adj[[j, i]] = 1;
        }
        AttributedGraph::new(
            Array2::zeros((n, 1)),
            adj,
            vec![ElementLabel::new(Element::C); n],
        )
        .unwrap()
    }

    #[test]
    fn isolated_node_is_identity() {
        let v = normalize_adjacency(&array![[0u8]]).unwrap();
        assert_eq!(v, array![[1.0]]);
    }

    #[test]
    fn single_edge() {
        let v = normalize_adjacency(&array![[0u8, 1], [1, 0]]).unwrap();
        for x in v.iter() {
            assert!((x - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn three_node_path() {
        let g = plain_graph(3, &[(0, 1), (1, 2)]);
        let v = g.norm_propagation();
        assert!((v[[0, 0]] - 0.5).abs() < 1e-15);
        assert!((v[[0, 1]] - 1.0 / 6f64.sqrt()).abs() < 1e-15);
        assert!((v[[1, 1]] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(v[[0, 2]], 0.0);
        assert_eq!(v[[1, 0]], v[[0, 1]]);
    }

    #[test]
    fn rejects_bad_adjacency() {
        assert!(matches!(
            normalize_adjacency(&Array2::zeros((2, 3))),
            Err(Error::Structure(_))
        ));
        assert!(matches!(
            normalize_adjacency(&array![[0u8, 1], [0, 0]]),
            Err(Error::Structure(_))
        ));
        assert!(matches!(
            normalize_adjacency(&array![[1u8]]),
            Err(Error::Structure(_))
        ));
    }

    #[test]
    fn components_respect_mask() {
        let path = plain_graph(3, &[(0, 1), (1, 2)]);
        assert_eq!(
            connected_components(&path, &[true, false, true]).unwrap(),
            vec![vec![0], vec![2]]
        );
        assert_eq!(
            connected_components(&path, &[true; 3]).unwrap(),
            vec![vec![0, 1, 2]]
        );

        let ring = plain_graph(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0)]);
        let mask = [true, true, false, true, true, false];
        assert_eq!(
            connected_components(&ring, &mask).unwrap(),
            vec![vec![0, 1], vec![3, 4]]
        );
        assert!(connected_components(&ring, &[true]).is_err());
    }

    #[test]
    fn permutation_relabels_nodes() {
        let g = plain_graph(3, &[(0, 1), (1, 2)]);
        let p = g.permuted(&[1, 2, 0]).unwrap();
        // new 0 = old 1 (center)
        assert_eq!(p.degree(0), 2);
        assert!(g.permuted(&[0, 0, 1]).is_err());
    }
}
