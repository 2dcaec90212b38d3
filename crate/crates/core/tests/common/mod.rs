#![allow(dead_code)]

use gcnx_core::graph::{AttributedGraph, Element, ElementLabel};
use gcnx_core::model::ModelParams;
use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn graph_from_edges(features: Array2<f64>, edges: &[(usize, usize)]) -> AttributedGraph {
    let n = features.nrows();
    let mut adj = Array2::zeros((n, n));
    for &(i, j) in edges {
        adj[[i, j]] = 1;
        adj[[j, i]] = 1;
    }
    AttributedGraph::new(features, adj, vec![ElementLabel::new(Element::C); n]).unwrap()
}

/// Erdős–Rényi graph on `n` nodes with uniform features in `[lo, hi)`.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, d_in: usize, edge_p: f64, lo: f64, hi: f64) -> AttributedGraph {
    let features = Array2::from_shape_fn((n, d_in), |_| rng.gen_range(lo..hi));
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(edge_p) {
                edges.push((i, j));
            }
        }
    }
    graph_from_edges(features, &edges)
}

pub fn random_params(rng: &mut ChaCha8Rng, d_in: usize, widths: &[usize], n_classes: usize) -> ModelParams {
    ModelParams::glorot(d_in, widths, n_classes, rng).unwrap()
}

/// Same shapes with every weight replaced by its absolute value.
pub fn nonnegative(p: &ModelParams) -> ModelParams {
    ModelParams::new(
        p.layer_weights().iter().map(|w| w.mapv(f64::abs)).collect(),
        p.classifier().mapv(f64::abs),
    )
    .unwrap()
}

pub fn random_permutation(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    perm
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
