//! Canonical form of small node- and edge-labeled graphs by colour
//! refinement plus individualization search, with automorphism pruning.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::graph::ElementLabel;
use crate::smiles::{Bond, BondOrder, Molecule};

/// Upper bound on the node count accepted by [`canonical_form`].
pub const MAX_CANON_NODES: usize = 64;

/// Undirected graph with [`ElementLabel`] nodes and bond-order edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledGraph {
    pub labels: Vec<ElementLabel>,
    /// Sorted adjacency lists.
    pub adj: Vec<Vec<(usize, BondOrder)>>,
}

impl LabeledGraph {
    pub fn new(labels: Vec<ElementLabel>, bonds: &[Bond]) -> Self {
        let mut adj = vec![Vec::new(); labels.len()];
        for b in bonds {
            adj[b.i].push((b.j, b.order));
            adj[b.j].push((b.i, b.order));
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        LabeledGraph { labels, adj }
    }

    pub fn from_molecule(m: &Molecule) -> Self {
        LabeledGraph::new(m.atoms().to_vec(), &m.bonds)
    }

    /// Subgraph of `m` induced by `vertices`; node `i` is `vertices[i]`.
    pub fn induced(m: &Molecule, vertices: &[usize]) -> Self {
        let mut index = vec![usize::MAX; m.n_atoms()];
        for (new, &old) in vertices.iter().enumerate() {
            index[old] = new;
        }
        let labels = vertices.iter().map(|&v| m.atoms()[v]).collect();
        let bonds: Vec<Bond> = m
            .bonds
            .iter()
            .filter(|b| index[b.i] != usize::MAX && index[b.j] != usize::MAX)
            .map(|b| Bond::new(index[b.i], index[b.j], b.order))
            .collect();
        LabeledGraph::new(labels, &bonds)
    }

    pub fn n_nodes(&self) -> usize {
        self.labels.len()
    }

    pub fn n_edges(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn edge(&self, a: usize, b: usize) -> Option<BondOrder> {
        self.adj[a]
            .binary_search_by(|(u, _)| u.cmp(&b))
            .ok()
            .map(|i| self.adj[a][i].1)
    }

    pub fn bonds(&self) -> Vec<Bond> {
        let mut out = Vec::new();
        for (a, list) in self.adj.iter().enumerate() {
            for &(b, order) in list {
                if a < b {
                    out.push(Bond::new(a, b, order));
                }
            }
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        if self.labels.is_empty() {
            return true;
        }
        let mut seen = vec![false; self.n_nodes()];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &(u, _) in &self.adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    count += 1;
                    stack.push(u);
                }
            }
        }
        count == self.n_nodes()
    }

    /// Node `i` of the result is node `order[i]` of `self`.
    pub fn reordered(&self, order: &[usize]) -> Self {
        let mut position = vec![0; order.len()];
        for (new, &old) in order.iter().enumerate() {
            position[old] = new;
        }
        let labels = order.iter().map(|&v| self.labels[v]).collect();
        let bonds: Vec<Bond> = self
            .bonds()
            .into_iter()
            .map(|b| Bond::new(position[b.i], position[b.j], b.order))
            .collect();
        LabeledGraph::new(labels, &bonds)
    }
}

fn label_bytes(label: &ElementLabel) -> [u8; 3] {
    [label.symbol.index() as u8, label.formal_charge as u8, label.aromatic as u8]
}

/// Re-ranks arbitrary sortable keys into dense colours `0..k`.
fn rank<K: Ord + Clone>(keys: &[K]) -> (Vec<u32>, usize) {
    let mut sorted: Vec<K> = keys.to_vec();
    sorted.sort();
    sorted.dedup();
    let colors = keys
        .iter()
        .map(|k| sorted.binary_search(k).expect("key present") as u32)
        .collect();
    (colors, sorted.len())
}

/// Iterated 1-WL refinement. Cells keep their relative order; they only split.
fn refine(g: &LabeledGraph, mut colors: Vec<u32>) -> Vec<u32> {
    let mut n_colors = {
        let mut c = colors.clone();
        c.sort_unstable();
        c.dedup();
        c.len()
    };
    loop {
        let signatures: Vec<(u32, Vec<(u8, u32)>)> = (0..g.n_nodes())
            .map(|v| {
                let mut around: Vec<(u8, u32)> = g.adj[v].iter().map(|&(u, o)| (o.code(), colors[u])).collect();
                around.sort_unstable();
                (colors[v], around)
            })
            .collect();
        let (next, k) = rank(&signatures);
        colors = next;
        if k == n_colors {
            return colors;
        }
        n_colors = k;
    }
}

fn encode(g: &LabeledGraph, colors: &[u32]) -> (Vec<u8>, Vec<usize>) {
    let n = g.n_nodes();
    let mut order = vec![0usize; n];
    for v in 0..n {
        order[colors[v] as usize] = v;
    }
    let mut code = Vec::with_capacity(2 + 3 * n + 3 * g.n_edges());
    code.push(n as u8);
    for &v in &order {
        code.extend_from_slice(&label_bytes(&g.labels[v]));
    }
    let mut edges: Vec<(u8, u8, u8)> = Vec::with_capacity(g.n_edges());
    for a in 0..n {
        for &(b, o) in &g.adj[a] {
            let (pa, pb) = (colors[a] as u8, colors[b] as u8);
            if pa < pb {
                edges.push((pa, pb, o.code()));
            }
        }
    }
    edges.sort_unstable();
    code.push(edges.len() as u8);
    for (a, b, o) in edges {
        code.extend_from_slice(&[a, b, o]);
    }
    (code, order)
}

struct Search<'a> {
    graph: &'a LabeledGraph,
    best: Option<(Vec<u8>, Vec<usize>)>,
    /// Automorphisms as vertex maps.
    automorphisms: Vec<Vec<usize>>,
}

impl Search<'_> {
    fn orbit_representative(&self, prefix: &[usize], v: usize, explored: &[usize]) -> bool {
        // Union-find over the group generated by automorphisms fixing the prefix pointwise.
        let n = self.graph.n_nodes();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for gamma in &self.automorphisms {
            if prefix.iter().any(|&p| gamma[p] != p) {
                continue;
            }
            for x in 0..n {
                let (a, b) = (find(&mut parent, x), find(&mut parent, gamma[x]));
                if a != b {
                    parent[a] = b;
                }
            }
        }
        let root = find(&mut parent, v);
        explored.iter().any(|&e| find(&mut parent, e) == root)
    }

    fn run(&mut self, colors: Vec<u32>, prefix: &mut Vec<usize>) {
        let colors = refine(self.graph, colors);
        let n = self.graph.n_nodes();
        let mut cell_size = vec![0usize; n];
        for &c in &colors {
            cell_size[c as usize] += 1;
        }
        let target = (0..n).find(|&c| cell_size[c] > 1);
        let Some(target) = target else {
            let (code, order) = encode(self.graph, &colors);
            match &self.best {
                None => self.best = Some((code, order)),
                Some((best_code, best_order)) => match code.cmp(best_code) {
                    Ordering::Less => self.best = Some((code, order)),
                    Ordering::Equal => {
                        let mut gamma = vec![0; n];
                        for (i, &v) in best_order.iter().enumerate() {
                            gamma[v] = order[i];
                        }
                        self.automorphisms.push(gamma);
                    }
                    Ordering::Greater => {}
                },
            }
            return;
        };
        let cell: Vec<usize> = (0..n).filter(|&v| colors[v] as usize == target).collect();
        let mut explored = Vec::new();
        for &v in &cell {
            if self.orbit_representative(prefix, v, &explored) {
                continue;
            }
            explored.push(v);
            let keys: Vec<(u32, u8)> = (0..n).map(|u| (colors[u], (u != v) as u8)).collect();
            let (individualized, _) = rank(&keys);
            prefix.push(v);
            self.run(individualized, prefix);
            prefix.pop();
        }
    }
}

/// Canonical byte code and the vertex order that produces it
/// (`order[i]` is the input vertex placed at canonical position `i`).
pub fn canonical_form(g: &LabeledGraph) -> Result<(Vec<u8>, Vec<usize>)> {
    let n = g.n_nodes();
    if n > MAX_CANON_NODES {
        return Err(Error::Structure(format!(
            "subgraph with {n} nodes exceeds the canonicalization cap of {MAX_CANON_NODES}"
        )));
    }
    if n == 0 {
        return Ok((vec![0, 0], Vec::new()));
    }
    if !g.is_connected() {
        return Err(Error::Structure("canonical keys are defined for connected graphs only".into()));
    }
    let initial: Vec<([u8; 3], usize)> = (0..n).map(|v| (label_bytes(&g.labels[v]), g.degree(v))).collect();
    let (colors, _) = rank(&initial);
    let mut search = Search {
        graph: g,
        best: None,
        automorphisms: Vec::new(),
    };
    search.run(colors, &mut Vec::new());
    Ok(search.best.expect("at least one leaf"))
}

/// Key that is equal for two graphs iff they are isomorphic (labels and bond orders respected).
pub fn canonical_key(g: &LabeledGraph) -> Result<Vec<u8>> {
    canonical_form(g).map(|(code, _)| code)
}
