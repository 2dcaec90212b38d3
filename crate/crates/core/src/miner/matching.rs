//! Labeled subgraph containment (monomorphism): every pattern node maps to a
//! distinct target node with the same label, and every pattern edge to a
//! target edge with the same bond order. Extra target edges are allowed.

use super::canon::LabeledGraph;

struct Matcher<'a> {
    pattern: &'a LabeledGraph,
    target: &'a LabeledGraph,
    /// Pattern vertices in search order (each after the first has an earlier neighbour).
    order: Vec<usize>,
    mapping: Vec<usize>,
    used: Vec<bool>,
}

const UNMAPPED: usize = usize::MAX;

impl Matcher<'_> {
    fn feasible(&self, p: usize, t: usize) -> bool {
        if self.used[t]
            || self.pattern.labels[p] != self.target.labels[t]
            || self.pattern.degree(p) > self.target.degree(t)
        {
            return false;
        }
        self.pattern.adj[p].iter().all(|&(q, order)| {
            let mapped = self.mapping[q];
            mapped == UNMAPPED || self.target.edge(t, mapped) == Some(order)
        })
    }

    fn extend(&mut self, depth: usize) -> bool {
        if depth == self.order.len() {
            return true;
        }
        let p = self.order[depth];
        let anchor = self.pattern.adj[p]
            .iter()
            .map(|&(q, _)| self.mapping[q])
            .find(|&m| m != UNMAPPED);
        let candidates: Vec<usize> = match anchor {
            Some(t_anchor) => self.target.adj[t_anchor].iter().map(|&(u, _)| u).collect(),
            None => (0..self.target.n_nodes()).collect(),
        };
        for t in candidates {
            if !self.feasible(p, t) {
                continue;
            }
            self.mapping[p] = t;
            self.used[t] = true;
            if self.extend(depth + 1) {
                return true;
            }
            self.mapping[p] = UNMAPPED;
            self.used[t] = false;
        }
        false
    }
}

fn search_order(pattern: &LabeledGraph, target: &LabeledGraph) -> Vec<usize> {
    let n = pattern.n_nodes();
    // Start from the pattern node whose label is rarest in the target, then highest degree.
    let label_count = |v: usize| target.labels.iter().filter(|&&l| l == pattern.labels[v]).count();
    let mut placed = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let start = (0..n)
            .filter(|&v| !placed[v])
            .min_by_key(|&v| (label_count(v), std::cmp::Reverse(pattern.degree(v)), v))
            .unwrap();
        placed[start] = true;
        order.push(start);
        let mut head = order.len() - 1;
        while head < order.len() {
            let v = order[head];
            head += 1;
            let mut next: Vec<usize> = pattern.adj[v].iter().map(|&(u, _)| u).filter(|&u| !placed[u]).collect();
            next.sort_by_key(|&u| (std::cmp::Reverse(pattern.degree(u)), u));
            for u in next {
                if !placed[u] {
                    placed[u] = true;
                    order.push(u);
                }
            }
        }
    }
    order
}

/// Whether `pattern` occurs in `target` as a (not necessarily induced) labeled subgraph.
pub fn contains(target: &LabeledGraph, pattern: &LabeledGraph) -> bool {
    if pattern.n_nodes() > target.n_nodes() || pattern.n_edges() > target.n_edges() {
        return false;
    }
    if pattern.n_nodes() == 0 {
        return true;
    }
    let mut need = pattern.labels.clone();
    let mut have = target.labels.clone();
    need.sort_unstable();
    have.sort_unstable();
    let mut it = have.iter().peekable();
    for l in &need {
        loop {
            match it.next() {
                Some(h) if h == l => break,
                Some(h) if h < l => continue,
                _ => return false,
            }
        }
    }
    let mut matcher = Matcher {
        pattern,
        target,
        order: search_order(pattern, target),
        mapping: vec![UNMAPPED; pattern.n_nodes()],
        used: vec![false; target.n_nodes()],
    };
    matcher.extend(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smiles::parse_smiles;

    fn lg(s: &str) -> LabeledGraph {
        LabeledGraph::from_molecule(&parse_smiles(s).unwrap())
    }

    #[test]
    fn containment_examples() {
        assert!(contains(&lg("CCO"), &lg("CO")));
        assert!(contains(&lg("CCO"), &lg("CC")));
        assert!(!contains(&lg("CCO"), &lg("OO")));
        assert!(!contains(&lg("CC=O"), &lg("CO")));
        assert!(contains(&lg("CC=O"), &lg("C=O")));
        // monomorphism: a path is found inside a ring
        assert!(contains(&lg("C1CCC1"), &lg("CCCC")));
        assert!(!contains(&lg("CCCC"), &lg("C1CCC1")));
        assert!(contains(&lg("c1ccccc1N"), &lg("cN")));
        assert!(!contains(&lg("c1ccccc1N"), &lg("CN")));
        assert!(contains(&lg("CC(C)(C)C"), &lg("CC(C)(C)C")));
        assert!(!contains(&lg("CCCCC"), &lg("CC(C)C")));
    }
}
