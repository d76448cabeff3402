//! Canonical labeling of vertex-colored directed graphs.
//!
//! Individualization-refinement: the initial partition is the color classes
//! ordered by color, refined to the coarsest equitable ordered partition
//! using in/out neighbor counts per cell. Non-discrete partitions are split
//! by individualizing each vertex of the first largest non-singleton cell in
//! turn. Every discrete leaf yields a labeling; the labeling whose relabeled
//! graph has the least certificate (colors, then row-major adjacency bits)
//! wins. Because the search tree depends only on the graph, isomorphic
//! inputs see the same multiset of leaf certificates and so the same
//! minimum.
//!
//! Leaves whose certificate equals the current best expose automorphisms;
//! those are used to skip individualizing vertices that lie in the same
//! orbit (under automorphisms fixing the current path) as a vertex already
//! explored.

use std::cmp::Ordering;
use std::fmt;

use crate::error::{Error, Result};

/// Dense storage is used up to this many nodes.
pub const DENSE_LIMIT: usize = 4096;

/// 0/1 adjacency matrix; `has_edge(i, j)` means an edge `i → j`.
#[derive(Clone, PartialEq, Eq)]
pub enum Adjacency {
    /// Row-major bit rows.
    Dense {
        n: usize,
        words: usize,
        bits: Vec<u64>,
    },
    /// Sorted successor lists.
    Sparse { succs: Vec<Vec<usize>> },
}

impl Adjacency {
    pub fn new(n: usize) -> Self {
        if n <= DENSE_LIMIT {
            let words = n.div_ceil(64);
            Adjacency::Dense {
                n,
                words,
                bits: vec![0; n * words],
            }
        } else {
            Adjacency::Sparse {
                succs: vec![Vec::new(); n],
            }
        }
    }

    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut a = Adjacency::new(n);
        for (i, j) in edges {
            a.set(i, j, true);
        }
        a
    }

    pub fn len(&self) -> usize {
        match self {
            Adjacency::Dense { n, .. } => *n,
            Adjacency::Sparse { succs } => succs.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        match self {
            Adjacency::Dense { words, bits, .. } => bits[i * words + j / 64] >> (j % 64) & 1 == 1,
            Adjacency::Sparse { succs } => succs[i].binary_search(&j).is_ok(),
        }
    }

    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        match self {
            Adjacency::Dense { words, bits, .. } => {
                let w = &mut bits[i * *words + j / 64];
                if value {
                    *w |= 1 << (j % 64);
                } else {
                    *w &= !(1 << (j % 64));
                }
            }
            Adjacency::Sparse { succs } => match (succs[i].binary_search(&j), value) {
                (Err(pos), true) => succs[i].insert(pos, j),
                (Ok(pos), false) => {
                    succs[i].remove(pos);
                }
                _ => {}
            },
        }
    }

    /// Successors of `i` in increasing order.
    pub fn succs(&self, i: usize) -> Vec<usize> {
        match self {
            Adjacency::Dense { n, .. } => (0..*n).filter(|&j| self.has_edge(i, j)).collect(),
            Adjacency::Sparse { succs } => succs[i].clone(),
        }
    }

    /// Predecessors of `i` in increasing order.
    pub fn preds(&self, i: usize) -> Vec<usize> {
        (0..self.len()).filter(|&j| self.has_edge(j, i)).collect()
    }

    /// All edges in row-major order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.len())
            .flat_map(|i| self.succs(i).into_iter().map(move |j| (i, j)))
            .collect()
    }

    pub fn edge_count(&self) -> usize {
        match self {
            Adjacency::Dense { bits, .. } => bits.iter().map(|w| w.count_ones() as usize).sum(),
            Adjacency::Sparse { succs } => succs.iter().map(Vec::len).sum(),
        }
    }
}

impl fmt::Debug for Adjacency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Adjacency")
            .field("n", &self.len())
            .field("edges", &self.edges())
            .finish()
    }
}

/// Directed graph with one positive-integer color per node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ColoredDigraph {
    pub adjacency: Adjacency,
    pub colors: Vec<u32>,
}

impl ColoredDigraph {
    pub fn new(adjacency: Adjacency, colors: Vec<u32>) -> Self {
        debug_assert_eq!(adjacency.len(), colors.len());
        ColoredDigraph { adjacency, colors }
    }

    pub fn len(&self) -> usize {
        self.colors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.colors.is_empty()
    }
}

/// Bijection on node ids: node `i` moves to `perm[i]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Relabeling {
    pub perm: Vec<usize>,
}

impl Relabeling {
    pub fn identity(n: usize) -> Self {
        Relabeling {
            perm: (0..n).collect(),
        }
    }

    pub fn inverse(&self) -> Relabeling {
        Relabeling {
            perm: crate::model::invert_perm(&self.perm),
        }
    }

    pub fn is_bijection(&self) -> bool {
        let mut seen = vec![false; self.perm.len()];
        self.perm
            .iter()
            .all(|&p| p < seen.len() && !std::mem::replace(&mut seen[p], true))
    }

    pub fn apply(&self, node: usize) -> usize {
        self.perm[node]
    }
}

/// `A'[r(i)][r(j)] = A[i][j]`, `c'[r(i)] = c[i]`.
pub fn apply_relabeling(g: &ColoredDigraph, r: &Relabeling) -> Result<ColoredDigraph> {
    if r.perm.len() != g.len() || !r.is_bijection() {
        return Err(Error::SizeMismatch {
            expected: g.len(),
            found: r.perm.len(),
        });
    }
    let mut adjacency = Adjacency::new(g.len());
    for (i, j) in g.adjacency.edges() {
        adjacency.set(r.perm[i], r.perm[j], true);
    }
    let mut colors = vec![0; g.len()];
    for (i, &c) in g.colors.iter().enumerate() {
        colors[r.perm[i]] = c;
    }
    Ok(ColoredDigraph { adjacency, colors })
}

/// Canonical relabeling of `g`. Apply it with [`apply_relabeling`].
pub fn canonical_labeling(g: &ColoredDigraph) -> Relabeling {
    let n = g.len();
    if n == 0 {
        return Relabeling { perm: vec![] };
    }
    let succs: Vec<Vec<usize>> = (0..n).map(|i| g.adjacency.succs(i)).collect();
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, s) in succs.iter().enumerate() {
        for &j in s {
            preds[j].push(i);
        }
    }
    let mut search = Search {
        succs: &succs,
        preds: &preds,
        best: None,
        automorphisms: Vec::new(),
    };
    let partition = Partition::from_colors(&g.colors);
    search.descend(partition, &mut Vec::new());
    let (_, order) = search.best.expect("search visits at least one leaf");
    let mut perm = vec![0; n];
    for (pos, &node) in order.iter().enumerate() {
        perm[node] = pos;
    }
    Relabeling { perm }
}

/// Canonical form of `g` (the relabeled graph).
pub fn canonical_form(g: &ColoredDigraph) -> ColoredDigraph {
    let r = canonical_labeling(g);
    apply_relabeling(g, &r).expect("canonical labeling is a bijection")
}

/// Ordered partition of the node set. `cell_of[v]` is the start position of
/// the cell holding `v`; cells are contiguous runs of `order`.
#[derive(Clone, Debug)]
struct Partition {
    order: Vec<usize>,
    cell_of: Vec<usize>,
    /// `cell_end[start]` is one past the last position of the cell at `start`.
    cell_end: Vec<usize>,
}

impl Partition {
    fn from_colors(colors: &[u32]) -> Partition {
        let n = colors.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&v| (colors[v], v));
        let mut p = Partition {
            order,
            cell_of: vec![0; n],
            cell_end: vec![0; n],
        };
        let mut start = 0;
        for pos in 0..n {
            if pos > 0 && colors[p.order[pos]] != colors[p.order[pos - 1]] {
                start = pos;
            }
            p.cell_of[p.order[pos]] = start;
        }
        p.recompute_ends();
        p
    }

    fn recompute_ends(&mut self) {
        let n = self.order.len();
        let mut pos = n;
        while pos > 0 {
            let start = self.cell_of[self.order[pos - 1]];
            self.cell_end[start] = pos;
            pos = start;
        }
    }

    fn is_discrete(&self) -> bool {
        let n = self.order.len();
        (0..n).all(|pos| self.cell_of[self.order[pos]] == pos)
    }

    /// Cells as `(start, end)` in order.
    fn cells(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut pos = 0;
        while pos < self.order.len() {
            let end = self.cell_end[pos];
            out.push((pos, end));
            pos = end;
        }
        out
    }

    /// First cell of maximal size among non-singletons.
    fn target_cell(&self) -> Option<(usize, usize)> {
        let mut best: Option<(usize, usize)> = None;
        for (s, e) in self.cells() {
            if e - s > 1 && best.is_none_or(|(bs, be)| e - s > be - bs) {
                best = Some((s, e));
            }
        }
        best
    }

    /// Moves `v` to the front of its cell as a singleton.
    fn individualize(&self, v: usize) -> Partition {
        let mut p = self.clone();
        let start = p.cell_of[v];
        let end = p.cell_end[start];
        let pos = p.order[start..end].iter().position(|&u| u == v).unwrap() + start;
        p.order[start..=pos].rotate_right(1);
        for &u in &p.order[start + 1..end] {
            p.cell_of[u] = start + 1;
        }
        p.cell_of[v] = start;
        p.cell_end[start] = start + 1;
        p.cell_end[start + 1] = end;
        p
    }

    /// Refines to the coarsest equitable partition below `self`.
    ///
    /// Each round splits every cell simultaneously by the sorted multiset of
    /// (neighbor cell, direction) pairs, computed against the previous round's
    /// cells. Larger signatures sort first inside a split cell.
    fn refine(&mut self, succs: &[Vec<usize>], preds: &[Vec<usize>]) {
        let n = self.order.len();
        let mut sigs: Vec<Vec<usize>> = vec![Vec::new(); n];
        loop {
            for v in 0..n {
                let sig = &mut sigs[v];
                sig.clear();
                sig.extend(succs[v].iter().map(|&u| 2 * self.cell_of[u]));
                sig.extend(preds[v].iter().map(|&u| 2 * self.cell_of[u] + 1));
                sig.sort_unstable();
            }
            let mut changed = false;
            let mut new_cell_of = self.cell_of.clone();
            for (start, end) in self.cells() {
                if end - start == 1 {
                    continue;
                }
                let cell = &mut self.order[start..end];
                cell.sort_by(|&a, &b| compare_signatures(&sigs[b], &sigs[a]));
                let mut sub = start;
                for pos in start..end {
                    if pos > start && sigs[self.order[pos]] != sigs[self.order[pos - 1]] {
                        sub = pos;
                        changed = true;
                    }
                    new_cell_of[self.order[pos]] = sub;
                }
            }
            self.cell_of = new_cell_of;
            if !changed {
                break;
            }
            self.recompute_ends();
        }
    }
}

/// Longer multisets first on a common prefix; otherwise lexicographic.
fn compare_signatures(a: &[usize], b: &[usize]) -> Ordering {
    a.len().cmp(&b.len()).then_with(|| a.cmp(b))
}

/// Row-major adjacency bits of the graph relabeled by `order`, packed
/// most-significant-bit first so that `Vec<u64>` comparison is bitwise
/// lexicographic.
fn certificate(order: &[usize], succs: &[Vec<usize>]) -> Vec<u64> {
    let n = order.len();
    let mut pos = vec![0; n];
    for (p, &v) in order.iter().enumerate() {
        pos[v] = p;
    }
    let mut bits = vec![0u64; (n * n).div_ceil(64)];
    for (v, s) in succs.iter().enumerate() {
        for &u in s {
            let bit = pos[v] * n + pos[u];
            bits[bit / 64] |= 1 << (63 - bit % 64);
        }
    }
    bits
}

struct Search<'a> {
    succs: &'a [Vec<usize>],
    preds: &'a [Vec<usize>],
    best: Option<(Vec<u64>, Vec<usize>)>,
    /// Automorphisms found so far, as node maps.
    automorphisms: Vec<Vec<usize>>,
}

impl Search<'_> {
    fn descend(&mut self, mut partition: Partition, path: &mut Vec<usize>) {
        partition.refine(self.succs, self.preds);
        let Some((start, end)) = partition.target_cell() else {
            debug_assert!(partition.is_discrete());
            self.leaf(partition.order);
            return;
        };
        let candidates: Vec<usize> = partition.order[start..end].to_vec();
        let mut explored: Vec<usize> = Vec::new();
        for v in candidates {
            if explored.iter().any(|&u| self.same_orbit(u, v, path)) {
                continue;
            }
            explored.push(v);
            path.push(v);
            let child = partition.individualize(v);
            self.descend(child, path);
            path.pop();
        }
    }

    fn leaf(&mut self, order: Vec<usize>) {
        let cert = certificate(&order, self.succs);
        match &self.best {
            None => self.best = Some((cert, order)),
            Some((best_cert, best_order)) => match cert.cmp(best_cert) {
                Ordering::Less => self.best = Some((cert, order)),
                Ordering::Equal => {
                    // same relabeled graph: best⁻¹ ∘ this is an automorphism
                    let n = order.len();
                    let mut auto = vec![0; n];
                    for p in 0..n {
                        auto[order[p]] = best_order[p];
                    }
                    if auto.iter().enumerate().any(|(i, &j)| i != j) {
                        self.automorphisms.push(auto);
                    }
                }
                Ordering::Greater => {}
            },
        }
    }

    /// Whether `u` and `v` share an orbit under the group generated by the
    /// known automorphisms that fix every node of `path`.
    fn same_orbit(&self, u: usize, v: usize, path: &[usize]) -> bool {
        let gens: Vec<&Vec<usize>> = self
            .automorphisms
            .iter()
            .filter(|a| path.iter().all(|&p| a[p] == p))
            .collect();
        if gens.is_empty() {
            return false;
        }
        let mut seen = vec![false; self.succs.len()];
        let mut stack = vec![u];
        seen[u] = true;
        while let Some(x) = stack.pop() {
            if x == v {
                return true;
            }
            for g in &gens {
                let y = g[x];
                if !seen[y] {
                    seen[y] = true;
                    stack.push(y);
                }
            }
        }
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn graph(n: usize, edges: &[(usize, usize)], colors: &[u32]) -> ColoredDigraph {
        ColoredDigraph::new(
            Adjacency::from_edges(n, edges.iter().copied()),
            colors.to_vec(),
        )
    }

    fn random_graph(rng: &mut ChaCha8Rng, n: usize, density: f64, ncolors: u32) -> ColoredDigraph {
        let mut adj = Adjacency::new(n);
        for i in 0..n {
            for j in 0..n {
                if i != j && rng.gen_bool(density) {
                    adj.set(i, j, true);
                }
            }
        }
        let colors = (0..n).map(|_| rng.gen_range(1..=ncolors)).collect();
        ColoredDigraph::new(adj, colors)
    }

    fn random_color_preserving_perm(rng: &mut ChaCha8Rng, n: usize) -> Relabeling {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(rng);
        Relabeling { perm }
    }

    #[test]
    fn single_node_identity() {
        let g = graph(1, &[], &[4]);
        assert_eq!(canonical_labeling(&g), Relabeling::identity(1));
    }

    #[test]
    fn three_cycle_under_all_permutations() {
        let g = graph(3, &[(0, 1), (1, 2), (2, 0)], &[1, 1, 2]);
        let c = canonical_form(&g);
        for perm in [
            [0, 1, 2],
            [0, 2, 1],
            [1, 0, 2],
            [1, 2, 0],
            [2, 0, 1],
            [2, 1, 0],
        ] {
            let r = Relabeling {
                perm: perm.to_vec(),
            };
            let h = apply_relabeling(&g, &r).unwrap();
            assert_eq!(canonical_form(&h), c);
        }
    }

    #[test]
    fn relabeling_preserves_colors_and_inverse_restores() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = random_graph(&mut rng, 12, 0.3, 3);
        let r = canonical_labeling(&g);
        let c = apply_relabeling(&g, &r).unwrap();
        for i in 0..g.len() {
            assert_eq!(g.colors[i], c.colors[r.apply(i)]);
        }
        assert_eq!(apply_relabeling(&c, &r.inverse()).unwrap(), g);
        assert_eq!(apply_relabeling(&g, &Relabeling::identity(12)).unwrap(), g);
    }

    #[test]
    fn relabeling_size_mismatch() {
        let g = graph(2, &[(0, 1)], &[1, 1]);
        assert!(apply_relabeling(&g, &Relabeling::identity(3)).is_err());
        assert!(apply_relabeling(&g, &Relabeling { perm: vec![0, 0] }).is_err());
    }

    #[test]
    fn color_values_only_matter_by_order() {
        let g = graph(3, &[(0, 1), (1, 2)], &[1, 2, 3]);
        let h = graph(3, &[(0, 1), (1, 2)], &[10, 20, 30]);
        let (cg, ch) = (canonical_form(&g), canonical_form(&h));
        assert_eq!(cg.adjacency, ch.adjacency);
    }

    #[test]
    fn scramble_invariance_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.gen_range(1..=25);
            let density = rng.gen_range(0.1..0.5);
            let ncolors = rng.gen_range(1..=5);
            let g = random_graph(&mut rng, n, density, ncolors);
            let r = random_color_preserving_perm(&mut rng, n);
            let h = apply_relabeling(&g, &r).unwrap();
            assert_eq!(canonical_form(&g), canonical_form(&h));
        }
    }

    #[test]
    fn idempotent_on_canonical_graph() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let g = random_graph(&mut rng, 15, 0.3, 2);
            let c = canonical_form(&g);
            assert_eq!(canonical_form(&c), c);
        }
    }

    #[test]
    fn symmetric_graphs_stay_fast() {
        // disjoint union of 8 directed 3-cycles, all one color: |Aut| = 8!·3^8
        let mut edges = Vec::new();
        for k in 0..8 {
            let b = 3 * k;
            edges.extend([(b, b + 1), (b + 1, b + 2), (b + 2, b)]);
        }
        let g = graph(24, &edges, &[1; 24]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = random_color_preserving_perm(&mut rng, 24);
        let h = apply_relabeling(&g, &r).unwrap();
        assert_eq!(canonical_form(&g), canonical_form(&h));
    }

    #[test]
    fn sparse_storage_behaves_like_dense() {
        let mut a = Adjacency::Sparse {
            succs: vec![Vec::new(); 4],
        };
        a.set(0, 3, true);
        a.set(0, 1, true);
        a.set(2, 0, true);
        a.set(0, 1, false);
        assert_eq!(a.edges(), vec![(0, 3), (2, 0)]);
        assert_eq!(a.preds(0), vec![2]);
        assert_eq!(
            Adjacency::from_edges(4, [(0, 3), (2, 0)]).edges(),
            a.edges()
        );
    }
}
