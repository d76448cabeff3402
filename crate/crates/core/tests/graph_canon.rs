use std::collections::HashMap;

use feinsum::graph_canon::{
    apply_relabeling, canonical_form, canonical_labeling, Adjacency, ColoredDigraph, Relabeling,
};
use proptest::prelude::*;

fn graph(n: usize, edges: &[(usize, usize)], colors: Vec<u32>) -> ColoredDigraph {
    ColoredDigraph::new(Adjacency::from_edges(n, edges.iter().copied()), colors)
}

prop_compose! {
    fn colored_digraph(max_n: usize)(n in 1..=max_n)(
        colors in prop::collection::vec(1u32..=4, n),
        edges in prop::collection::vec((0..n, 0..n), 0..=3 * n),
        perm in Just((0..n).collect::<Vec<usize>>()).prop_shuffle(),
    ) -> (ColoredDigraph, Relabeling) {
        let edges: Vec<(usize, usize)> = edges.into_iter().filter(|(i, j)| i != j).collect();
        (graph(colors.len(), &edges, colors), Relabeling { perm })
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn relabeled_graphs_share_a_canonical_form((g, r) in colored_digraph(40)) {
        let h = apply_relabeling(&g, &r).unwrap();
        prop_assert_eq!(canonical_form(&g), canonical_form(&h));
    }

    #[test]
    fn canonical_form_is_idempotent_and_a_bijection((g, _) in colored_digraph(40)) {
        let l = canonical_labeling(&g);
        prop_assert!(l.is_bijection());
        let c = canonical_form(&g);
        prop_assert_eq!(canonical_form(&c), c.clone());
        prop_assert_eq!(c.adjacency.edge_count(), g.adjacency.edge_count());
    }
}

fn all_perms(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in all_perms(n - 1) {
        for k in 0..n {
            let mut q = p.clone();
            q.insert(k, n - 1);
            out.push(q);
        }
    }
    out
}

type Code = (Vec<u32>, Vec<bool>);

fn encode(h: &ColoredDigraph) -> Code {
    let n = h.len();
    (
        h.colors.clone(),
        (0..n * n)
            .map(|k| h.adjacency.has_edge(k / n, k % n))
            .collect(),
    )
}

/// Minimum code over all relabelings.
fn oracle(g: &ColoredDigraph) -> Code {
    all_perms(g.len())
        .into_iter()
        .map(|perm| encode(&apply_relabeling(g, &Relabeling { perm }).unwrap()))
        .min()
        .unwrap()
}

#[test]
fn exhaustive_small_graphs_are_told_apart_exactly() {
    for n in 1..=4usize {
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|(i, j)| i != j)
            .collect();
        let mut by_canon: HashMap<Code, Code> = HashMap::new();
        let mut by_oracle: HashMap<Code, Code> = HashMap::new();
        for mask in 0u32..1 << pairs.len() {
            let edges: Vec<(usize, usize)> = pairs
                .iter()
                .enumerate()
                .filter(|(k, _)| mask >> k & 1 == 1)
                .map(|(_, &p)| p)
                .collect();
            for cmask in 0u32..1 << n {
                let colors = (0..n).map(|i| 1 + (cmask >> i & 1)).collect();
                let g = graph(n, &edges, colors);
                let c = encode(&canonical_form(&g));
                let o = oracle(&g);
                if let Some(prev) = by_canon.insert(c.clone(), o.clone()) {
                    assert_eq!(prev, o, "non-isomorphic graphs share a canonical form");
                }
                if let Some(prev) = by_oracle.insert(o, c.clone()) {
                    assert_eq!(prev, c, "isomorphic graphs have different canonical forms");
                }
            }
        }
        assert_eq!(by_canon.len(), by_oracle.len());
    }
}
