//! Canonical forms of batched einsums and isomorphism checking.

mod brute;
mod generate;

use std::collections::{BTreeMap, BTreeSet};

pub use brute::{
    brute_force_isomorphic, brute_force_isomorphic_with_budget, DEFAULT_BRUTE_FORCE_BUDGET,
};
pub use generate::{generate_random, scramble, GenParams};

use crate::error::Result;
use crate::graph_canon::canonical_labeling;
use crate::induced_graph::{
    default_arg_name, default_index_name, to_batched_einsum, to_induced_graph,
};
use crate::model::{BatchedEinsum, SubstitutionWitness};

/// Canonical form of a batched einsum plus the maps back to the input.
///
/// All maps go from the canonical form to the input: canonical row `r` is
/// input row `sigma_row[r]`, canonical slot `j` is input slot
/// `sigma_slot[j]`, and canonical symbol names map to input names.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CanonResult {
    pub canonical: BatchedEinsum,
    pub sigma_arg: BTreeMap<String, String>,
    pub sigma_idx: BTreeMap<String, String>,
    pub sigma_row: Vec<usize>,
    pub sigma_slot: Vec<usize>,
}

impl CanonResult {
    /// Witness for `canonical ≃ input`.
    pub fn witness(&self) -> SubstitutionWitness {
        SubstitutionWitness {
            sigma_row: self.sigma_row.clone(),
            sigma_slot: self.sigma_slot.clone(),
            sigma_idx: self
                .sigma_idx
                .iter()
                .map(|(c, o)| (o.clone(), c.clone()))
                .collect(),
            sigma_arg: self
                .sigma_arg
                .iter()
                .map(|(c, o)| (o.clone(), c.clone()))
                .collect(),
        }
    }
}

/// Canonicalizes with the default index (`a`, `b`, …) and argument
/// (`A0`, `A1`, …) names.
pub fn canonicalize(e: &BatchedEinsum) -> Result<CanonResult> {
    canonicalize_with(e, &default_index_name, &default_arg_name)
}

/// Canonicalizes with caller-chosen naming functions (1-based inputs).
pub fn canonicalize_with(
    e: &BatchedEinsum,
    index_name: &dyn Fn(usize) -> String,
    arg_name: &dyn Fn(usize) -> String,
) -> Result<CanonResult> {
    let g = to_induced_graph(e)?;
    let r = canonical_labeling(&g.graph);
    let relabeled = g.relabel(&r)?;
    let rec = to_batched_einsum(&relabeled, index_name, arg_name)?;
    if rec.einsum.equals(e) {
        // Among the automorphisms of an already canonical input, report the identity.
        return Ok(CanonResult {
            sigma_arg: e.universe().into_keys().map(|s| (s.clone(), s)).collect(),
            sigma_idx: e
                .all_indices()
                .into_iter()
                .map(|s| (s.clone(), s))
                .collect(),
            sigma_row: (0..e.b()).collect(),
            sigma_slot: (0..e.n()).collect(),
            canonical: rec.einsum,
        });
    }

    let sigma_idx = rec
        .index_inferred
        .iter()
        .map(|(node, &k)| (index_name(k), relabeled.iota_index[node].clone()))
        .collect();
    let sigma_arg = rec
        .arg_inferred
        .iter()
        .map(|(node, &k)| (arg_name(k), relabeled.iota_arg[node].clone()))
        .collect();
    let mut sigma_row = vec![0; e.b()];
    for (node, &k) in &rec.output_inferred {
        sigma_row[k - 1] = relabeled.iota_output[node];
    }
    let mut sigma_slot = vec![0; e.n()];
    for (node, &k) in &rec.arg_pos_inferred {
        sigma_slot[k - 1] = relabeled.iota_arg_pos[node];
    }
    Ok(CanonResult {
        canonical: rec.einsum,
        sigma_arg,
        sigma_idx,
        sigma_row,
        sigma_slot,
    })
}

/// Witness for `e1 ≃ e2` when their canonical forms agree, `None` otherwise.
pub fn is_isomorphic(
    e1: &BatchedEinsum,
    e2: &BatchedEinsum,
) -> Result<Option<SubstitutionWitness>> {
    let c1 = canonicalize(e1)?;
    let c2 = canonicalize(e2)?;
    Ok(compose(&c1, &c2))
}

/// Combines two canonicalizations of the same canonical form into a witness
/// for `e1 ≃ e2`.
pub(crate) fn compose(c1: &CanonResult, c2: &CanonResult) -> Option<SubstitutionWitness> {
    if !c1.canonical.equals(&c2.canonical) {
        return None;
    }
    let mut sigma_row = vec![0; c1.sigma_row.len()];
    for (r, &orig) in c1.sigma_row.iter().enumerate() {
        sigma_row[orig] = c2.sigma_row[r];
    }
    let mut sigma_slot = vec![0; c1.sigma_slot.len()];
    for (j, &orig) in c1.sigma_slot.iter().enumerate() {
        sigma_slot[orig] = c2.sigma_slot[j];
    }
    let sigma_idx = c2
        .sigma_idx
        .iter()
        .map(|(canon, name2)| (name2.clone(), c1.sigma_idx[canon].clone()))
        .collect();
    let sigma_arg = c2
        .sigma_arg
        .iter()
        .map(|(canon, name2)| (name2.clone(), c1.sigma_arg[canon].clone()))
        .collect();
    Some(SubstitutionWitness {
        sigma_row,
        sigma_slot,
        sigma_idx,
        sigma_arg,
    })
}

fn is_permutation(p: &[usize], n: usize) -> bool {
    p.len() == n && p.iter().copied().collect::<BTreeSet<_>>() == (0..n).collect()
}

fn is_bijection(
    m: &BTreeMap<String, String>,
    domain: &BTreeSet<String>,
    codomain: &BTreeSet<String>,
) -> bool {
    m.keys().cloned().collect::<BTreeSet<_>>() == *domain
        && m.values().cloned().collect::<BTreeSet<_>>() == *codomain
        && m.len() == codomain.len()
}

/// Whether `w` witnesses `e1 ≃ e2`: rows, slots, indices and arrays are
/// bijections, and for every row `i` and slot `j` the operand
/// `e1[i][j]` is `σ_arg(e2[σ_row(i)][σ_slot(j)])` with equal shape and
/// dtype, and its index list is the image of `e2`'s under `σ_idx`.
pub fn verify_witness(e1: &BatchedEinsum, e2: &BatchedEinsum, w: &SubstitutionWitness) -> bool {
    if e1.b() != e2.b() || e1.n() != e2.n() {
        return false;
    }
    if !is_permutation(&w.sigma_row, e1.b()) || !is_permutation(&w.sigma_slot, e1.n()) {
        return false;
    }
    let idx1 = e1.all_indices();
    let idx2 = e2.all_indices();
    if idx1.len() != idx2.len() || !is_bijection(&w.sigma_idx, &idx2, &idx1) {
        return false;
    }
    let arr1: BTreeSet<String> = e1.universe().into_keys().collect();
    let arr2: BTreeSet<String> = e2.universe().into_keys().collect();
    if arr1.len() != arr2.len() || !is_bijection(&w.sigma_arg, &arr2, &arr1) {
        return false;
    }
    let map_list = |l: &crate::model::IndexList| -> Vec<&str> {
        l.iter().map(|s| w.sigma_idx[s].as_str()).collect()
    };
    if e1.i_out.len() != e2.i_out.len()
        || e1.i_out.iter().map(String::as_str).ne(map_list(&e2.i_out))
    {
        return false;
    }
    for j in 0..e1.n() {
        let l2 = &e2.i_in[w.sigma_slot[j]];
        if e1.i_in[j].len() != l2.len() || e1.i_in[j].iter().map(String::as_str).ne(map_list(l2)) {
            return false;
        }
    }
    for i in 0..e1.b() {
        for j in 0..e1.n() {
            let a1 = &e1.args[i][j];
            let a2 = &e2.args[w.sigma_row[i]][w.sigma_slot[j]];
            if w.sigma_arg[&a2.name] != a1.name || a1.shape != a2.shape || a1.dtype != a2.dtype {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ArrayMeta, DtypeCode, IndexList};
    use crate::notation::print_classic;

    fn f64a(name: &str, shape: &[usize]) -> ArrayMeta {
        ArrayMeta::new(name, shape.to_vec(), DtypeCode::Float64)
    }

    fn single(ins: &[&str], out: &str, args: Vec<ArrayMeta>) -> BatchedEinsum {
        BatchedEinsum::new(
            IndexList::from_letters(out),
            ins.iter().map(|s| IndexList::from_letters(s)).collect(),
            vec![args],
        )
    }

    #[test]
    fn two_operand_reduction_example() {
        let e1 = single(
            &["ij", "ik"],
            "i",
            vec![f64a("A", &[72, 18]), f64a("B", &[72, 18])],
        );
        let e2 = single(
            &["ik", "ij"],
            "i",
            vec![f64a("X", &[72, 18]), f64a("Y", &[72, 18])],
        );
        let c1 = canonicalize(&e1).unwrap();
        let c2 = canonicalize(&e2).unwrap();
        assert_eq!(
            print_classic(&c1.canonical).unwrap(),
            "einsum: ab,ac->a\nrow: A0,A1\narray: A0 float64 72x18\narray: A1 float64 72x18\n"
        );
        assert!(c1.canonical.equals(&c2.canonical));
        assert!(verify_witness(&c1.canonical, &e1, &c1.witness()));
    }

    #[test]
    fn idempotent_with_identity_maps() {
        let e = single(
            &["ij", "jk"],
            "ik",
            vec![f64a("A", &[3, 4]), f64a("B", &[4, 5])],
        );
        let c = canonicalize(&e).unwrap();
        let cc = canonicalize(&c.canonical).unwrap();
        assert!(cc.canonical.equals(&c.canonical));
        assert!(cc.sigma_idx.iter().all(|(k, v)| k == v));
        assert!(cc.sigma_arg.iter().all(|(k, v)| k == v));
    }

    #[test]
    fn transposed_output_is_not_isomorphic() {
        let e1 = single(
            &["ij", "jk"],
            "ik",
            vec![f64a("A", &[4, 4]), f64a("B", &[4, 4])],
        );
        let e2 = single(
            &["ij", "jk"],
            "ki",
            vec![f64a("A", &[4, 4]), f64a("B", &[4, 4])],
        );
        assert!(is_isomorphic(&e1, &e2).unwrap().is_none());
    }

    #[test]
    fn identity_witness_verifies() {
        let e = single(
            &["ij", "jk"],
            "ik",
            vec![f64a("A", &[3, 4]), f64a("B", &[4, 5])],
        );
        assert!(verify_witness(&e, &e, &SubstitutionWitness::identity(&e)));
        let mut w = SubstitutionWitness::identity(&e);
        w.sigma_slot = vec![1, 0];
        assert!(!verify_witness(&e, &e, &w));
    }
}
