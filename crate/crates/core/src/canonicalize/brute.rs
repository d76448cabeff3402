//! Exhaustive isomorphism search, used as a test oracle.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::{BatchedEinsum, SubstitutionWitness};

use super::verify_witness;

pub const DEFAULT_BRUTE_FORCE_BUDGET: u128 = 10_000_000;

fn factorial(n: usize) -> u128 {
    (1..=n as u128).product()
}

/// All permutations of `0..n` in lexicographic order.
fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut p: Vec<usize> = (0..n).collect();
    let mut out = vec![p.clone()];
    loop {
        let Some(i) = (1..n).rev().find(|&i| p[i - 1] < p[i]) else {
            return out;
        };
        let j = (i..n).rev().find(|&j| p[j] > p[i - 1]).unwrap();
        p.swap(i - 1, j);
        p[i..].reverse();
        out.push(p.clone());
    }
}

/// [`brute_force_isomorphic_with_budget`] with the default budget.
pub fn brute_force_isomorphic(
    e1: &BatchedEinsum,
    e2: &BatchedEinsum,
) -> Result<Option<SubstitutionWitness>> {
    brute_force_isomorphic_with_budget(e1, e2, DEFAULT_BRUTE_FORCE_BUDGET)
}

/// Tries every row, slot and index bijection. The array bijection is read
/// off the operand matrices for each candidate (every array occupies some
/// position, so no candidate is missed), and each candidate is checked with
/// [`verify_witness`].
///
/// Fails with [`Error::BudgetExceeded`] when `b!·n!·|I|!·|A|!` exceeds
/// `budget`.
pub fn brute_force_isomorphic_with_budget(
    e1: &BatchedEinsum,
    e2: &BatchedEinsum,
    budget: u128,
) -> Result<Option<SubstitutionWitness>> {
    e1.check()?;
    e2.check()?;
    let idx1: Vec<String> = e1.all_indices().into_iter().collect();
    let idx2: Vec<String> = e2.all_indices().into_iter().collect();
    let arrays1 = e1.universe();
    let arrays2 = e2.universe();
    let needed =
        factorial(e1.b()) * factorial(e1.n()) * factorial(idx1.len()) * factorial(arrays1.len());
    if needed > budget {
        return Err(Error::BudgetExceeded { needed, budget });
    }
    if e1.b() != e2.b()
        || e1.n() != e2.n()
        || idx1.len() != idx2.len()
        || arrays1.len() != arrays2.len()
    {
        return Ok(None);
    }

    let row_perms = permutations(e1.b());
    let slot_perms = permutations(e1.n());
    for idx_perm in permutations(idx1.len()) {
        let sigma_idx: BTreeMap<String, String> = idx_perm
            .iter()
            .enumerate()
            .map(|(k, &p)| (idx2[k].clone(), idx1[p].clone()))
            .collect();
        for sigma_slot in &slot_perms {
            for sigma_row in &row_perms {
                let mut sigma_arg = BTreeMap::new();
                let mut consistent = true;
                'fill: for (i, &ri) in sigma_row.iter().enumerate() {
                    for (j, &sj) in sigma_slot.iter().enumerate() {
                        let from = &e2.args[ri][sj].name;
                        let to = &e1.args[i][j].name;
                        if let Some(prev) = sigma_arg.insert(from.clone(), to.clone()) {
                            if prev != *to {
                                consistent = false;
                                break 'fill;
                            }
                        }
                    }
                }
                if !consistent {
                    continue;
                }
                let w = SubstitutionWitness {
                    sigma_row: sigma_row.clone(),
                    sigma_slot: sigma_slot.clone(),
                    sigma_idx: sigma_idx.clone(),
                    sigma_arg,
                };
                if verify_witness(e1, e2, &w) {
                    return Ok(Some(w));
                }
            }
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ArrayMeta, DtypeCode, IndexList};

    #[test]
    fn permutation_enumeration() {
        assert_eq!(permutations(0), vec![Vec::<usize>::new()]);
        assert_eq!(permutations(3).len(), 6);
        assert_eq!(permutations(3)[1], vec![0, 2, 1]);
    }

    #[test]
    fn budget_is_enforced() {
        let arrays: Vec<ArrayMeta> = (0..6)
            .map(|k| ArrayMeta::new(format!("T{k}"), vec![2], DtypeCode::Float64))
            .collect();
        let e = BatchedEinsum::new(
            IndexList::from_letters("a"),
            (0..6).map(|_| IndexList::from_letters("a")).collect(),
            vec![arrays],
        );
        assert!(matches!(
            brute_force_isomorphic_with_budget(&e, &e, 1000),
            Err(Error::BudgetExceeded { .. })
        ));
    }
}
