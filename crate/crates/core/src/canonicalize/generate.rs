//! Seeded random instances and random renamings of them.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{ArrayMeta, BatchedEinsum, DtypeCode, IndexList, SubstitutionWitness};

/// Parameters for [`generate_random`].
#[derive(Clone, Debug)]
pub struct GenParams {
    /// Rows.
    pub b: usize,
    /// Operand slots.
    pub n: usize,
    /// Upper bound on distinct index symbols.
    pub max_indices: usize,
    /// Upper bound on operand dimensionality (at least 1).
    pub max_dim: usize,
    /// Axis lengths are drawn from this pool.
    pub lengths: Vec<usize>,
    /// Dtypes are drawn from this pool.
    pub dtypes: Vec<DtypeCode>,
    /// Probability that an operand reuses an existing array of the same shape.
    pub share_prob: f64,
    pub seed: u64,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            b: 2,
            n: 3,
            max_indices: 4,
            max_dim: 3,
            lengths: vec![2, 3],
            dtypes: vec![DtypeCode::Float32, DtypeCode::Float64],
            share_prob: 0.5,
            seed: 0,
        }
    }
}

/// A valid, encodable batched einsum determined entirely by `p`.
pub fn generate_random(p: &GenParams) -> Result<BatchedEinsum> {
    if p.b == 0 || p.n == 0 {
        return Err(Error::InfeasibleParams("b and n must be positive".into()));
    }
    if p.max_indices == 0 || p.max_dim == 0 {
        return Err(Error::InfeasibleParams(
            "max_indices and max_dim must be positive".into(),
        ));
    }
    if p.lengths.is_empty() || p.lengths.contains(&0) || p.dtypes.is_empty() {
        return Err(Error::InfeasibleParams(
            "length and dtype pools must be nonempty and positive".into(),
        ));
    }
    if !(0.0..=1.0).contains(&p.share_prob) {
        return Err(Error::InfeasibleParams(
            "share_prob must lie in [0, 1]".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let k = rng.gen_range(1..=p.max_indices);
    let lengths: Vec<usize> = (0..k)
        .map(|_| *p.lengths.choose(&mut rng).unwrap())
        .collect();

    let raw: Vec<Vec<usize>> = (0..p.n)
        .map(|_| {
            let d = rng.gen_range(1..=p.max_dim);
            (0..d).map(|_| rng.gen_range(0..k)).collect()
        })
        .collect();
    // compact to the symbols actually used, named in first-use order
    let mut rename: BTreeMap<usize, usize> = BTreeMap::new();
    for &s in raw.iter().flatten() {
        let next = rename.len();
        rename.entry(s).or_insert(next);
    }
    let name = |s: usize| format!("i{}", rename[&s]);
    let i_in: Vec<IndexList> = raw
        .iter()
        .map(|l| IndexList(l.iter().map(|&s| name(s)).collect()))
        .collect();
    let mut used: Vec<usize> = rename.keys().copied().collect();
    used.shuffle(&mut rng);
    let n_out = rng.gen_range(0..=used.len());
    let i_out = IndexList(used[..n_out].iter().map(|&s| name(s)).collect());

    let mut arrays: Vec<ArrayMeta> = Vec::new();
    let mut args = Vec::with_capacity(p.b);
    for _ in 0..p.b {
        let mut row = Vec::with_capacity(p.n);
        for l in &raw {
            let shape: Vec<usize> = l.iter().map(|&s| lengths[s]).collect();
            let candidates: Vec<&ArrayMeta> = arrays.iter().filter(|a| a.shape == shape).collect();
            let reuse = !candidates.is_empty() && rng.gen_bool(p.share_prob);
            let a = if reuse {
                (*candidates.choose(&mut rng).unwrap()).clone()
            } else {
                let a = ArrayMeta::new(
                    format!("T{}", arrays.len()),
                    shape,
                    *p.dtypes.choose(&mut rng).unwrap(),
                );
                arrays.push(a.clone());
                a
            };
            row.push(a);
        }
        args.push(row);
    }
    BatchedEinsum::checked(i_out, i_in, args)
}

/// Renames indices and arrays and permutes rows and slots at random.
///
/// Returns the scrambled einsum `s` and a witness for `s ≃ e`.
pub fn scramble(e: &BatchedEinsum, seed: u64) -> (BatchedEinsum, SubstitutionWitness) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut row_perm: Vec<usize> = (0..e.b()).collect();
    row_perm.shuffle(&mut rng);
    let mut slot_perm: Vec<usize> = (0..e.n()).collect();
    slot_perm.shuffle(&mut rng);

    let indices: Vec<String> = e.all_indices().into_iter().collect();
    let mut fresh_idx: Vec<String> = if indices.len() <= 26 {
        (b'a'..=b'z').map(|c| char::from(c).to_string()).collect()
    } else {
        (0..indices.len()).map(|k| format!("s{k}")).collect()
    };
    fresh_idx.shuffle(&mut rng);
    let idx_map: BTreeMap<&str, String> =
        indices.iter().map(String::as_str).zip(fresh_idx).collect();

    let arrays: Vec<String> = e.universe().into_keys().collect();
    let mut fresh_arr: Vec<String> = (0..arrays.len()).map(|k| format!("X{k}")).collect();
    fresh_arr.shuffle(&mut rng);
    let arr_map: BTreeMap<&str, String> =
        arrays.iter().map(String::as_str).zip(fresh_arr).collect();

    let map_list =
        |l: &IndexList| IndexList(l.iter().map(|s| idx_map[s.as_str()].clone()).collect());
    // original slot j lands at slot_perm[j], original row i at row_perm[i]
    let mut i_in = vec![IndexList::default(); e.n()];
    for (j, l) in e.i_in.iter().enumerate() {
        i_in[slot_perm[j]] = map_list(l);
    }
    let mut args = vec![Vec::new(); e.b()];
    for (i, row) in e.args.iter().enumerate() {
        let mut new_row = vec![ArrayMeta::new("", vec![], DtypeCode::Float64); e.n()];
        for (j, a) in row.iter().enumerate() {
            new_row[slot_perm[j]] =
                ArrayMeta::new(arr_map[a.name.as_str()].clone(), a.shape.clone(), a.dtype);
        }
        args[row_perm[i]] = new_row;
    }
    let scrambled = BatchedEinsum::new(map_list(&e.i_out), i_in, args);

    let w = SubstitutionWitness {
        sigma_row: crate::model::invert_perm(&row_perm),
        sigma_slot: crate::model::invert_perm(&slot_perm),
        sigma_idx: idx_map
            .iter()
            .map(|(k, v)| (k.to_string(), v.clone()))
            .collect(),
        sigma_arg: arr_map
            .iter()
            .map(|(k, v)| (k.to_string(), v.clone()))
            .collect(),
    };
    (scrambled, w)
}
