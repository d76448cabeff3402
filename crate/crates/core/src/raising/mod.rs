//! Functional batched einsums: operands given as expressions, raised from
//! kernels and matched against reference einsums.

mod expr;
mod kernel;

use std::collections::{BTreeMap, BTreeSet};

pub use expr::{parse_operand, Expr, Func, OperandExpr};
pub use kernel::{evaluate_kernel, parse_kernel, Factor, FunctionalKernel, Statement};

use crate::canonicalize::{canonicalize, compose};
use crate::error::{Error, Result};
use crate::model::eval::evaluate_with;
use crate::model::{ArrayMeta, BatchedEinsum, IndexList, Tensor};
use crate::notation::render_key;

/// A batched einsum whose arrays stand for operand expressions.
#[derive(Clone, Debug, PartialEq)]
pub struct FunctionalBatchedEinsum {
    pub skeleton: BatchedEinsum,
    pub operand_map: BTreeMap<String, OperandExpr>,
}

impl FunctionalBatchedEinsum {
    /// Every operand is its own array, accessed directly.
    pub fn idealized(skeleton: BatchedEinsum) -> Self {
        let operand_map = skeleton
            .universe()
            .values()
            .map(|a| {
                (
                    a.name.clone(),
                    OperandExpr::identity(a.name.clone(), a.dim()),
                )
            })
            .collect();
        FunctionalBatchedEinsum {
            skeleton,
            operand_map,
        }
    }
}

/// Evaluates each row with every operand `A[...]` replaced by
/// `operand_map[A](...)`, reading external arrays from `bindings`.
pub fn evaluate_functional(
    f: &FunctionalBatchedEinsum,
    bindings: &BTreeMap<String, Tensor>,
) -> Result<Vec<Tensor>> {
    f.skeleton.check()?;
    for a in f.skeleton.universe().values() {
        let op = f
            .operand_map
            .get(&a.name)
            .ok_or_else(|| Error::MissingBinding(a.name.clone()))?;
        if op.arity() != a.dim() {
            return Err(Error::BindingMismatch {
                name: a.name.clone(),
                reason: format!(
                    "operand takes {} parameters, array has {} axes",
                    op.arity(),
                    a.dim()
                ),
            });
        }
        for (array, args) in op.accesses() {
            let t = bindings
                .get(array)
                .ok_or_else(|| Error::MissingBinding(array.to_string()))?;
            if t.shape.len() != args.len() {
                return Err(Error::BindingMismatch {
                    name: array.to_string(),
                    reason: format!("{} axes, accessed with {}", t.shape.len(), args.len()),
                });
            }
        }
    }
    let mut out = Vec::with_capacity(f.skeleton.b());
    for row in &f.skeleton.args {
        let ops: Vec<&OperandExpr> = row.iter().map(|a| &f.operand_map[&a.name]).collect();
        let failure = std::cell::RefCell::new(None);
        let t = evaluate_with(
            &f.skeleton,
            |slot, idx| {
                ops[slot].eval(idx, bindings).unwrap_or_else(|m| {
                    failure
                        .borrow_mut()
                        .get_or_insert((row[slot].name.clone(), m));
                    Default::default()
                })
            },
            row.iter().map(|a| &a.dtype),
        );
        if let Some((name, reason)) = failure.into_inner() {
            return Err(Error::BindingMismatch { name, reason });
        }
        out.push(t);
    }
    Ok(out)
}

/// Values of an operand over the whole of `meta`'s shape, stored with
/// `meta`'s dtype (imaginary parts are dropped for real dtypes).
pub fn materialize(
    op: &OperandExpr,
    meta: &ArrayMeta,
    bindings: &BTreeMap<String, Tensor>,
) -> Result<Tensor> {
    let mut t = Tensor::zeros(meta.shape.clone(), meta.dtype);
    let mut idx = vec![0usize; meta.dim()];
    for off in 0..meta.len() {
        let v = op
            .eval(&idx, bindings)
            .map_err(|reason| Error::BindingMismatch {
                name: meta.name.clone(),
                reason,
            })?;
        t.set_flat(off, v);
        for d in (0..idx.len()).rev() {
            idx[d] += 1;
            if idx[d] < meta.shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    Ok(t)
}

/// True iff every operand is `λ i1…id. P[i1,…,id]` and no two operands read
/// the same array.
pub fn is_idealized(f: &FunctionalBatchedEinsum) -> bool {
    let mut seen = BTreeSet::new();
    f.skeleton.universe().values().all(|a| {
        let Some(op) = f.operand_map.get(&a.name) else {
            return false;
        };
        match &op.body {
            Expr::Access { array, args } => {
                op.arity() == a.dim()
                    && args.iter().copied().eq(0..op.arity())
                    && seen.insert(array.clone())
            }
            _ => false,
        }
    })
}

/// Result of raising a kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct Raised {
    pub functional: FunctionalBatchedEinsum,
    /// Skeleton array name → the def or array name it came from.
    pub sigma_arg: BTreeMap<String, String>,
    /// Skeleton index → kernel loop index.
    pub sigma_idx: BTreeMap<String, String>,
}

/// Builds the functional batched einsum of a kernel: one row per statement,
/// one slot per factor. Factors get the same skeleton array iff their
/// operand expressions are structurally identical and their shapes agree.
pub fn raise_to_batched_einsum(k: &FunctionalKernel) -> Result<Raised> {
    let first = k
        .statements
        .first()
        .ok_or_else(|| Error::Raising("kernel has no statements".into()))?;
    let extent = |i: &str| {
        k.extent(i)
            .ok_or_else(|| Error::Raising(format!("index `{i}` has no bound in the domain")))
    };

    // index lists of the first statement define the skeleton's notation
    let i_out = IndexList(first.out_indices.clone());
    let i_in: Vec<IndexList> = first
        .factors
        .iter()
        .map(|f| IndexList(f.args.clone()))
        .collect();

    let mut fingerprints: BTreeMap<(String, Vec<usize>), String> = BTreeMap::new();
    let mut operand_map = BTreeMap::new();
    let mut sigma_arg = BTreeMap::new();
    let mut args = Vec::with_capacity(k.statements.len());
    for (s, st) in k.statements.iter().enumerate() {
        check_statement(st, s)?;
        if st.factors.len() != first.factors.len() {
            return Err(Error::Raising(format!(
                "statement {} has {} factors, the first has {}",
                s + 1,
                st.factors.len(),
                first.factors.len()
            )));
        }
        let rename = unify(first, st).ok_or_else(|| {
            Error::Raising(format!(
                "statement {} does not share the first statement's index pattern",
                s + 1
            ))
        })?;
        for (a, b) in &rename {
            if extent(a)? != extent(b)? {
                return Err(Error::Raising(format!(
                    "statement {}: index `{b}` and `{a}` have different extents",
                    s + 1
                )));
            }
        }
        let mut row = Vec::with_capacity(st.factors.len());
        for f in &st.factors {
            let op = k
                .operand(&f.callee)
                .ok_or_else(|| Error::Raising(format!("unknown operand `{}`", f.callee)))?;
            if op.arity() != f.args.len() {
                return Err(Error::Raising(format!(
                    "`{}` takes {} arguments, called with {}",
                    f.callee,
                    op.arity(),
                    f.args.len()
                )));
            }
            let shape: Vec<usize> = f.args.iter().map(|a| extent(a)).collect::<Result<_>>()?;
            for (array, sub) in op.accesses() {
                let meta = &k.arrays[array];
                for (&p, &n) in sub.iter().zip(&meta.shape) {
                    if shape[p] > n {
                        return Err(Error::Raising(format!(
                            "`{}` reads `{array}` out of bounds over the loop domain",
                            f.callee
                        )));
                    }
                }
            }
            let key = (op.fingerprint(), shape.clone());
            let next = fingerprints.len();
            let name = fingerprints
                .entry(key)
                .or_insert_with(|| format!("S{next}"))
                .clone();
            if !operand_map.contains_key(&name) {
                sigma_arg.insert(name.clone(), f.callee.clone());
                operand_map.insert(name.clone(), op.clone());
            }
            row.push(ArrayMeta::new(name, shape, k.operand_dtype(&op)));
        }
        args.push(row);
    }
    let skeleton = BatchedEinsum::checked(i_out, i_in, args)?;
    let sigma_idx = skeleton
        .all_indices()
        .into_iter()
        .map(|i| (i.clone(), i))
        .collect();
    Ok(Raised {
        functional: FunctionalBatchedEinsum {
            skeleton,
            operand_map,
        },
        sigma_arg,
        sigma_idx,
    })
}

fn check_statement(st: &Statement, s: usize) -> Result<()> {
    let used: BTreeSet<&String> = st.factors.iter().flat_map(|f| &f.args).collect();
    let outs: BTreeSet<&String> = st.out_indices.iter().collect();
    let red: BTreeSet<&String> = st.reduction.iter().collect();
    if outs.len() != st.out_indices.len() {
        return Err(Error::Raising(format!(
            "statement {}: repeated output index",
            s + 1
        )));
    }
    if !outs.is_subset(&used) {
        return Err(Error::Raising(format!(
            "statement {}: output index missing from the product",
            s + 1
        )));
    }
    let expected: BTreeSet<&String> = used.difference(&outs).copied().collect();
    if red != expected || red.len() != st.reduction.len() {
        return Err(Error::Raising(format!(
            "statement {}: reduction indices must be exactly the non-output indices",
            s + 1
        )));
    }
    Ok(())
}

/// Position-wise renaming from `st`'s loop indices to `first`'s, if the two
/// statements have the same index pattern. Returns pairs (first, st).
fn unify(first: &Statement, st: &Statement) -> Option<BTreeMap<String, String>> {
    let a = first
        .out_indices
        .iter()
        .chain(first.factors.iter().flat_map(|f| &f.args));
    let b = st
        .out_indices
        .iter()
        .chain(st.factors.iter().flat_map(|f| &f.args));
    let mut fwd: BTreeMap<String, String> = BTreeMap::new();
    let mut back: BTreeMap<String, String> = BTreeMap::new();
    let mut count = 0;
    for (x, y) in a.zip(b) {
        count += 1;
        if fwd.entry(x.clone()).or_insert_with(|| y.clone()) != y
            || back.entry(y.clone()).or_insert_with(|| x.clone()) != x
        {
            return None;
        }
    }
    let len_a = first.out_indices.len() + first.factors.iter().map(|f| f.args.len()).sum::<usize>();
    let len_b = st.out_indices.len() + st.factors.iter().map(|f| f.args.len()).sum::<usize>();
    (count == len_a && len_a == len_b).then_some(fwd)
}

/// Maps from a reference einsum's symbols to a kernel's.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Identification {
    /// Reference array → kernel def or array name.
    pub sigma_arg: BTreeMap<String, String>,
    /// Reference index → kernel loop index.
    pub sigma_idx: BTreeMap<String, String>,
    /// Reference row → kernel statement (0-based).
    pub sigma_row: Vec<usize>,
    /// Reference slot → kernel factor position (0-based).
    pub sigma_slot: Vec<usize>,
}

/// Raises `k`, canonicalizes both sides and, if the canonical forms agree,
/// composes the maps from `reference`'s symbols to the kernel's.
pub fn identify_as_einsum(
    k: &FunctionalKernel,
    reference: &BatchedEinsum,
) -> Result<Identification> {
    let raised = raise_to_batched_einsum(k)?;
    let c_ref = canonicalize(reference)?;
    let c_raised = canonicalize(&raised.functional.skeleton)?;
    // witness for reference ≃ raised skeleton
    let w = compose(&c_ref, &c_raised).ok_or_else(|| Error::CanonicalMismatch {
        reference: render_key(&c_ref.canonical),
        raised: render_key(&c_raised.canonical),
    })?;
    let sigma_arg = w
        .sigma_arg
        .iter()
        .map(|(synthetic, r)| (r.clone(), raised.sigma_arg[synthetic].clone()))
        .collect();
    let sigma_idx = w
        .sigma_idx
        .iter()
        .map(|(skel, r)| (r.clone(), raised.sigma_idx[skel].clone()))
        .collect();
    Ok(Identification {
        sigma_arg,
        sigma_idx,
        sigma_row: w.sigma_row,
        sigma_slot: w.sigma_slot,
    })
}

/// The trivial kernel of a batched einsum: one statement per row reading
/// the arrays directly. Index names must be identifiers.
pub fn lower(e: &BatchedEinsum) -> Result<FunctionalKernel> {
    e.check()?;
    let lengths = e.index_lengths();
    let domain = e
        .indices_in_order()
        .into_iter()
        .map(|i| (i.to_string(), lengths[i]))
        .collect();
    let reduction: Vec<String> = e
        .reduction_indices()
        .into_iter()
        .map(String::from)
        .collect();
    let statements = e
        .args
        .iter()
        .enumerate()
        .map(|(r, row)| Statement {
            output: format!("out{r}"),
            out_indices: e.i_out.0.clone(),
            reduction: reduction.clone(),
            factors: row
                .iter()
                .zip(&e.i_in)
                .map(|(a, l)| Factor {
                    callee: a.name.clone(),
                    args: l.0.clone(),
                })
                .collect(),
        })
        .collect();
    Ok(FunctionalKernel {
        domain,
        defs: BTreeMap::new(),
        arrays: e.universe(),
        statements,
    })
}
