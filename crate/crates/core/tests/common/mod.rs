//! Fixtures shared by the integration tests.
#![allow(dead_code)]

pub mod family;

use std::collections::BTreeMap;

use feinsum::model::{ArrayMeta, BatchedEinsum, DtypeCode, IndexList, SubstitutionWitness};

pub fn f64a(name: &str, shape: &[usize]) -> ArrayMeta {
    ArrayMeta::new(name, shape.to_vec(), DtypeCode::Float64)
}

pub fn list(symbols: &[&str]) -> IndexList {
    IndexList::new(symbols.iter().copied())
}

pub fn single(ins: &[&str], out: &str, args: Vec<ArrayMeta>) -> BatchedEinsum {
    BatchedEinsum::new(
        IndexList::from_letters(out),
        ins.iter().map(|s| IndexList::from_letters(s)).collect(),
        vec![args],
    )
}

pub fn map(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
    pairs
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

/// "ij,ik->i" over two 72x18 float64 arrays.
pub fn reduction_pair() -> (BatchedEinsum, BatchedEinsum) {
    (
        single(
            &["ij", "ik"],
            "i",
            vec![f64a("A", &[72, 18]), f64a("B", &[72, 18])],
        ),
        single(
            &["ik", "ij"],
            "i",
            vec![f64a("X", &[72, 18]), f64a("Y", &[72, 18])],
        ),
    )
}

/// Matrix product and a renamed, slot-swapped copy, plus the witness.
pub fn matmul_pair() -> (BatchedEinsum, BatchedEinsum, SubstitutionWitness) {
    let e1 = single(
        &["ik", "kj"],
        "ij",
        vec![f64a("A", &[10, 4]), f64a("B", &[4, 10])],
    );
    let e2 = BatchedEinsum::new(
        list(&["p", "q"]),
        vec![list(&["r", "q"]), list(&["p", "r"])],
        vec![vec![f64a("X", &[4, 10]), f64a("Y", &[10, 4])]],
    );
    let w = SubstitutionWitness {
        sigma_row: vec![0],
        sigma_slot: vec![1, 0],
        sigma_idx: map(&[("p", "i"), ("q", "j"), ("r", "k")]),
        sigma_arg: map(&[("Y", "A"), ("X", "B")]),
    };
    (e1, e2, w)
}

/// Two-row, four-operand pair with a known witness.
pub fn batched_pair() -> (BatchedEinsum, BatchedEinsum, SubstitutionWitness) {
    let big = |n: &str| f64a(n, &[5, 10, 10]);
    let small = |n: &str| f64a(n, &[5, 10]);
    let e1 = BatchedEinsum::new(
        IndexList::from_letters("i"),
        ["ijk", "ik", "ij", "ij"]
            .iter()
            .map(|s| IndexList::from_letters(s))
            .collect(),
        vec![
            vec![big("A"), small("B"), small("C"), small("D")],
            vec![big("A"), small("B"), small("C"), small("B")],
        ],
    );
    let e2 = BatchedEinsum::new(
        IndexList::from_letters("i"),
        ["ikj", "ik", "ik", "ij"]
            .iter()
            .map(|s| IndexList::from_letters(s))
            .collect(),
        vec![
            vec![big("P"), small("S"), small("R"), small("S")],
            vec![big("P"), small("Q"), small("R"), small("S")],
        ],
    );
    let w = SubstitutionWitness {
        sigma_row: vec![1, 0],
        sigma_slot: vec![0, 3, 2, 1],
        sigma_idx: map(&[("i", "i"), ("j", "k"), ("k", "j")]),
        sigma_arg: map(&[("P", "A"), ("S", "B"), ("R", "C"), ("Q", "D")]),
    };
    (e1, e2, w)
}

/// Three rows, three operands, six indices; primed names are spelled with
/// a trailing `p`.
pub fn three_row_pair() -> (BatchedEinsum, BatchedEinsum, SubstitutionWitness) {
    let a = |n: &str| f64a(n, &[3, 4, 2]);
    let e1 = BatchedEinsum::new(
        list(&["i", "j", "k", "l"]),
        vec![
            list(&["m", "n", "j"]),
            list(&["m", "n", "i"]),
            list(&["k", "l", "i"]),
        ],
        vec![
            vec![a("A"), a("B"), a("C")],
            vec![a("D"), a("E"), a("A")],
            vec![a("B"), a("D"), a("F")],
        ],
    );
    let e2 = BatchedEinsum::new(
        list(&["np", "mp", "kp", "jp"]),
        vec![
            list(&["lp", "ip", "np"]),
            list(&["kp", "jp", "np"]),
            list(&["lp", "ip", "mp"]),
        ],
        vec![
            vec![a("Ap"), a("Dp"), a("Ep")],
            vec![a("Ep"), a("Bp"), a("Cp")],
            vec![a("Cp"), a("Fp"), a("Dp")],
        ],
    );
    // rows: 1 -> 3, 2 -> 1, 3 -> 2; slots: 1 -> 3, 2 -> 1, 3 -> 2
    let w = SubstitutionWitness {
        sigma_row: vec![2, 0, 1],
        sigma_slot: vec![2, 0, 1],
        sigma_idx: map(&[
            ("np", "i"),
            ("mp", "j"),
            ("kp", "k"),
            ("jp", "l"),
            ("lp", "m"),
            ("ip", "n"),
        ]),
        sigma_arg: map(&[
            ("Dp", "A"),
            ("Cp", "B"),
            ("Fp", "C"),
            ("Ep", "D"),
            ("Ap", "E"),
            ("Bp", "F"),
        ]),
    };
    (e1, e2, w)
}

/// "ij,j->i" with rows (A, B) and (A, C).
pub fn matvec_batch() -> BatchedEinsum {
    BatchedEinsum::new(
        IndexList::from_letters("i"),
        vec![IndexList::from_letters("ij"), IndexList::from_letters("j")],
        vec![
            vec![f64a("A", &[96, 4]), f64a("B", &[4])],
            vec![f64a("A", &[96, 4]), f64a("C", &[4])],
        ],
    )
}

/// A fused loop nest whose statements form the matvec batch.
pub const FUSED_KERNEL: &str = "\
domain: i0<96 i1<4
array: P float64 96x4
array: Q float64 4
array: R float64 4
def u(i,j) := P[i,j]*P[i,j]
def v(i) := 3*cos(Q[i])+5
def w(i) := sin(R[i])
stmt y1[i0] = sum([i1], u(i0,i1)*v(i1))
stmt y2[i0] = sum([i1], u(i0,i1)*w(i1))
";
