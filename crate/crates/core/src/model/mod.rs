//! Batched einsums, their derived sets, soundness checks and equality.
//!
//! A batched einsum is `b` einsums that share one index notation
//! (`i_out`, `i_in`) and differ only in their operand arrays. Operand arrays
//! are stored as a `b × n` matrix of [`ArrayMeta`]; an array name that occurs
//! more than once must always carry the same shape and dtype.

pub(crate) mod eval;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

pub use eval::{evaluate, Tensor, TensorData};

use crate::error::{Error, Result};

/// Element types understood by the model, declared in rank order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DtypeCode {
    Int8,
    Int32,
    Int64,
    Float16,
    Float32,
    Float64,
    Complex64,
    Complex128,
}

impl DtypeCode {
    pub const ALL: [DtypeCode; 8] = [
        DtypeCode::Int8,
        DtypeCode::Int32,
        DtypeCode::Int64,
        DtypeCode::Float16,
        DtypeCode::Float32,
        DtypeCode::Float64,
        DtypeCode::Complex64,
        DtypeCode::Complex128,
    ];

    /// Position in the total order used by the dtype tournament (1..=8).
    pub fn rank(self) -> u8 {
        match self {
            DtypeCode::Int8 => 1,
            DtypeCode::Int32 => 2,
            DtypeCode::Int64 => 3,
            DtypeCode::Float16 => 4,
            DtypeCode::Float32 => 5,
            DtypeCode::Float64 => 6,
            DtypeCode::Complex64 => 7,
            DtypeCode::Complex128 => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DtypeCode::Int8 => "int8",
            DtypeCode::Int32 => "int32",
            DtypeCode::Int64 => "int64",
            DtypeCode::Float16 => "float16",
            DtypeCode::Float32 => "float32",
            DtypeCode::Float64 => "float64",
            DtypeCode::Complex64 => "complex64",
            DtypeCode::Complex128 => "complex128",
        }
    }

    pub fn from_name(name: &str) -> Option<DtypeCode> {
        DtypeCode::ALL.into_iter().find(|d| d.name() == name)
    }

    pub fn size_bytes(self) -> usize {
        match self {
            DtypeCode::Int8 => 1,
            DtypeCode::Float16 => 2,
            DtypeCode::Int32 | DtypeCode::Float32 => 4,
            DtypeCode::Int64 | DtypeCode::Float64 | DtypeCode::Complex64 => 8,
            DtypeCode::Complex128 => 16,
        }
    }

    pub fn is_complex(self) -> bool {
        matches!(self, DtypeCode::Complex64 | DtypeCode::Complex128)
    }
}

impl fmt::Display for DtypeCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Declaration of a named multidimensional array.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ArrayMeta {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: DtypeCode,
}

impl ArrayMeta {
    pub fn new(name: impl Into<String>, shape: impl Into<Vec<usize>>, dtype: DtypeCode) -> Self {
        ArrayMeta {
            name: name.into(),
            shape: shape.into(),
            dtype,
        }
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Ordered sequence of index symbols.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IndexList(pub Vec<String>);

impl IndexList {
    pub fn new<S: Into<String>>(symbols: impl IntoIterator<Item = S>) -> Self {
        IndexList(symbols.into_iter().map(Into::into).collect())
    }

    /// Splits a run of single-letter indices, `"ij"` → `[i, j]`.
    pub fn from_letters(letters: &str) -> Self {
        IndexList(letters.chars().map(String::from).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, String> {
        self.0.iter()
    }

    pub fn position(&self, symbol: &str) -> Option<usize> {
        self.0.iter().position(|s| s == symbol)
    }

    pub fn contains(&self, symbol: &str) -> bool {
        self.position(symbol).is_some()
    }
}

impl fmt::Display for IndexList {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({})", self.0.join(" "))
    }
}

/// A single (unbatched) einsum: `R[i_out] = Σ Π args[k][i_in[k]]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EinsumSpec {
    pub i_out: IndexList,
    pub i_in: Vec<IndexList>,
    pub args: Vec<ArrayMeta>,
}

impl EinsumSpec {
    pub fn n(&self) -> usize {
        self.i_in.len()
    }

    /// Union of all input index symbols.
    pub fn all_indices(&self) -> BTreeSet<String> {
        self.i_in.iter().flat_map(|l| l.iter().cloned()).collect()
    }
}

/// `b` einsums sharing `(n, i_out, i_in)`, with operand matrix `args[row][slot]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BatchedEinsum {
    pub i_out: IndexList,
    pub i_in: Vec<IndexList>,
    pub args: Vec<Vec<ArrayMeta>>,
}

/// `(row, slot, index, dim)` with 1-based row, slot and dim.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct InputAccess {
    pub row: usize,
    pub slot: usize,
    pub index: String,
    pub dim: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DerivedSets {
    pub all_dims: BTreeSet<usize>,
    pub input_accesses: BTreeSet<InputAccess>,
    /// `(index, dim)` with 1-based dim.
    pub output_accesses: BTreeSet<(String, usize)>,
    pub dtypes: BTreeSet<DtypeCode>,
    pub axis_lengths: BTreeSet<usize>,
}

/// One failed soundness condition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    EmptyBatch,
    NoOperands,
    RowArity {
        row: usize,
        expected: usize,
        found: usize,
    },
    DimMismatch {
        row: usize,
        slot: usize,
        indices: usize,
        array_dim: usize,
    },
    LengthMismatch {
        index: String,
        expected: usize,
        found: usize,
        row: usize,
        slot: usize,
    },
    OutputIndexNotInInputs(String),
    DuplicateOutputIndex(String),
    ConflictingArray(String),
    ZeroExtent(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyBatch => write!(f, "batch has no rows"),
            Violation::NoOperands => write!(f, "einsum has no operands"),
            Violation::RowArity {
                row,
                expected,
                found,
            } => write!(f, "row {row} has {found} operands, expected {expected}"),
            Violation::DimMismatch {
                row,
                slot,
                indices,
                array_dim,
            } => write!(
                f,
                "row {row} slot {slot}: {indices} indices for a {array_dim}-dimensional array"
            ),
            Violation::LengthMismatch {
                index,
                expected,
                found,
                row,
                slot,
            } => write!(
                f,
                "index {index} length mismatch ({expected} vs {found}) at row {row} slot {slot}"
            ),
            Violation::OutputIndexNotInInputs(i) => {
                write!(f, "output index {i} not among input indices")
            }
            Violation::DuplicateOutputIndex(i) => write!(f, "output index {i} repeated"),
            Violation::ConflictingArray(a) => {
                write!(f, "array {a} declared with conflicting shape or dtype")
            }
            Violation::ZeroExtent(a) => write!(f, "array {a} has a zero-length axis"),
        }
    }
}

impl BatchedEinsum {
    pub fn new(i_out: IndexList, i_in: Vec<IndexList>, args: Vec<Vec<ArrayMeta>>) -> Self {
        BatchedEinsum { i_out, i_in, args }
    }

    /// Builds and validates in one step.
    pub fn checked(
        i_out: IndexList,
        i_in: Vec<IndexList>,
        args: Vec<Vec<ArrayMeta>>,
    ) -> Result<Self> {
        let e = BatchedEinsum::new(i_out, i_in, args);
        e.check()?;
        Ok(e)
    }

    /// Number of rows.
    pub fn b(&self) -> usize {
        self.args.len()
    }

    /// Number of operand slots.
    pub fn n(&self) -> usize {
        self.i_in.len()
    }

    pub fn row(&self, i: usize) -> EinsumSpec {
        EinsumSpec {
            i_out: self.i_out.clone(),
            i_in: self.i_in.clone(),
            args: self.args[i].clone(),
        }
    }

    /// The distinct arrays, keyed by name (first declaration wins).
    pub fn universe(&self) -> BTreeMap<String, ArrayMeta> {
        let mut out = BTreeMap::new();
        for a in self.args.iter().flatten() {
            out.entry(a.name.clone()).or_insert_with(|| a.clone());
        }
        out
    }

    /// Array names in row-major order of first occurrence.
    pub fn arrays_in_order(&self) -> Vec<&ArrayMeta> {
        let mut seen = BTreeSet::new();
        self.args
            .iter()
            .flatten()
            .filter(|a| seen.insert(a.name.as_str()))
            .collect()
    }

    pub fn all_indices(&self) -> BTreeSet<String> {
        self.i_in.iter().flat_map(|l| l.iter().cloned()).collect()
    }

    /// Index symbols in order of first occurrence across `i_in`.
    pub fn indices_in_order(&self) -> Vec<&str> {
        let mut seen = BTreeSet::new();
        self.i_in
            .iter()
            .flat_map(|l| l.iter())
            .filter(|s| seen.insert(s.as_str()))
            .map(String::as_str)
            .collect()
    }

    /// Symbols summed over: inputs minus outputs.
    pub fn reduction_indices(&self) -> Vec<&str> {
        self.indices_in_order()
            .into_iter()
            .filter(|s| !self.i_out.contains(s))
            .collect()
    }

    /// Axis length bound to each index symbol (first occurrence wins).
    pub fn index_lengths(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for row in &self.args {
            for (list, arg) in self.i_in.iter().zip(row) {
                for (sym, &len) in list.iter().zip(&arg.shape) {
                    out.entry(sym.clone()).or_insert(len);
                }
            }
        }
        out
    }

    pub fn output_shape(&self) -> Vec<usize> {
        let lengths = self.index_lengths();
        self.i_out
            .iter()
            .map(|s| lengths.get(s).copied().unwrap_or(0))
            .collect()
    }

    pub fn derived_sets(&self) -> DerivedSets {
        let universe = self.universe();
        let mut all_dims: BTreeSet<usize> = universe.values().map(ArrayMeta::dim).collect();
        all_dims.insert(self.i_out.len());
        let mut input_accesses = BTreeSet::new();
        for (i, row) in self.args.iter().enumerate() {
            for (j, (list, arg)) in self.i_in.iter().zip(row).enumerate() {
                for d in 0..arg.dim().min(list.len()) {
                    input_accesses.insert(InputAccess {
                        row: i + 1,
                        slot: j + 1,
                        index: list.0[d].clone(),
                        dim: d + 1,
                    });
                }
            }
        }
        let output_accesses = self
            .i_out
            .iter()
            .enumerate()
            .map(|(d, s)| (s.clone(), d + 1))
            .collect();
        DerivedSets {
            all_dims,
            input_accesses,
            output_accesses,
            dtypes: universe.values().map(|a| a.dtype).collect(),
            axis_lengths: universe
                .values()
                .flat_map(|a| a.shape.iter().copied())
                .collect(),
        }
    }

    /// Every violated soundness condition; empty means valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.args.is_empty() {
            out.push(Violation::EmptyBatch);
        }
        if self.i_in.is_empty() {
            out.push(Violation::NoOperands);
        }
        let n = self.n();
        let mut decls: BTreeMap<&str, &ArrayMeta> = BTreeMap::new();
        let mut conflicting = BTreeSet::new();
        // index -> (length, row, slot) of first sighting
        let mut lengths: BTreeMap<&str, usize> = BTreeMap::new();
        for (i, row) in self.args.iter().enumerate() {
            if row.len() != n {
                out.push(Violation::RowArity {
                    row: i + 1,
                    expected: n,
                    found: row.len(),
                });
                continue;
            }
            for (j, (list, arg)) in self.i_in.iter().zip(row).enumerate() {
                match decls.get(arg.name.as_str()) {
                    Some(prev) if *prev != arg => {
                        if conflicting.insert(arg.name.as_str()) {
                            out.push(Violation::ConflictingArray(arg.name.clone()));
                        }
                    }
                    Some(_) => {}
                    None => {
                        decls.insert(&arg.name, arg);
                        if arg.shape.contains(&0) {
                            out.push(Violation::ZeroExtent(arg.name.clone()));
                        }
                    }
                }
                if list.len() != arg.dim() {
                    out.push(Violation::DimMismatch {
                        row: i + 1,
                        slot: j + 1,
                        indices: list.len(),
                        array_dim: arg.dim(),
                    });
                    continue;
                }
                for (sym, &len) in list.iter().zip(&arg.shape) {
                    match lengths.get(sym.as_str()) {
                        Some(&expected) if expected != len => {
                            out.push(Violation::LengthMismatch {
                                index: sym.clone(),
                                expected,
                                found: len,
                                row: i + 1,
                                slot: j + 1,
                            });
                        }
                        Some(_) => {}
                        None => {
                            lengths.insert(sym, len);
                        }
                    }
                }
            }
        }
        let inputs = self.all_indices();
        let mut seen_out = BTreeSet::new();
        for sym in self.i_out.iter() {
            if !seen_out.insert(sym) {
                out.push(Violation::DuplicateOutputIndex(sym.clone()));
            }
            if !inputs.contains(sym) {
                out.push(Violation::OutputIndexNotInInputs(sym.clone()));
            }
        }
        out
    }

    pub fn check(&self) -> Result<()> {
        let violations = self.validate();
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid(violations))
        }
    }

    /// Positionwise equality of the notation and of every operand.
    pub fn equals(&self, other: &BatchedEinsum) -> bool {
        self == other
    }
}

/// Four maps witnessing `e1 ≃ e2`.
///
/// Rows and slots are 0-based: row `i` of `e1` corresponds to row
/// `sigma_row[i]` of `e2`, slot `j` of `e1` to slot `sigma_slot[j]` of `e2`.
/// The symbol maps go from `e2`'s names to `e1`'s names.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubstitutionWitness {
    pub sigma_row: Vec<usize>,
    pub sigma_slot: Vec<usize>,
    pub sigma_idx: BTreeMap<String, String>,
    pub sigma_arg: BTreeMap<String, String>,
}

impl SubstitutionWitness {
    /// Witness for `e ≃ e`.
    pub fn identity(e: &BatchedEinsum) -> Self {
        SubstitutionWitness {
            sigma_row: (0..e.b()).collect(),
            sigma_slot: (0..e.n()).collect(),
            sigma_idx: e
                .all_indices()
                .into_iter()
                .map(|s| (s.clone(), s))
                .collect(),
            sigma_arg: e.universe().into_keys().map(|s| (s.clone(), s)).collect(),
        }
    }

    /// Witness for `e2 ≃ e1` given one for `e1 ≃ e2`.
    pub fn inverse(&self) -> Self {
        SubstitutionWitness {
            sigma_row: invert_perm(&self.sigma_row),
            sigma_slot: invert_perm(&self.sigma_slot),
            sigma_idx: self
                .sigma_idx
                .iter()
                .map(|(k, v)| (v.clone(), k.clone()))
                .collect(),
            sigma_arg: self
                .sigma_arg
                .iter()
                .map(|(k, v)| (v.clone(), k.clone()))
                .collect(),
        }
    }
}

impl fmt::Display for SubstitutionWitness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, r) in self.sigma_row.iter().enumerate() {
            writeln!(f, "sigma_row: {} -> {}", i + 1, r + 1)?;
        }
        for (j, s) in self.sigma_slot.iter().enumerate() {
            writeln!(f, "sigma_slot: {} -> {}", j + 1, s + 1)?;
        }
        for (k, v) in &self.sigma_idx {
            writeln!(f, "sigma_idx: {k} -> {v}")?;
        }
        for (k, v) in &self.sigma_arg {
            writeln!(f, "sigma_arg: {k} -> {v}")?;
        }
        Ok(())
    }
}

pub(crate) fn invert_perm(p: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; p.len()];
    for (i, &j) in p.iter().enumerate() {
        if j < inv.len() {
            inv[j] = i;
        }
    }
    inv
}
