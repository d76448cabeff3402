//! Encoding of batched einsums as colored digraphs and back.
//!
//! Node blocks, in label order, with their colors:
//!
//! | color | block        | one node per                          |
//! |-------|--------------|---------------------------------------|
//! | 1     | argument     | distinct array                        |
//! | 2     | index        | distinct index symbol                 |
//! | 3     | input access | `(row, slot, index, dim)`             |
//! | 4     | output access| `(index, dim)` of the output list     |
//! | 5     | output       | row                                   |
//! | 6     | arg position | operand slot                          |
//! | 7     | dtype        | distinct dtype                        |
//! | 8     | length       | distinct axis length                  |
//! | 9     | dim          | dimension number `1..=max dim`        |
//!
//! Edges: input access → argument; arg position, output, index and dim →
//! input access; index and dim → output access; length → index; dtype →
//! argument; plus transitive tournaments among lengths (by value), dtypes
//! (by rank) and dims (by number), each pointing from smaller to larger.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::{self, Write as _};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph_canon::{Adjacency, ColoredDigraph, Relabeling};
use crate::model::{ArrayMeta, BatchedEinsum, DtypeCode, IndexList};

pub const COLOR_ARG: u32 = 1;
pub const COLOR_INDEX: u32 = 2;
pub const COLOR_ACCESS_IN: u32 = 3;
pub const COLOR_ACCESS_OUT: u32 = 4;
pub const COLOR_OUTPUT: u32 = 5;
pub const COLOR_ARG_POS: u32 = 6;
pub const COLOR_DTYPE: u32 = 7;
pub const COLOR_LENGTH: u32 = 8;
pub const COLOR_DIM: u32 = 9;

/// Colored digraph plus the partial label maps that tie nodes back to
/// einsum entities. Node ids are 0-based.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InducedGraph {
    pub graph: ColoredDigraph,
    pub iota_dtype: BTreeMap<usize, DtypeCode>,
    pub iota_length: BTreeMap<usize, usize>,
    pub iota_index: BTreeMap<usize, String>,
    pub iota_arg: BTreeMap<usize, String>,
    /// Output node → 0-based row.
    pub iota_output: BTreeMap<usize, usize>,
    /// Arg-position node → 0-based slot.
    pub iota_arg_pos: BTreeMap<usize, usize>,
}

/// Block sizes of an induced graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeCounts {
    pub args: usize,
    pub indices: usize,
    pub dtypes: usize,
    pub lengths: usize,
    pub dims: usize,
    pub access_in: usize,
    pub access_out: usize,
    pub outputs: usize,
    pub arg_positions: usize,
}

impl NodeCounts {
    pub fn of(e: &BatchedEinsum) -> NodeCounts {
        let d = e.derived_sets();
        NodeCounts {
            args: e.universe().len(),
            indices: e.all_indices().len(),
            dtypes: d.dtypes.len(),
            lengths: d.axis_lengths.len(),
            dims: d.all_dims.iter().copied().max().unwrap_or(0),
            access_in: d.input_accesses.len(),
            access_out: d.output_accesses.len(),
            outputs: e.b(),
            arg_positions: e.n(),
        }
    }

    pub fn total(&self) -> usize {
        self.args
            + self.indices
            + self.dtypes
            + self.lengths
            + self.dims
            + self.access_in
            + self.access_out
            + self.outputs
            + self.arg_positions
    }
}

/// Encodes `e` with the default (first-occurrence) numbering.
pub fn to_induced_graph(e: &BatchedEinsum) -> Result<InducedGraph> {
    build(e, None::<&mut rand::rngs::ThreadRng>)
}

/// Encodes `e` with every block's numbering shuffled by `rng`. The canonical
/// form does not depend on the numbering; this exists to test that.
pub fn to_induced_graph_shuffled<R: Rng>(e: &BatchedEinsum, rng: &mut R) -> Result<InducedGraph> {
    build(e, Some(rng))
}

fn build<R: Rng>(e: &BatchedEinsum, mut rng: Option<&mut R>) -> Result<InducedGraph> {
    e.check()?;
    if let Some(a) = e.universe().values().find(|a| a.dim() == 0) {
        return Err(Error::Unencodable(format!(
            "operand {} is 0-dimensional and has no accesses",
            a.name
        )));
    }
    fn maybe_shuffle<T, R: Rng>(v: &mut [T], rng: &mut Option<&mut R>) {
        if let Some(r) = rng.as_deref_mut() {
            v.shuffle(r);
        }
    }

    let mut args: Vec<&ArrayMeta> = e.arrays_in_order();
    maybe_shuffle(&mut args, &mut rng);
    let mut indices: Vec<&str> = e.indices_in_order();
    maybe_shuffle(&mut indices, &mut rng);
    let mut access_in: Vec<(usize, usize, usize)> = Vec::new();
    for (i, row) in e.args.iter().enumerate() {
        for (j, a) in row.iter().enumerate() {
            access_in.extend((0..a.dim()).map(|d| (i, j, d)));
        }
    }
    maybe_shuffle(&mut access_in, &mut rng);
    let mut access_out: Vec<usize> = (0..e.i_out.len()).collect();
    maybe_shuffle(&mut access_out, &mut rng);
    let mut outputs: Vec<usize> = (0..e.b()).collect();
    maybe_shuffle(&mut outputs, &mut rng);
    let mut slots: Vec<usize> = (0..e.n()).collect();
    maybe_shuffle(&mut slots, &mut rng);
    let derived = e.derived_sets();
    let mut dtypes: Vec<DtypeCode> = derived.dtypes.iter().copied().collect();
    maybe_shuffle(&mut dtypes, &mut rng);
    let mut lengths: Vec<usize> = derived.axis_lengths.iter().copied().collect();
    maybe_shuffle(&mut lengths, &mut rng);
    let n_dim = derived.all_dims.iter().copied().max().unwrap_or(0);
    let mut dims: Vec<usize> = (0..n_dim).collect();
    maybe_shuffle(&mut dims, &mut rng);

    // block offsets in the fixed color order
    let sizes = [
        args.len(),
        indices.len(),
        access_in.len(),
        access_out.len(),
        outputs.len(),
        slots.len(),
        dtypes.len(),
        lengths.len(),
        dims.len(),
    ];
    let mut offsets = [0usize; 9];
    for k in 1..9 {
        offsets[k] = offsets[k - 1] + sizes[k - 1];
    }
    let total = offsets[8] + sizes[8];
    let mut colors = vec![0u32; total];
    for k in 0..9 {
        for c in &mut colors[offsets[k]..offsets[k] + sizes[k]] {
            *c = k as u32 + 1;
        }
    }

    let arg_node: HashMap<&str, usize> = args
        .iter()
        .enumerate()
        .map(|(k, a)| (a.name.as_str(), offsets[0] + k))
        .collect();
    let index_node: HashMap<&str, usize> = indices
        .iter()
        .enumerate()
        .map(|(k, s)| (*s, offsets[1] + k))
        .collect();
    let output_node = |row: usize| offsets[4] + outputs.iter().position(|&r| r == row).unwrap();
    let slot_node = |slot: usize| offsets[5] + slots.iter().position(|&s| s == slot).unwrap();
    let dtype_node = |t: DtypeCode| offsets[6] + dtypes.iter().position(|&x| x == t).unwrap();
    let length_node = |l: usize| offsets[7] + lengths.iter().position(|&x| x == l).unwrap();
    let dim_node = |d: usize| offsets[8] + dims.iter().position(|&x| x == d).unwrap();

    let mut adj = Adjacency::new(total);
    for (k, &(i, j, d)) in access_in.iter().enumerate() {
        let node = offsets[2] + k;
        let arg = &e.args[i][j];
        let sym = e.i_in[j].0[d].as_str();
        adj.set(node, arg_node[arg.name.as_str()], true);
        adj.set(slot_node(j), node, true);
        adj.set(output_node(i), node, true);
        adj.set(index_node[sym], node, true);
        adj.set(dim_node(d), node, true);
        adj.set(length_node(arg.shape[d]), index_node[sym], true);
    }
    for (k, &d) in access_out.iter().enumerate() {
        let node = offsets[3] + k;
        adj.set(index_node[e.i_out.0[d].as_str()], node, true);
        adj.set(dim_node(d), node, true);
    }
    for a in &args {
        adj.set(dtype_node(a.dtype), arg_node[a.name.as_str()], true);
    }
    for &l1 in &lengths {
        for &l2 in &lengths {
            if l2 > l1 {
                adj.set(length_node(l1), length_node(l2), true);
            }
        }
    }
    for &t1 in &dtypes {
        for &t2 in &dtypes {
            if t2.rank() > t1.rank() {
                adj.set(dtype_node(t1), dtype_node(t2), true);
            }
        }
    }
    for &d1 in &dims {
        for &d2 in &dims {
            if d2 > d1 {
                adj.set(dim_node(d1), dim_node(d2), true);
            }
        }
    }

    Ok(InducedGraph {
        graph: ColoredDigraph::new(adj, colors),
        iota_dtype: dtypes.iter().map(|&t| (dtype_node(t), t)).collect(),
        iota_length: lengths.iter().map(|&l| (length_node(l), l)).collect(),
        iota_index: indices
            .iter()
            .map(|&s| (index_node[s], s.to_string()))
            .collect(),
        iota_arg: args
            .iter()
            .map(|a| (arg_node[a.name.as_str()], a.name.clone()))
            .collect(),
        iota_output: outputs.iter().map(|&r| (output_node(r), r)).collect(),
        iota_arg_pos: slots.iter().map(|&s| (slot_node(s), s)).collect(),
    })
}

impl InducedGraph {
    pub fn len(&self) -> usize {
        self.graph.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graph.is_empty()
    }

    /// Relabels nodes and re-keys every label map accordingly.
    pub fn relabel(&self, r: &Relabeling) -> Result<InducedGraph> {
        let graph = crate::graph_canon::apply_relabeling(&self.graph, r)?;
        fn rekey<V: Clone>(m: &BTreeMap<usize, V>, r: &Relabeling) -> BTreeMap<usize, V> {
            m.iter().map(|(&k, v)| (r.apply(k), v.clone())).collect()
        }
        Ok(InducedGraph {
            graph,
            iota_dtype: rekey(&self.iota_dtype, r),
            iota_length: rekey(&self.iota_length, r),
            iota_index: rekey(&self.iota_index, r),
            iota_arg: rekey(&self.iota_arg, r),
            iota_output: rekey(&self.iota_output, r),
            iota_arg_pos: rekey(&self.iota_arg_pos, r),
        })
    }

    /// Graphviz rendering for debugging; not a stable format.
    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph induced {\n");
        for (v, &c) in self.graph.colors.iter().enumerate() {
            let mut label = format!("{v}:c{c}");
            if let Some(t) = self.iota_dtype.get(&v) {
                let _ = write!(label, " {t}");
            }
            if let Some(l) = self.iota_length.get(&v) {
                let _ = write!(label, " len={l}");
            }
            if let Some(i) = self.iota_index.get(&v) {
                let _ = write!(label, " idx={i}");
            }
            if let Some(a) = self.iota_arg.get(&v) {
                let _ = write!(label, " arg={a}");
            }
            let _ = writeln!(s, "  n{v} [label=\"{label}\"];");
        }
        for (i, j) in self.graph.adjacency.edges() {
            let _ = writeln!(s, "  n{i} -> n{j};");
        }
        s.push_str("}\n");
        s
    }
}

/// Conditions a colored digraph must satisfy to decode into a batched einsum.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Condition {
    ColorRange,
    ArgNoSuccessors,
    ArgPredecessorKinds,
    ArgSingleDtype,
    DtypePredecessorKinds,
    DtypeSuccessorKinds,
    AccessInSuccessorKinds,
    AccessInFourPredecessors,
    OutputSuccessorKinds,
    OutputNoPredecessors,
    AccessOutNoSuccessors,
    AccessOutTwoPredecessors,
    IndexSuccessorKinds,
    IndexSingleLength,
    LengthPredecessorKinds,
    LengthSuccessorKinds,
    DimPredecessorKinds,
    DimSuccessorKinds,
    ArgPosNoPredecessors,
    ArgPosSuccessorKinds,
    DimTournament,
    LengthTournament,
    DtypeTournament,
    ShapeConsistency,
    OutputIndexInInputs,
    AccessSingleton,
    DistinctOutputIndices,
    SingleArgPerSlotAndRow,
    ArgDimsConsecutive,
    OutputDimsConsecutive,
    // The following are not needed for graphs built by `to_induced_graph`
    // but make decoding well defined for arbitrary inputs.
    NonEmptyBatch,
    NonEmptyOperands,
    SingleIndexPerSlotRowDim,
    ArgConsistentAcrossUses,
    UnusedNode,
    LabelMaps,
    RankLabelsOrdered,
}

impl Condition {
    pub fn description(self) -> &'static str {
        use Condition::*;
        match self {
            ColorRange => "node colors must lie in 1..=9",
            ArgNoSuccessors => "argument node must not have any successors",
            ArgPredecessorKinds => "argument predecessors must be input accesses or dtypes",
            ArgSingleDtype => "argument node must have exactly one dtype predecessor",
            DtypePredecessorKinds => "dtype predecessors must be dtype nodes",
            DtypeSuccessorKinds => "dtype successors must be arguments or dtypes",
            AccessInSuccessorKinds => "input access successors must be argument nodes",
            AccessInFourPredecessors => {
                "input access needs exactly one index, dim, arg position and output predecessor"
            }
            OutputSuccessorKinds => "output successors must be input accesses",
            OutputNoPredecessors => "output node must not have predecessors",
            AccessOutNoSuccessors => "output access must not have successors",
            AccessOutTwoPredecessors => {
                "output access needs exactly one index and one dim predecessor"
            }
            IndexSuccessorKinds => "index successors must be access nodes",
            IndexSingleLength => "index node must have exactly one predecessor, a length node",
            LengthPredecessorKinds => "length predecessors must be length nodes",
            LengthSuccessorKinds => "length successors must be index or length nodes",
            DimPredecessorKinds => "dim predecessors must be dim nodes",
            DimSuccessorKinds => "dim successors must be access or dim nodes",
            ArgPosNoPredecessors => "arg position node must not have predecessors",
            ArgPosSuccessorKinds => "arg position successors must be input accesses",
            DimTournament => "dim nodes must form a transitive tournament",
            LengthTournament => "length nodes must form a transitive tournament",
            DtypeTournament => "dtype nodes must form a transitive tournament",
            ShapeConsistency => "accesses of one argument dimension must share an index length",
            OutputIndexInInputs => "output index must also index an input",
            AccessSingleton => "each (index, dim, slot) access must exist exactly once per output",
            DistinctOutputIndices => "output indices must be distinct",
            SingleArgPerSlotAndRow => "each (slot, output) must access exactly one argument",
            ArgDimsConsecutive => "each operand must index consecutive dimensions from the first",
            OutputDimsConsecutive => "the output must index consecutive dimensions from the first",
            NonEmptyBatch => "at least one output node is required",
            NonEmptyOperands => "at least one arg position node is required",
            SingleIndexPerSlotRowDim => "each (slot, output, dim) must have at most one access",
            ArgConsistentAcrossUses => "an argument must see the same lengths wherever it is used",
            UnusedNode => "argument, index, dtype, length and dim nodes must be used",
            LabelMaps => "dtype/length labels must be defined exactly on dtype/length nodes",
            RankLabelsOrdered => "length and dtype tournaments must agree with their labels",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComplianceViolation {
    pub condition: Condition,
    /// Nodes witnessing the failure.
    pub nodes: Vec<usize>,
}

impl fmt::Display for ComplianceViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} (nodes {:?})",
            self.condition.description(),
            self.nodes
        )
    }
}

/// Neighborhood view shared by the compliance check and the decoder.
struct View<'a> {
    g: &'a InducedGraph,
    succs: Vec<Vec<usize>>,
    preds: Vec<Vec<usize>>,
    blocks: [Vec<usize>; 10],
}

impl<'a> View<'a> {
    fn new(g: &'a InducedGraph) -> Self {
        let n = g.len();
        let succs: Vec<Vec<usize>> = (0..n).map(|i| g.graph.adjacency.succs(i)).collect();
        let mut preds = vec![Vec::new(); n];
        for (i, s) in succs.iter().enumerate() {
            for &j in s {
                preds[j].push(i);
            }
        }
        let mut blocks: [Vec<usize>; 10] = Default::default();
        for (v, &c) in g.graph.colors.iter().enumerate() {
            if (1..=9).contains(&c) {
                blocks[c as usize].push(v);
            }
        }
        View {
            g,
            succs,
            preds,
            blocks,
        }
    }

    fn color(&self, v: usize) -> u32 {
        self.g.graph.colors[v]
    }

    fn block(&self, color: u32) -> &[usize] {
        &self.blocks[color as usize]
    }

    fn preds_of(&self, v: usize, color: u32) -> Vec<usize> {
        self.preds[v]
            .iter()
            .copied()
            .filter(|&u| self.color(u) == color)
            .collect()
    }

    fn succs_of(&self, v: usize, color: u32) -> Vec<usize> {
        self.succs[v]
            .iter()
            .copied()
            .filter(|&u| self.color(u) == color)
            .collect()
    }

    fn only_pred(&self, v: usize, color: u32) -> Option<usize> {
        match self.preds_of(v, color)[..] {
            [u] => Some(u),
            _ => None,
        }
    }

    /// Number of dim predecessors, i.e. the 0-based dimension number.
    fn dim_rank(&self, d: usize) -> usize {
        self.preds_of(d, COLOR_DIM).len()
    }
}

/// Every violated condition with its witnessing nodes. Empty means compliant.
pub fn check_compliance(g: &InducedGraph) -> Vec<ComplianceViolation> {
    use Condition::*;
    let v = View::new(g);
    let mut out: Vec<ComplianceViolation> = Vec::new();
    let mut fail = |condition: Condition, nodes: Vec<usize>| {
        out.push(ComplianceViolation { condition, nodes })
    };

    let bad_colors: Vec<usize> = (0..g.len())
        .filter(|&i| !(1..=9).contains(&v.color(i)))
        .collect();
    if !bad_colors.is_empty() {
        fail(ColorRange, bad_colors);
    }

    let kinds_ok =
        |nodes: &[usize], allowed: &[u32]| nodes.iter().all(|&u| allowed.contains(&v.color(u)));

    for &a in v.block(COLOR_ARG) {
        if !v.succs[a].is_empty() {
            fail(ArgNoSuccessors, vec![a]);
        }
        if !kinds_ok(&v.preds[a], &[COLOR_ACCESS_IN, COLOR_DTYPE]) {
            fail(ArgPredecessorKinds, vec![a]);
        }
        if v.preds_of(a, COLOR_DTYPE).len() != 1 {
            fail(ArgSingleDtype, vec![a]);
        }
        if v.preds_of(a, COLOR_ACCESS_IN).is_empty() {
            fail(UnusedNode, vec![a]);
        }
    }
    for &t in v.block(COLOR_DTYPE) {
        if !kinds_ok(&v.preds[t], &[COLOR_DTYPE]) {
            fail(DtypePredecessorKinds, vec![t]);
        }
        if !kinds_ok(&v.succs[t], &[COLOR_ARG, COLOR_DTYPE]) {
            fail(DtypeSuccessorKinds, vec![t]);
        }
        if v.succs_of(t, COLOR_ARG).is_empty() {
            fail(UnusedNode, vec![t]);
        }
    }
    for &n in v.block(COLOR_ACCESS_IN) {
        if !kinds_ok(&v.succs[n], &[COLOR_ARG]) {
            fail(AccessInSuccessorKinds, vec![n]);
        }
        let p = &v.preds[n];
        if p.len() != 4
            || [COLOR_ARG_POS, COLOR_INDEX, COLOR_OUTPUT, COLOR_DIM]
                .iter()
                .any(|&c| v.preds_of(n, c).len() != 1)
        {
            fail(AccessInFourPredecessors, vec![n]);
        }
    }
    for &o in v.block(COLOR_OUTPUT) {
        if !kinds_ok(&v.succs[o], &[COLOR_ACCESS_IN]) {
            fail(OutputSuccessorKinds, vec![o]);
        }
        if !v.preds[o].is_empty() {
            fail(OutputNoPredecessors, vec![o]);
        }
    }
    for &n in v.block(COLOR_ACCESS_OUT) {
        if !v.succs[n].is_empty() {
            fail(AccessOutNoSuccessors, vec![n]);
        }
        if v.preds[n].len() != 2
            || v.preds_of(n, COLOR_INDEX).len() != 1
            || v.preds_of(n, COLOR_DIM).len() != 1
        {
            fail(AccessOutTwoPredecessors, vec![n]);
        }
    }
    for &i in v.block(COLOR_INDEX) {
        if !kinds_ok(&v.succs[i], &[COLOR_ACCESS_IN, COLOR_ACCESS_OUT]) {
            fail(IndexSuccessorKinds, vec![i]);
        }
        if v.preds[i].len() != 1 || v.preds_of(i, COLOR_LENGTH).len() != 1 {
            fail(IndexSingleLength, vec![i]);
        }
        if v.succs_of(i, COLOR_ACCESS_IN).is_empty() && v.succs_of(i, COLOR_ACCESS_OUT).is_empty() {
            fail(UnusedNode, vec![i]);
        }
    }
    for &l in v.block(COLOR_LENGTH) {
        if !kinds_ok(&v.preds[l], &[COLOR_LENGTH]) {
            fail(LengthPredecessorKinds, vec![l]);
        }
        if !kinds_ok(&v.succs[l], &[COLOR_INDEX, COLOR_LENGTH]) {
            fail(LengthSuccessorKinds, vec![l]);
        }
        if v.succs_of(l, COLOR_INDEX).is_empty() {
            fail(UnusedNode, vec![l]);
        }
    }
    for &d in v.block(COLOR_DIM) {
        if !kinds_ok(&v.preds[d], &[COLOR_DIM]) {
            fail(DimPredecessorKinds, vec![d]);
        }
        if !kinds_ok(&v.succs[d], &[COLOR_ACCESS_IN, COLOR_ACCESS_OUT, COLOR_DIM]) {
            fail(DimSuccessorKinds, vec![d]);
        }
        if v.succs_of(d, COLOR_ACCESS_IN).is_empty() && v.succs_of(d, COLOR_ACCESS_OUT).is_empty() {
            fail(UnusedNode, vec![d]);
        }
    }
    for &k in v.block(COLOR_ARG_POS) {
        if !v.preds[k].is_empty() {
            fail(ArgPosNoPredecessors, vec![k]);
        }
        if !kinds_ok(&v.succs[k], &[COLOR_ACCESS_IN]) {
            fail(ArgPosSuccessorKinds, vec![k]);
        }
    }
    for (color, condition) in [
        (COLOR_DIM, DimTournament),
        (COLOR_LENGTH, LengthTournament),
        (COLOR_DTYPE, DtypeTournament),
    ] {
        if tournament_order(&v, color).is_none() {
            fail(condition, v.block(color).to_vec());
        }
    }
    if v.block(COLOR_OUTPUT).is_empty() {
        fail(NonEmptyBatch, vec![]);
    }
    if v.block(COLOR_ARG_POS).is_empty() {
        fail(NonEmptyOperands, vec![]);
    }

    // label maps and their agreement with the rank tournaments
    let dtype_nodes: BTreeSet<usize> = v.block(COLOR_DTYPE).iter().copied().collect();
    let length_nodes: BTreeSet<usize> = v.block(COLOR_LENGTH).iter().copied().collect();
    if g.iota_dtype.keys().copied().collect::<BTreeSet<_>>() != dtype_nodes
        || g.iota_length.keys().copied().collect::<BTreeSet<_>>() != length_nodes
    {
        fail(LabelMaps, vec![]);
    } else {
        let increasing = |order: Option<Vec<usize>>, key: &dyn Fn(usize) -> usize| {
            order.is_none_or(|o| o.windows(2).all(|w| key(w[0]) < key(w[1])))
        };
        let length_ok = increasing(tournament_order(&v, COLOR_LENGTH), &|n| g.iota_length[&n]);
        let dtype_ok = increasing(tournament_order(&v, COLOR_DTYPE), &|n| {
            g.iota_dtype[&n].rank() as usize
        });
        if !length_ok || !dtype_ok {
            fail(RankLabelsOrdered, vec![]);
        }
    }

    // The remaining conditions reason about well-formed accesses only.
    let accesses: Vec<Access> = v
        .block(COLOR_ACCESS_IN)
        .iter()
        .filter_map(|&n| Access::of(&v, n))
        .collect();

    let mut index_length_by_arg_dim: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
    for a in &accesses {
        let Some(arg) = a.arg else { continue };
        let len = v.only_pred(a.index, COLOR_LENGTH);
        let Some(len) = len else { continue };
        match index_length_by_arg_dim.get(&(arg, a.dim)) {
            Some(&(other, witness)) if other != len => {
                fail(ShapeConsistency, vec![witness, a.node])
            }
            Some(_) => {}
            None => {
                index_length_by_arg_dim.insert((arg, a.dim), (len, a.node));
            }
        }
    }

    for &n in v.block(COLOR_ACCESS_OUT) {
        for i in v.preds_of(n, COLOR_INDEX) {
            if v.succs_of(i, COLOR_ACCESS_IN).is_empty() {
                fail(OutputIndexInInputs, vec![n, i]);
            }
        }
    }

    let mut by_key: HashMap<(usize, usize, usize, usize), Vec<usize>> = HashMap::new();
    for a in &accesses {
        by_key
            .entry((a.index, a.dim, a.slot, a.output))
            .or_default()
            .push(a.node);
    }
    for a in &accesses {
        for &o in v.block(COLOR_OUTPUT) {
            let count = by_key.get(&(a.index, a.dim, a.slot, o)).map_or(0, Vec::len);
            if count != 1 {
                fail(AccessSingleton, vec![a.node, o]);
            }
        }
    }

    let out_indices: BTreeSet<Vec<usize>> = v
        .block(COLOR_ACCESS_OUT)
        .iter()
        .map(|&n| v.preds_of(n, COLOR_INDEX))
        .collect();
    if out_indices.len() != v.block(COLOR_ACCESS_OUT).len() {
        fail(DistinctOutputIndices, v.block(COLOR_ACCESS_OUT).to_vec());
    }

    let mut by_slot_row: BTreeMap<(usize, usize), Vec<&Access>> = BTreeMap::new();
    for a in &accesses {
        by_slot_row.entry((a.slot, a.output)).or_default().push(a);
    }
    let mut lengths_per_arg: HashMap<usize, (Vec<Option<usize>>, usize)> = HashMap::new();
    for &k in v.block(COLOR_ARG_POS) {
        for &o in v.block(COLOR_OUTPUT) {
            let group = by_slot_row.get(&(k, o)).map(Vec::as_slice).unwrap_or(&[]);
            let arg_set: BTreeSet<usize> = group
                .iter()
                .flat_map(|a| v.succs[a.node].iter().copied())
                .collect();
            if arg_set.len() != 1 {
                fail(SingleArgPerSlotAndRow, vec![k, o]);
            }
            let dims: BTreeSet<usize> = group.iter().map(|a| a.dim).collect();
            if !dims_are_prefix(&v, &dims, false) {
                fail(ArgDimsConsecutive, vec![k, o]);
            }
            if dims.len() != group.len() {
                fail(SingleIndexPerSlotRowDim, vec![k, o]);
            }
            if let (Some(&arg), true) = (arg_set.iter().next(), dims.len() == group.len()) {
                let mut ordered: Vec<&&Access> = group.iter().collect();
                ordered.sort_by_key(|a| v.dim_rank(a.dim));
                let lens: Vec<Option<usize>> = ordered
                    .iter()
                    .map(|a| v.only_pred(a.index, COLOR_LENGTH))
                    .collect();
                match lengths_per_arg.get(&arg) {
                    Some((prev, witness)) if *prev != lens => {
                        fail(ArgConsistentAcrossUses, vec![arg, *witness, k, o]);
                    }
                    Some(_) => {}
                    None => {
                        lengths_per_arg.insert(arg, (lens, k));
                    }
                }
            }
        }
    }

    let out_dims: BTreeSet<usize> = v
        .block(COLOR_ACCESS_OUT)
        .iter()
        .flat_map(|&n| v.preds_of(n, COLOR_DIM))
        .collect();
    if !dims_are_prefix(&v, &out_dims, true) {
        fail(OutputDimsConsecutive, out_dims.into_iter().collect());
    }

    out
}

/// A well-formed input access: exactly one predecessor of each kind.
struct Access {
    node: usize,
    index: usize,
    dim: usize,
    slot: usize,
    output: usize,
    arg: Option<usize>,
}

impl Access {
    fn of(v: &View<'_>, node: usize) -> Option<Access> {
        Some(Access {
            node,
            index: v.only_pred(node, COLOR_INDEX)?,
            dim: v.only_pred(node, COLOR_DIM)?,
            slot: v.only_pred(node, COLOR_ARG_POS)?,
            output: v.only_pred(node, COLOR_OUTPUT)?,
            arg: match v.succs[node][..] {
                [a] => Some(a),
                _ => None,
            },
        })
    }
}

/// Checks the consecutive-dimension condition: exactly one member without
/// dim predecessors, every other member with a predecessor inside the set,
/// and the set closed under dim predecessors (so it is a prefix of the
/// tournament order). `allow_empty` relaxes the first clause for an empty
/// set.
fn dims_are_prefix(v: &View<'_>, dims: &BTreeSet<usize>, allow_empty: bool) -> bool {
    if dims.is_empty() {
        return allow_empty;
    }
    let sources = dims
        .iter()
        .filter(|&&d| v.preds_of(d, COLOR_DIM).is_empty())
        .count();
    let linked = dims
        .iter()
        .filter(|&&d| v.preds_of(d, COLOR_DIM).iter().any(|p| dims.contains(p)))
        .count();
    let closed = dims
        .iter()
        .all(|&d| v.preds_of(d, COLOR_DIM).iter().all(|p| dims.contains(p)));
    sources == 1 && linked == dims.len() - 1 && closed
}

/// The unique order `v_1..v_m` with `v_i → v_j` iff `i < j`, if the block
/// induces a transitive tournament.
fn tournament_order(v: &View<'_>, color: u32) -> Option<Vec<usize>> {
    let block = v.block(color);
    let m = block.len();
    let mut order: Vec<usize> = block.to_vec();
    order.sort_by_key(|&u| std::cmp::Reverse(v.succs_of(u, color).len()));
    let adj = &v.g.graph.adjacency;
    for (i, &a) in order.iter().enumerate() {
        if v.succs_of(a, color).len() != m - 1 - i {
            return None;
        }
        for &b in &order[i + 1..] {
            if !adj.has_edge(a, b) || adj.has_edge(b, a) {
                return None;
            }
        }
    }
    Some(order)
}

/// `k ≤ 26` → k-th lowercase letter, otherwise `idx{k}`.
pub fn default_index_name(k: usize) -> String {
    debug_assert!(k >= 1);
    if (1..=26).contains(&k) {
        char::from(b'a' + (k - 1) as u8).to_string()
    } else {
        format!("idx{k}")
    }
}

/// `A{k-1}`.
pub fn default_arg_name(k: usize) -> String {
    debug_assert!(k >= 1);
    format!("A{}", k - 1)
}

/// Decoded batched einsum plus the inferred numberings (1-based) of the
/// index, argument, output and arg-position nodes.
#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub einsum: BatchedEinsum,
    pub index_inferred: BTreeMap<usize, usize>,
    pub arg_inferred: BTreeMap<usize, usize>,
    pub output_inferred: BTreeMap<usize, usize>,
    pub arg_pos_inferred: BTreeMap<usize, usize>,
}

/// Decodes a compliant induced graph. Numberings within each block follow
/// node ids; dimension numbers come from the dim tournament.
pub fn to_batched_einsum(
    g: &InducedGraph,
    index_name: &dyn Fn(usize) -> String,
    arg_name: &dyn Fn(usize) -> String,
) -> Result<Reconstruction> {
    let violations = check_compliance(g);
    if !violations.is_empty() {
        return Err(Error::NonCompliant(violations));
    }
    let v = View::new(g);
    let number = |color: u32| -> BTreeMap<usize, usize> {
        v.block(color)
            .iter()
            .enumerate()
            .map(|(k, &n)| (n, k + 1))
            .collect()
    };
    let arg_pos_inferred = number(COLOR_ARG_POS);
    let output_inferred = number(COLOR_OUTPUT);
    let index_inferred = number(COLOR_INDEX);
    let arg_inferred = number(COLOR_ARG);

    let index_names: BTreeMap<usize, String> = index_inferred
        .iter()
        .map(|(&n, &k)| (n, index_name(k)))
        .collect();
    let arg_names: BTreeMap<usize, String> = arg_inferred
        .iter()
        .map(|(&n, &k)| (n, arg_name(k)))
        .collect();
    if index_names.values().collect::<BTreeSet<_>>().len() != index_names.len() {
        return Err(Error::NameCollision("index names repeat".into()));
    }
    if arg_names.values().collect::<BTreeSet<_>>().len() != arg_names.len() {
        return Err(Error::NameCollision("argument names repeat".into()));
    }

    // output index list, ordered by dimension number
    let mut out_slots: Vec<(usize, usize)> = v
        .block(COLOR_ACCESS_OUT)
        .iter()
        .map(|&n| {
            let d = v.only_pred(n, COLOR_DIM).unwrap();
            let i = v.only_pred(n, COLOR_INDEX).unwrap();
            (v.dim_rank(d), i)
        })
        .collect();
    out_slots.sort();
    let i_out = IndexList(
        out_slots
            .iter()
            .map(|&(_, i)| index_names[&i].clone())
            .collect(),
    );

    let accesses: Vec<Access> = v
        .block(COLOR_ACCESS_IN)
        .iter()
        .map(|&n| Access::of(&v, n).unwrap())
        .collect();
    let slots = v.block(COLOR_ARG_POS);
    let outputs = v.block(COLOR_OUTPUT);

    // per slot: index node at each dimension number
    let mut slot_indices: Vec<BTreeMap<usize, usize>> = vec![BTreeMap::new(); slots.len()];
    for a in &accesses {
        let j = arg_pos_inferred[&a.slot] - 1;
        slot_indices[j].insert(v.dim_rank(a.dim), a.index);
    }
    let i_in: Vec<IndexList> = slot_indices
        .iter()
        .map(|m| IndexList(m.values().map(|i| index_names[i].clone()).collect()))
        .collect();

    let mut args = vec![Vec::with_capacity(slots.len()); outputs.len()];
    for (row, &o) in outputs.iter().enumerate() {
        for (j, &k) in slots.iter().enumerate() {
            let arg = accesses
                .iter()
                .find(|a| a.output == o && a.slot == k)
                .and_then(|a| a.arg)
                .expect("compliance guarantees one argument per slot and row");
            let shape: Vec<usize> = slot_indices[j]
                .values()
                .map(|&i| g.iota_length[&v.only_pred(i, COLOR_LENGTH).unwrap()])
                .collect();
            let dtype = g.iota_dtype[&v.only_pred(arg, COLOR_DTYPE).unwrap()];
            args[row].push(ArrayMeta::new(arg_names[&arg].clone(), shape, dtype));
        }
    }
    let einsum = BatchedEinsum::checked(i_out, i_in, args)?;
    Ok(Reconstruction {
        einsum,
        index_inferred,
        arg_inferred,
        output_inferred,
        arg_pos_inferred,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::IndexList;

    fn f64a(name: &str, shape: &[usize]) -> ArrayMeta {
        ArrayMeta::new(name, shape.to_vec(), DtypeCode::Float64)
    }

    fn example_b() -> BatchedEinsum {
        BatchedEinsum::new(
            IndexList::from_letters("i"),
            vec![IndexList::from_letters("ik"), IndexList::from_letters("ij")],
            vec![vec![f64a("A", &[72, 18]), f64a("B", &[72, 18])]],
        )
    }

    #[test]
    fn node_counts_example_b() {
        let e = example_b();
        let c = NodeCounts::of(&e);
        assert_eq!(
            (
                c.args,
                c.indices,
                c.dtypes,
                c.lengths,
                c.dims,
                c.access_in,
                c.access_out,
                c.outputs,
                c.arg_positions
            ),
            (2, 3, 1, 2, 2, 4, 1, 1, 2)
        );
        assert_eq!(c.total(), 18);
        let g = to_induced_graph(&e).unwrap();
        assert_eq!(g.len(), 18);
        assert!(check_compliance(&g).is_empty());
    }

    #[test]
    fn node_counts_copy() {
        let e = BatchedEinsum::new(
            IndexList::from_letters("i"),
            vec![IndexList::from_letters("i")],
            vec![vec![f64a("X", &[5])]],
        );
        let g = to_induced_graph(&e).unwrap();
        assert_eq!(g.len(), 9);
        for c in 1..=9 {
            assert_eq!(g.graph.colors.iter().filter(|&&x| x == c).count(), 1);
        }
        let r = to_batched_einsum(&g, &default_index_name, &default_arg_name).unwrap();
        assert_eq!(
            crate::notation::print_classic(&r.einsum).unwrap(),
            "einsum: a->a\nrow: A0\narray: A0 float64 5\n"
        );
    }

    #[test]
    fn label_maps_cover_their_blocks() {
        let g = to_induced_graph(&example_b()).unwrap();
        let on = |c: u32| -> BTreeSet<usize> {
            (0..g.len()).filter(|&v| g.graph.colors[v] == c).collect()
        };
        assert_eq!(
            g.iota_dtype.keys().copied().collect::<BTreeSet<_>>(),
            on(COLOR_DTYPE)
        );
        assert_eq!(
            g.iota_length.keys().copied().collect::<BTreeSet<_>>(),
            on(COLOR_LENGTH)
        );
        assert_eq!(
            g.iota_index.keys().copied().collect::<BTreeSet<_>>(),
            on(COLOR_INDEX)
        );
        assert_eq!(
            g.iota_arg.keys().copied().collect::<BTreeSet<_>>(),
            on(COLOR_ARG)
        );
    }

    #[test]
    fn extra_arg_successor_is_reported() {
        let mut g = to_induced_graph(&example_b()).unwrap();
        let arg = *g.iota_arg.keys().next().unwrap();
        let idx = *g.iota_index.keys().next().unwrap();
        g.graph.adjacency.set(arg, idx, true);
        let v = check_compliance(&g);
        assert!(v
            .iter()
            .any(|x| x.condition == Condition::ArgNoSuccessors && x.nodes == vec![arg]));
    }

    #[test]
    fn color_out_of_range_is_reported() {
        let mut g = to_induced_graph(&example_b()).unwrap();
        g.graph.colors[0] = 10;
        assert!(check_compliance(&g)
            .iter()
            .any(|x| x.condition == Condition::ColorRange));
    }

    #[test]
    fn broken_tournament_is_reported() {
        let mut g = to_induced_graph(&example_b()).unwrap();
        let lens: Vec<usize> = g.iota_length.keys().copied().collect();
        g.graph.adjacency.set(lens[0], lens[1], true);
        g.graph.adjacency.set(lens[1], lens[0], true);
        assert!(check_compliance(&g)
            .iter()
            .any(|x| x.condition == Condition::LengthTournament));
    }

    #[test]
    fn tournaments_follow_values() {
        let e = BatchedEinsum::new(
            IndexList::from_letters("ij"),
            vec![IndexList::from_letters("ijk"), IndexList::from_letters("k")],
            vec![vec![
                ArrayMeta::new("A", vec![5, 2, 9], DtypeCode::Float32),
                ArrayMeta::new("B", vec![9], DtypeCode::Int8),
            ]],
        );
        let g = to_induced_graph(&e).unwrap();
        for (&a, &la) in &g.iota_length {
            for (&b, &lb) in &g.iota_length {
                assert_eq!(g.graph.adjacency.has_edge(a, b), lb > la);
            }
        }
        for (&a, &ta) in &g.iota_dtype {
            for (&b, &tb) in &g.iota_dtype {
                assert_eq!(g.graph.adjacency.has_edge(a, b), tb.rank() > ta.rank());
            }
        }
    }

    #[test]
    fn empty_output_is_encodable() {
        let e = BatchedEinsum::new(
            IndexList::default(),
            vec![IndexList::from_letters("i")],
            vec![vec![f64a("x", &[3])], vec![f64a("y", &[3])]],
        );
        let g = to_induced_graph(&e).unwrap();
        assert!(check_compliance(&g).is_empty());
        let r = to_batched_einsum(&g, &default_index_name, &default_arg_name).unwrap();
        assert!(r.einsum.i_out.is_empty());
        assert_eq!(r.einsum.b(), 2);
    }

    #[test]
    fn scalar_operand_is_unencodable() {
        let e = BatchedEinsum::new(
            IndexList::from_letters("i"),
            vec![IndexList::from_letters("i"), IndexList::default()],
            vec![vec![f64a("x", &[3]), f64a("s", &[])]],
        );
        assert!(matches!(to_induced_graph(&e), Err(Error::Unencodable(_))));
    }

    #[test]
    fn empty_output_block_is_noncompliant() {
        let g = InducedGraph {
            graph: ColoredDigraph::new(Adjacency::new(0), vec![]),
            iota_dtype: BTreeMap::new(),
            iota_length: BTreeMap::new(),
            iota_index: BTreeMap::new(),
            iota_arg: BTreeMap::new(),
            iota_output: BTreeMap::new(),
            iota_arg_pos: BTreeMap::new(),
        };
        let v = check_compliance(&g);
        assert!(v.iter().any(|x| x.condition == Condition::NonEmptyBatch));
        assert!(to_batched_einsum(&g, &default_index_name, &default_arg_name).is_err());
    }

    #[test]
    fn non_injective_names_rejected() {
        let g = to_induced_graph(&example_b()).unwrap();
        let r = to_batched_einsum(&g, &|_| "x".to_string(), &default_arg_name);
        assert!(matches!(r, Err(Error::NameCollision(_))));
    }

    #[test]
    fn default_names() {
        assert_eq!(default_index_name(1), "a");
        assert_eq!(default_index_name(3), "c");
        assert_eq!(default_index_name(26), "z");
        assert_eq!(default_index_name(27), "idx27");
        assert_eq!(default_arg_name(1), "A0");
        assert_eq!(default_arg_name(2), "A1");
    }

    #[test]
    fn dot_export_mentions_every_node() {
        let g = to_induced_graph(&example_b()).unwrap();
        let dot = g.to_dot();
        assert!(dot.starts_with("digraph"));
        assert_eq!(dot.matches("[label=").count(), 18);
    }
}
