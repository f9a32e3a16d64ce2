//! Fan-in-four block circuits and their metered streaming evaluation.
//!
//! Every wire of a block circuit carries one `c`-bit block. Gates have
//! fan-in at most four and compute a fixed block function of their
//! children. Such a circuit of depth `d` with `m` outputs turns into a
//! streaming algorithm by evaluating the children of each gate
//! sequentially and rereading the sample stream once per leaf visit: at
//! most `m * 4^d` passes, holding at most `4c(d+m)` bits between reads.
//! [`eval_streaming`] realizes exactly that recursion and accounts for
//! it on a [`ResourceMeter`]; the width claim is checked against the
//! meter rather than by materializing the exponential-width program.
//!
//! The one circuit family built here is blocked Gaussian elimination
//! ([`build_ge_circuit`]): `[A | b]` viewed as a `K x (K+1)` block
//! matrix with blocks of size `(n/K) x (n/K)`, eliminated in `K` pivot
//! steps. A non-invertible pivot turns the affected wire into
//! [`Block::Singular`], which propagates to every dependent gate, so
//! attempt-level retry logic stays with the caller.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gf2::{Gf2Matrix, Gf2Vector};

/// A wire value: a concrete block, or the marker a failed pivot spreads
/// to everything computed from it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Block {
    Val(Gf2Matrix),
    Singular,
}

impl Block {
    /// Bits this value keeps alive: the block size, or one flag bit for
    /// the singular marker.
    pub fn bits(&self) -> usize {
        match self {
            Block::Val(m) => m.rows() * m.cols(),
            Block::Singular => 1,
        }
    }

    pub fn is_singular(&self) -> bool {
        matches!(self, Block::Singular)
    }

    pub fn val(&self) -> Option<&Gf2Matrix> {
        match self {
            Block::Val(m) => Some(m),
            Block::Singular => None,
        }
    }
}

/// Reference to a gate input: one of the circuit's leaf wires or the
/// output of an earlier gate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeRef {
    Input(usize),
    Gate(usize),
}

/// Block functions gates may compute. `PivotApply` and `Eliminate` are
/// the two Gaussian elimination update forms; `Xor` is the generic
/// block sum used by plain fan-in circuits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GateOp {
    /// Sum of all children (one to four of them).
    Xor,
    /// Children `[ii, ik]`; computes `ii^-1 * ik`, or the singular
    /// marker when `ii` has no inverse.
    PivotApply,
    /// Children `[jk, ji, ii, ik]`; computes `jk + ji * ii^-1 * ik`,
    /// or the singular marker when `ii` has no inverse.
    Eliminate,
}

impl GateOp {
    fn arity_ok(self, fan_in: usize) -> bool {
        match self {
            GateOp::Xor => (1..=4).contains(&fan_in),
            GateOp::PivotApply => fan_in == 2,
            GateOp::Eliminate => fan_in == 4,
        }
    }
}

/// One gate: an operation over at most four child wires.
#[derive(Clone, Debug)]
pub struct Gate {
    pub op: GateOp,
    pub children: Vec<NodeRef>,
}

/// An acyclic circuit over `c`-bit block wires with fan-in at most
/// four. Gates may only reference inputs and earlier gates, so the gate
/// list is already a topological order.
#[derive(Clone, Debug)]
pub struct BlockCircuit {
    capacity: usize,
    inputs: usize,
    gates: Vec<Gate>,
    outputs: Vec<NodeRef>,
    depth: usize,
}

impl BlockCircuit {
    /// Validates fan-in, reference order, and output references, and
    /// computes the depth (longest input-to-output gate path).
    ///
    /// # Errors
    ///
    /// Returns [`Error::InvalidArg`] when a gate's fan-in does not fit
    /// its operation, a child references a later gate, or an output
    /// names a missing node.
    pub fn new(
        capacity: usize,
        inputs: usize,
        gates: Vec<Gate>,
        outputs: Vec<NodeRef>,
    ) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::invalid("wire capacity must be positive"));
        }
        if outputs.is_empty() {
            return Err(Error::invalid("a circuit needs at least one output"));
        }
        let mut gate_depth = Vec::with_capacity(gates.len());
        for (g, gate) in gates.iter().enumerate() {
            if !gate.op.arity_ok(gate.children.len()) {
                return Err(Error::invalid(format!(
                    "gate {g} has fan-in {} which {:?} does not take",
                    gate.children.len(),
                    gate.op
                )));
            }
            let mut depth = 0usize;
            for &child in &gate.children {
                match child {
                    NodeRef::Input(w) if w < inputs => {}
                    NodeRef::Input(w) => {
                        return Err(Error::invalid(format!(
                            "gate {g} reads missing input wire {w}"
                        )));
                    }
                    NodeRef::Gate(h) if h < g => depth = depth.max(gate_depth[h]),
                    NodeRef::Gate(h) => {
                        return Err(Error::invalid(format!(
                            "gate {g} reads gate {h}, which is not earlier in the list"
                        )));
                    }
                }
            }
            gate_depth.push(depth + 1);
        }
        let mut depth = 0usize;
        for &out in &outputs {
            match out {
                NodeRef::Input(w) if w < inputs => {}
                NodeRef::Gate(h) if h < gates.len() => depth = depth.max(gate_depth[h]),
                _ => return Err(Error::invalid("output references a missing node")),
            }
        }
        Ok(BlockCircuit { capacity, inputs, gates, outputs, depth })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn num_inputs(&self) -> usize {
        self.inputs
    }

    pub fn num_outputs(&self) -> usize {
        self.outputs.len()
    }

    pub fn num_gates(&self) -> usize {
        self.gates.len()
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Pass budget of the streaming evaluation, `m * 4^depth`,
    /// saturating on overflow.
    pub fn pass_budget(&self) -> u64 {
        let per_output = 4u64.saturating_pow(self.depth.min(31) as u32);
        (self.outputs.len() as u64).saturating_mul(per_output)
    }

    /// Memory budget of the streaming evaluation, `4c(d+m)` bits.
    pub fn memory_budget(&self) -> u64 {
        4 * self.capacity as u64 * (self.depth + self.outputs.len()) as u64
    }
}

/// Replayable cursor over a window of labeled samples `(a_t, b_t)`.
/// `a_t` is a sample index (its low bits are the GF(2) row) and `b_t`
/// the label in the 0/1 edge-key convention.
///
/// Readers consume whole passes in order: [`begin_pass`], then
/// [`next`] until the window is exhausted, then [`end_pass`]. The
/// pass counter advances exactly once per full scan, and partial or
/// nested scans are rejected, so every consumer provably reads the
/// stream in the original order.
///
/// [`begin_pass`]: StreamCursor::begin_pass
/// [`next`]: StreamCursor::next
/// [`end_pass`]: StreamCursor::end_pass
#[derive(Debug)]
pub struct StreamCursor<'a> {
    pairs: &'a [(u64, u8)],
    position: usize,
    in_pass: bool,
    passes_consumed: u64,
    samples_read: u64,
}

impl<'a> StreamCursor<'a> {
    pub fn new(pairs: &'a [(u64, u8)]) -> Self {
        StreamCursor { pairs, position: 0, in_pass: false, passes_consumed: 0, samples_read: 0 }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn passes_consumed(&self) -> u64 {
        self.passes_consumed
    }

    pub fn samples_read(&self) -> u64 {
        self.samples_read
    }

    /// Starts a fresh scan from the beginning of the window.
    ///
    /// # Errors
    ///
    /// Returns [`Error::Invariant`] when a scan is already open.
    pub fn begin_pass(&mut self) -> Result<()> {
        if self.in_pass {
            return Err(Error::invariant(
                "stream pass opened while another pass is in progress",
            ));
        }
        self.in_pass = true;
        self.position = 0;
        Ok(())
    }

    /// Yields the next sample of the open scan, or `None` at the end.
    ///
    /// # Panics
    ///
    /// Panics when called outside an open pass.
    #[allow(clippy::should_implement_trait)]
    pub fn next(&mut self) -> Option<(u64, u8)> {
        assert!(self.in_pass, "stream read outside an open pass");
        let pair = self.pairs.get(self.position).copied();
        if pair.is_some() {
            self.position += 1;
            self.samples_read += 1;
        }
        pair
    }

    /// Closes the scan and counts it as one consumed pass.
    ///
    /// # Errors
    ///
    /// Returns [`Error::Invariant`] when no scan is open or the scan
    /// stopped before the end of the window.
    pub fn end_pass(&mut self) -> Result<()> {
        if !self.in_pass {
            return Err(Error::invariant("stream pass closed but none was open"));
        }
        if self.position != self.pairs.len() {
            return Err(Error::invariant(
                "stream pass closed before the window was exhausted",
            ));
        }
        self.in_pass = false;
        self.passes_consumed += 1;
        Ok(())
    }
}

/// Resource accounting for one streaming evaluation: full scans of the
/// stream, samples touched across them, and the high-water mark of bits
/// retained between reads. All counters are monotone.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ResourceMeter {
    pub passes_used: u64,
    pub peak_live_bits: u64,
    pub samples_touched: u64,
    #[serde(skip)]
    live_bits: u64,
}

impl ResourceMeter {
    fn retain(&mut self, bits: usize) {
        self.live_bits += bits as u64;
        self.peak_live_bits = self.peak_live_bits.max(self.live_bits);
    }

    fn release(&mut self, bits: usize) {
        debug_assert!(self.live_bits >= bits as u64, "released more bits than retained");
        self.live_bits = self.live_bits.saturating_sub(bits as u64);
    }

    /// Folds another run into this meter: passes and samples add up,
    /// peaks take the maximum.
    pub fn absorb(&mut self, other: &ResourceMeter) {
        self.passes_used += other.passes_used;
        self.samples_touched += other.samples_touched;
        self.peak_live_bits = self.peak_live_bits.max(other.peak_live_bits);
    }
}

fn apply_gate(op: GateOp, kids: &[Block], capacity: usize) -> Result<Block> {
    debug_assert!(op.arity_ok(kids.len()), "fan-in was validated at construction");
    if kids.iter().any(Block::is_singular) {
        return Ok(Block::Singular);
    }
    let val = |b: &Block| b.val().expect("singular children were filtered").clone();
    let out = match op {
        GateOp::Xor => {
            let mut acc = val(&kids[0]);
            for kid in &kids[1..] {
                let m = val(kid);
                if m.rows() != acc.rows() || m.cols() != acc.cols() {
                    return Err(Error::invariant("xor gate fed blocks of mixed shapes"));
                }
                acc = acc.add(&m);
            }
            acc
        }
        GateOp::PivotApply => {
            let (ii, ik) = (val(&kids[0]), val(&kids[1]));
            match ii.invert() {
                Some(inv) => inv.mul(&ik),
                None => return Ok(Block::Singular),
            }
        }
        GateOp::Eliminate => {
            let (jk, ji, ii, ik) = (val(&kids[0]), val(&kids[1]), val(&kids[2]), val(&kids[3]));
            match ii.invert() {
                Some(inv) => jk.add(&ji.mul(&inv).mul(&ik)),
                None => return Ok(Block::Singular),
            }
        }
    };
    if out.rows() * out.cols() > capacity {
        return Err(Error::invariant("gate output exceeds the wire capacity"));
    }
    Ok(Block::Val(out))
}

fn eval_node<F>(
    cir: &BlockCircuit,
    node: NodeRef,
    leaf_reader: &mut F,
    cursor: &mut StreamCursor<'_>,
    meter: &mut ResourceMeter,
) -> Result<Block>
where
    F: FnMut(usize, &mut StreamCursor<'_>) -> Result<Block>,
{
    match node {
        NodeRef::Input(w) => {
            let before = cursor.passes_consumed();
            let block = leaf_reader(w, cursor)?;
            if cursor.passes_consumed() != before + 1 {
                return Err(Error::invariant(
                    "leaf reader must consume exactly one full pass",
                ));
            }
            if block.bits() > cir.capacity {
                return Err(Error::invariant("leaf block exceeds the wire capacity"));
            }
            meter.passes_used += 1;
            Ok(block)
        }
        NodeRef::Gate(g) => {
            let gate = &cir.gates[g];
            let mut kids = Vec::with_capacity(gate.children.len());
            for &child in &gate.children {
                let block = eval_node(cir, child, leaf_reader, cursor, meter)?;
                meter.retain(block.bits());
                kids.push(block);
            }
            let out = apply_gate(gate.op, &kids, cir.capacity)?;
            for kid in &kids {
                meter.release(kid.bits());
            }
            Ok(out)
        }
    }
}

/// Evaluates the circuit as a multi-pass streaming algorithm.
///
/// Children of every gate are computed sequentially, each leaf visit
/// paying one full pass through `cursor` via `leaf_reader(wire,
/// cursor)`. Nothing is memoized, so shared subcircuits are recomputed
/// per visit and the meter matches the plain recursion: `passes_used <=
/// m * 4^depth` and `peak_live_bits <= 4c(d+m)`. Finished outputs stay
/// retained on the meter until the run ends.
///
/// # Errors
///
/// Returns [`Error::Invariant`] when the leaf reader breaks the
/// accounting contract (more than one pass per call, or a block wider
/// than the wire capacity), and passes through reader errors.
pub fn eval_streaming<F>(
    cir: &BlockCircuit,
    leaf_reader: &mut F,
    cursor: &mut StreamCursor<'_>,
) -> Result<(Vec<Block>, ResourceMeter)>
where
    F: FnMut(usize, &mut StreamCursor<'_>) -> Result<Block>,
{
    let mut meter = ResourceMeter::default();
    let read_before = cursor.samples_read();
    let mut outputs = Vec::with_capacity(cir.outputs.len());
    for &out in &cir.outputs {
        let block = eval_node(cir, out, leaf_reader, cursor, &mut meter)?;
        meter.retain(block.bits());
        outputs.push(block);
    }
    meter.samples_touched = cursor.samples_read() - read_before;
    Ok((outputs, meter))
}

/// Evaluates the circuit with all leaves materialized in a single pass
/// and every gate computed once.
///
/// This is the optimized mode: far fewer passes than [`eval_streaming`]
/// at the price of keeping all `n` input blocks and every gate output
/// alive at once. It exists for cross-checking outputs; resource-bound
/// claims are only made about the plain recursion.
///
/// # Errors
///
/// Returns [`Error::Invariant`] when `all_leaves` returns the wrong
/// number of blocks or oversized ones, and passes through reader
/// errors.
pub fn eval_singlepass<F>(
    cir: &BlockCircuit,
    all_leaves: F,
    cursor: &mut StreamCursor<'_>,
) -> Result<(Vec<Block>, ResourceMeter)>
where
    F: FnOnce(&mut StreamCursor<'_>) -> Result<Vec<Block>>,
{
    let mut meter = ResourceMeter::default();
    let read_before = cursor.samples_read();
    let passes_before = cursor.passes_consumed();
    let leaves = all_leaves(cursor)?;
    if cursor.passes_consumed() != passes_before + 1 {
        return Err(Error::invariant("leaf materialization must take exactly one pass"));
    }
    if leaves.len() != cir.inputs {
        return Err(Error::invariant("leaf materialization returned the wrong arity"));
    }
    for leaf in &leaves {
        if leaf.bits() > cir.capacity {
            return Err(Error::invariant("leaf block exceeds the wire capacity"));
        }
        meter.retain(leaf.bits());
    }
    meter.passes_used += 1;
    let mut values: Vec<Block> = Vec::with_capacity(cir.gates.len());
    for gate in &cir.gates {
        let kids: Vec<Block> = gate
            .children
            .iter()
            .map(|&child| match child {
                NodeRef::Input(w) => leaves[w].clone(),
                NodeRef::Gate(h) => values[h].clone(),
            })
            .collect();
        let out = apply_gate(gate.op, &kids, cir.capacity)?;
        meter.retain(out.bits());
        values.push(out);
    }
    let outputs = cir
        .outputs
        .iter()
        .map(|&out| match out {
            NodeRef::Input(w) => leaves[w].clone(),
            NodeRef::Gate(h) => values[h].clone(),
        })
        .collect();
    meter.samples_touched = cursor.samples_read() - read_before;
    Ok((outputs, meter))
}

/// Builds the blocked Gaussian elimination circuit for `[A | b]` over
/// dimension `n` with `K = k_blocks` pivot steps.
///
/// The input wires are the `K x (K+1)` blocks of `[A | b]` in row-major
/// order (wire `j*(K+1) + k` is block `(j, k)`), each of size `(n/K) x
/// (n/K)`, so the capacity is `c = (n/K)^2`. Step `i` rescales pivot
/// row `i` by the inverse of its diagonal block and eliminates column
/// `i` from every other row. Only nodes the outputs actually depend on
/// are materialized. The `K` outputs are the final column after the
/// last step; when all pivots were invertible their first columns
/// concatenate to the solution of `Ax = b`.
///
/// # Errors
///
/// Returns [`Error::InvalidArg`] when `k_blocks` is zero or does not
/// divide `n`.
pub fn build_ge_circuit(n: usize, k_blocks: usize) -> Result<BlockCircuit> {
    if k_blocks == 0 || n == 0 || !n.is_multiple_of(k_blocks) {
        return Err(Error::invalid("block count must be positive and divide the dimension"));
    }
    let k = k_blocks;
    let side = n / k;
    let mut gates = Vec::new();
    let mut memo: BTreeMap<(usize, usize, usize), NodeRef> = BTreeMap::new();
    fn need(
        step: usize,
        j: usize,
        col: usize,
        k: usize,
        gates: &mut Vec<Gate>,
        memo: &mut BTreeMap<(usize, usize, usize), NodeRef>,
    ) -> NodeRef {
        if step == 0 {
            return NodeRef::Input(j * (k + 1) + col);
        }
        if let Some(&node) = memo.get(&(step, j, col)) {
            return node;
        }
        let i = step - 1;
        let gate = if j == i {
            Gate {
                op: GateOp::PivotApply,
                children: vec![
                    need(i, i, i, k, gates, memo),
                    need(i, i, col, k, gates, memo),
                ],
            }
        } else {
            Gate {
                op: GateOp::Eliminate,
                children: vec![
                    need(i, j, col, k, gates, memo),
                    need(i, j, i, k, gates, memo),
                    need(i, i, i, k, gates, memo),
                    need(i, i, col, k, gates, memo),
                ],
            }
        };
        gates.push(gate);
        let node = NodeRef::Gate(gates.len() - 1);
        memo.insert((step, j, col), node);
        node
    }
    let outputs = (0..k).map(|j| need(k, j, k, k, &mut gates, &mut memo)).collect();
    BlockCircuit::new(side * side, k * (k + 1), gates, outputs)
}

/// Leaf reader extracting the `K x (K+1)` blocks of `[A | b]` from a
/// labeled sample stream.
///
/// Row `t` of `A` is the low `n` bits of `a_t`; the final block column
/// holds `b` in its first column and zeros elsewhere. Each call scans
/// one full pass and keeps only its own `(n/K)^2`-bit block. The stream
/// window must supply at least `n` samples; extra samples are read (the
/// pass discipline requires it) and ignored.
pub fn leaf_reader_samples(
    n: usize,
    k_blocks: usize,
) -> impl FnMut(usize, &mut StreamCursor<'_>) -> Result<Block> {
    let side = n / k_blocks;
    move |wire, cursor| {
        let j = wire / (k_blocks + 1);
        let col = wire % (k_blocks + 1);
        let mut block = Gf2Matrix::zeros(side, side);
        cursor.begin_pass()?;
        let mut t = 0usize;
        while let Some((a, b01)) = cursor.next() {
            if t >= j * side && t < (j + 1) * side {
                let row = t - j * side;
                if col < k_blocks {
                    for c in 0..side {
                        block.set_bit(row, c, (a >> (col * side + c)) & 1 == 1);
                    }
                } else {
                    block.set_bit(row, 0, b01 == 1);
                }
            }
            t += 1;
        }
        cursor.end_pass()?;
        if t < n {
            return Err(Error::invalid(format!(
                "stream window supplies {t} samples but the system needs {n}"
            )));
        }
        Ok(Block::Val(block))
    }
}

/// Single-pass variant of [`leaf_reader_samples`]: materializes all
/// `K x (K+1)` blocks in one scan, for [`eval_singlepass`].
pub fn read_all_blocks(
    n: usize,
    k_blocks: usize,
    cursor: &mut StreamCursor<'_>,
) -> Result<Vec<Block>> {
    let side = n / k_blocks;
    let mut tableau = Gf2Matrix::zeros(n, (k_blocks + 1) * side);
    cursor.begin_pass()?;
    let mut t = 0usize;
    while let Some((a, b01)) = cursor.next() {
        if t < n {
            for c in 0..n {
                tableau.set_bit(t, c, (a >> c) & 1 == 1);
            }
            tableau.set_bit(t, k_blocks * side, b01 == 1);
        }
        t += 1;
    }
    cursor.end_pass()?;
    if t < n {
        return Err(Error::invalid(format!(
            "stream window supplies {t} samples but the system needs {n}"
        )));
    }
    let mut blocks = Vec::with_capacity(k_blocks * (k_blocks + 1));
    for j in 0..k_blocks {
        for col in 0..=k_blocks {
            blocks.push(Block::Val(tableau.block(j * side, col * side, side, side)));
        }
    }
    Ok(blocks)
}

/// Reassembles the solution of `Ax = b` from the outputs of a
/// [`build_ge_circuit`] evaluation.
///
/// Returns `None` when any output carries the singular marker (some
/// pivot failed). Output block `j` contributes bits `j*(n/K)
/// .. (j+1)*(n/K)` of `x` from its first column.
///
/// # Errors
///
/// Returns [`Error::InvalidArg`] when the output count or block shapes
/// do not match the circuit for `(n, K)`.
pub fn assemble_solution(
    outputs: &[Block],
    n: usize,
    k_blocks: usize,
) -> Result<Option<Gf2Vector>> {
    if k_blocks == 0 || !n.is_multiple_of(k_blocks) || outputs.len() != k_blocks {
        return Err(Error::invalid("outputs do not match a K-block system"));
    }
    let side = n / k_blocks;
    let mut x = Gf2Vector::zeros(n);
    for (j, out) in outputs.iter().enumerate() {
        match out {
            Block::Singular => return Ok(None),
            Block::Val(m) => {
                if m.rows() != side || m.cols() != side {
                    return Err(Error::invalid("output block has the wrong shape"));
                }
                for r in 0..side {
                    x.set_bit(j * side + r, m.bit(r, 0));
                }
            }
        }
    }
    Ok(Some(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    fn parity_pairs(n: usize, x: &Gf2Vector, count: usize, seed: u64) -> Vec<(u64, u8)> {
        let mut rng = rng_from_seed(seed);
        (0..count)
            .map(|_| {
                let a: u64 = rng.gen_range(0..(1u64 << n));
                let b01 = Gf2Vector::from_index(n, a).dot(x);
                (a, b01)
            })
            .collect()
    }

    fn row_block(bits: &[u8]) -> Block {
        Block::Val(Gf2Matrix::from_bits(1, bits.len(), bits))
    }

    #[test]
    fn cursor_enforces_the_pass_discipline() {
        let pairs = [(0u64, 0u8), (1, 1)];
        let mut cursor = StreamCursor::new(&pairs);
        cursor.begin_pass().unwrap();
        assert!(cursor.begin_pass().is_err(), "nested passes are rejected");
        assert_eq!(cursor.next(), Some((0, 0)));
        assert!(cursor.end_pass().is_err(), "early close is rejected");
        assert_eq!(cursor.next(), Some((1, 1)));
        assert_eq!(cursor.next(), None);
        cursor.end_pass().unwrap();
        assert!(cursor.end_pass().is_err(), "double close is rejected");
        assert_eq!(cursor.passes_consumed(), 1);
        assert_eq!(cursor.samples_read(), 2);
    }

    #[test]
    fn single_leaf_circuit_takes_one_pass_within_capacity() {
        let cir = BlockCircuit::new(4, 1, vec![], vec![NodeRef::Input(0)]).unwrap();
        assert_eq!(cir.depth(), 0);
        let pairs = [(5u64, 0u8)];
        let mut cursor = StreamCursor::new(&pairs);
        let mut reader = |_w: usize, c: &mut StreamCursor<'_>| {
            c.begin_pass()?;
            while c.next().is_some() {}
            c.end_pass()?;
            Ok(row_block(&[1, 0, 1, 0]))
        };
        let (outs, meter) = eval_streaming(&cir, &mut reader, &mut cursor).unwrap();
        assert_eq!(outs.len(), 1);
        assert_eq!(meter.passes_used, 1);
        assert!(meter.peak_live_bits <= 4, "peak {} exceeds one block", meter.peak_live_bits);
    }

    #[test]
    fn full_quaternary_depth_two_tree_takes_sixteen_passes() {
        let level: Vec<Gate> = (0..4)
            .map(|g| Gate {
                op: GateOp::Xor,
                children: (0..4).map(|i| NodeRef::Input(4 * g + i)).collect(),
            })
            .collect();
        let mut gates = level;
        gates.push(Gate {
            op: GateOp::Xor,
            children: (0..4).map(NodeRef::Gate).collect(),
        });
        let cir = BlockCircuit::new(2, 16, gates, vec![NodeRef::Gate(4)]).unwrap();
        assert_eq!(cir.depth(), 2);
        assert_eq!(cir.pass_budget(), 16);
        let pairs = [(3u64, 0u8)];
        let mut cursor = StreamCursor::new(&pairs);
        let mut reader = |w: usize, c: &mut StreamCursor<'_>| {
            c.begin_pass()?;
            while c.next().is_some() {}
            c.end_pass()?;
            Ok(row_block(&[(w % 2) as u8, 1]))
        };
        let (outs, meter) = eval_streaming(&cir, &mut reader, &mut cursor).unwrap();
        assert_eq!(meter.passes_used, 16, "full 4-ary depth-2 recursion");
        assert!(meter.peak_live_bits <= cir.memory_budget());
        let out = outs[0].val().unwrap();
        assert!(!out.bit(0, 0), "eight odd wires cancel");
        assert!(!out.bit(0, 1), "sixteen ones cancel");
    }

    #[test]
    fn two_output_depth_one_circuit_stays_in_budget() {
        let gates = vec![
            Gate { op: GateOp::Xor, children: (0..4).map(NodeRef::Input).collect() },
            Gate { op: GateOp::Xor, children: (4..8).map(NodeRef::Input).collect() },
        ];
        let cir =
            BlockCircuit::new(3, 8, gates, vec![NodeRef::Gate(0), NodeRef::Gate(1)]).unwrap();
        assert_eq!(cir.depth(), 1);
        let pairs = [(0u64, 0u8)];
        let mut cursor = StreamCursor::new(&pairs);
        let mut reader = |w: usize, c: &mut StreamCursor<'_>| {
            c.begin_pass()?;
            while c.next().is_some() {}
            c.end_pass()?;
            Ok(row_block(&[1, (w % 2) as u8, 0]))
        };
        let (_, meter) = eval_streaming(&cir, &mut reader, &mut cursor).unwrap();
        assert!(meter.passes_used <= 8, "d=1, m=2 takes at most 8 passes");
        assert!(meter.peak_live_bits <= 4 * 3 * 3, "peak within 4c(d+m)");
    }

    #[test]
    fn misbehaving_leaf_readers_are_rejected() {
        let cir = BlockCircuit::new(2, 1, vec![], vec![NodeRef::Input(0)]).unwrap();
        let pairs = [(0u64, 0u8)];
        let mut cursor = StreamCursor::new(&pairs);
        let mut oversized = |_w: usize, c: &mut StreamCursor<'_>| {
            c.begin_pass()?;
            while c.next().is_some() {}
            c.end_pass()?;
            Ok(row_block(&[1, 1, 1]))
        };
        let err = eval_streaming(&cir, &mut oversized, &mut cursor).unwrap_err();
        assert!(err.to_string().contains("capacity"), "got: {err}");
        let mut cursor = StreamCursor::new(&pairs);
        let mut passless = |_w: usize, _c: &mut StreamCursor<'_>| Ok(row_block(&[1, 1]));
        let err = eval_streaming(&cir, &mut passless, &mut cursor).unwrap_err();
        assert!(err.to_string().contains("one full pass"), "got: {err}");
    }

    #[test]
    fn ge_circuit_shape_follows_the_blocking() {
        let cir = build_ge_circuit(8, 2).unwrap();
        assert_eq!(cir.capacity(), 16);
        assert_eq!(cir.num_inputs(), 6);
        assert_eq!(cir.num_outputs(), 2);
        assert_eq!(cir.depth(), 2);
        assert!(build_ge_circuit(6, 4).is_err(), "4 does not divide 6");
        assert!(build_ge_circuit(4, 0).is_err());
    }

    #[test]
    fn identity_stream_yields_identity_and_zero_blocks() {
        let n = 4;
        let pairs: Vec<(u64, u8)> = (0..n).map(|t| (1u64 << t, 0u8)).collect();
        let mut cursor = StreamCursor::new(&pairs);
        let mut reader = leaf_reader_samples(n, 2);
        let block = reader(0, &mut cursor).unwrap();
        assert_eq!(block.val().unwrap(), &Gf2Matrix::identity(2), "block (0,0) of identity A");
        let block = reader(2, &mut cursor).unwrap();
        assert_eq!(block.val().unwrap(), &Gf2Matrix::zeros(2, 2), "b column for b = 0");
    }

    #[test]
    fn extracted_blocks_tile_back_to_the_tableau() {
        let n = 8;
        let k = 4;
        let side = n / k;
        let mut rng = rng_from_seed(11);
        let x = Gf2Vector::random(n, &mut rng);
        let pairs = parity_pairs(n, &x, n, 12);
        let mut cursor = StreamCursor::new(&pairs);
        let mut reader = leaf_reader_samples(n, k);
        for (t, &(a, b01)) in pairs.iter().enumerate() {
            for col in 0..=k {
                let wire = (t / side) * (k + 1) + col;
                let block = reader(wire, &mut cursor).unwrap();
                let block = block.val().unwrap().clone();
                let row = t % side;
                for c in 0..side {
                    let want = if col < k {
                        (a >> (col * side + c)) & 1 == 1
                    } else {
                        c == 0 && b01 == 1
                    };
                    assert_eq!(block.bit(row, c), want, "block ({},{col}) row {row}", t / side);
                }
            }
        }
        let mut one_pass_cursor = StreamCursor::new(&pairs);
        let blocks = read_all_blocks(n, k, &mut one_pass_cursor).unwrap();
        let mut metered = StreamCursor::new(&pairs);
        for (wire, want) in blocks.iter().enumerate() {
            assert_eq!(&reader(wire, &mut metered).unwrap(), want, "wire {wire}");
        }
    }

    #[test]
    fn ge_outputs_match_the_dense_solve() {
        for n in [4usize, 8] {
            for k in [1usize, 2, 4] {
                let mut solved = 0;
                for seed in 0..40u64 {
                    let mut rng = rng_from_seed(1000 * n as u64 + 100 * k as u64 + seed);
                    let x = Gf2Vector::random(n, &mut rng);
                    let pairs = parity_pairs(n, &x, n, seed.wrapping_mul(77).wrapping_add(5));
                    let a = Gf2Matrix::from_rows(
                        &pairs
                            .iter()
                            .map(|&(a, _)| Gf2Vector::from_index(n, a))
                            .collect::<Vec<_>>(),
                    );
                    let b = Gf2Vector::from_bits(
                        &pairs.iter().map(|&(_, b01)| b01).collect::<Vec<_>>(),
                    );
                    let cir = build_ge_circuit(n, k).unwrap();
                    let mut cursor = StreamCursor::new(&pairs);
                    let mut reader = leaf_reader_samples(n, k);
                    let (outs, meter) = eval_streaming(&cir, &mut reader, &mut cursor).unwrap();
                    assert!(
                        meter.passes_used <= cir.pass_budget(),
                        "n={n} K={k}: {} passes over budget {}",
                        meter.passes_used,
                        cir.pass_budget()
                    );
                    assert!(
                        meter.peak_live_bits <= cir.memory_budget(),
                        "n={n} K={k}: {} bits over budget {}",
                        meter.peak_live_bits,
                        cir.memory_budget()
                    );
                    match assemble_solution(&outs, n, k).unwrap() {
                        Some(guess) => {
                            solved += 1;
                            let dense = a.solve(&b).expect("invertible pivots imply solvable");
                            assert_eq!(guess, dense, "n={n} K={k} seed={seed}");
                            assert_eq!(guess, x, "solution is the hidden concept");
                        }
                        None => {
                            assert!(
                                a.block(0, 0, n / k, n / k).invert().is_none()
                                    || a.rank() < n
                                    || k > 1,
                                "a singular flag needs some failed pivot"
                            );
                        }
                    }
                }
                assert!(solved > 0, "n={n} K={k}: no seed solved");
            }
        }
    }

    #[test]
    fn singlepass_agrees_with_streaming_on_ge() {
        let n = 6;
        let k = 3;
        let mut rng = rng_from_seed(21);
        let x = Gf2Vector::random(n, &mut rng);
        let pairs = parity_pairs(n, &x, n, 22);
        let cir = build_ge_circuit(n, k).unwrap();
        let mut cursor = StreamCursor::new(&pairs);
        let mut reader = leaf_reader_samples(n, k);
        let (streamed, _) = eval_streaming(&cir, &mut reader, &mut cursor).unwrap();
        let mut cursor = StreamCursor::new(&pairs);
        let (single, meter) =
            eval_singlepass(&cir, |c| read_all_blocks(n, k, c), &mut cursor).unwrap();
        assert_eq!(streamed, single);
        assert_eq!(meter.passes_used, 1);
    }

    #[test]
    fn singular_pivot_propagates_to_every_output() {
        let n = 4;
        let k = 2;
        let rows: Vec<Gf2Vector> = [0b0100u64, 0b1000, 0b0001, 0b0010]
            .iter()
            .map(|&a| Gf2Vector::from_index(n, a))
            .collect();
        let a = Gf2Matrix::from_rows(&rows);
        assert!(a.block(0, 0, 2, 2).invert().is_none(), "top-left pivot is singular");
        assert_eq!(a.rank(), 4, "the full matrix is still invertible");
        let pairs: Vec<(u64, u8)> = rows.iter().map(|r| (r.as_index(), 0u8)).collect();
        let cir = build_ge_circuit(n, k).unwrap();
        let mut cursor = StreamCursor::new(&pairs);
        let mut reader = leaf_reader_samples(n, k);
        let (outs, _) = eval_streaming(&cir, &mut reader, &mut cursor).unwrap();
        assert!(outs.iter().all(Block::is_singular), "every output carries the flag");
        assert_eq!(assemble_solution(&outs, n, k).unwrap(), None);
    }

    #[test]
    fn meters_are_deterministic_across_runs() {
        let n = 8;
        let k = 2;
        let mut rng = rng_from_seed(31);
        let x = Gf2Vector::random(n, &mut rng);
        let pairs = parity_pairs(n, &x, n, 32);
        let cir = build_ge_circuit(n, k).unwrap();
        let run = || {
            let mut cursor = StreamCursor::new(&pairs);
            let mut reader = leaf_reader_samples(n, k);
            eval_streaming(&cir, &mut reader, &mut cursor).unwrap().1
        };
        assert_eq!(run(), run());
    }
}
