//! Layered q-pass branching programs and the two modification stages.
//!
//! A program has `q*T + 1` layers of vertices. Pass `j` occupies layers
//! `(j-1)*T ..= j*T`, and consecutive passes share their boundary layer.
//! Every non-final vertex carries a total successor table over the
//! `2*|A|` edge labels `(a, b)`; a run replays the same `T` samples once
//! per pass. Outputs live on the final layer as concept guesses.
//!
//! Stage 1 of the modification (`modify_remember_pass`) rebuilds pass `j`
//! so that each vertex also tracks the lockstep vertex of the previous
//! (already modified) pass and the entry vertex of the current pass.
//! Stage 2 (`modify_attach_counters`) refines pass-`j` vertices by two
//! saturating counters whose per-edge increments are supplied by an
//! external rule engine, because they depend on path distributions that
//! are only defined layer by layer.
//!
//! Wide learners that would be hopeless to materialize directly (such as
//! Gaussian elimination) implement [`ImplicitLearner`] and can be run as
//! is, or expanded into an explicit program with [`reachable_states`]
//! when the reachable state count is small.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gf2::Gf2Vector;
use crate::learning_matrix::LearningMatrix;
use crate::rng::{rng_for_stream, rng_from_seed};

/// Edge label key for sample index `a` and sign `b`: `a*2 + b01` where
/// `b01 = 0` encodes `b = +1` and `b01 = 1` encodes `b = -1`.
pub fn edge_key(a: usize, b01: u8) -> usize {
    a * 2 + b01 as usize
}

/// Bookkeeping carried by vertices created during modification.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct VertexMeta {
    /// Lockstep vertex of the previous pass (same position), set by
    /// stage 1.
    pub copy_vertex: Option<u32>,
    /// Entry vertex of the current pass, set by stage 1.
    pub entry_vertex: Option<u32>,
    /// Pre-modification vertex this one projects to, set by stage 1.
    pub base_vertex: Option<u32>,
    /// `(cnt_high, cnt_bias)` for the current pass, set by stage 2.
    pub counters: Option<(u32, u32)>,
}

impl VertexMeta {
    fn is_empty(&self) -> bool {
        self.copy_vertex.is_none()
            && self.entry_vertex.is_none()
            && self.base_vertex.is_none()
            && self.counters.is_none()
    }
}

/// Vertex sequence of one run together with the final guess.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trajectory {
    /// One vertex per layer, `q*T + 1` entries.
    pub vertices: Vec<u32>,
    /// Concept guess at the final vertex.
    pub output: u64,
}

/// A layered multi-pass branching program with total successor tables.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchingProgram {
    passes: usize,
    length: usize,
    sample_bits: usize,
    widths: Vec<usize>,
    /// `succ[g][v][key]` is the layer `g+1` successor of vertex `v` in
    /// layer `g` under the edge label `key`.
    succ: Vec<Vec<Vec<u32>>>,
    outputs: Vec<u64>,
    start: u32,
    meta: Vec<Vec<VertexMeta>>,
}

impl BranchingProgram {
    /// Builds a program from raw tables, validating shape.
    pub fn new(
        passes: usize,
        length: usize,
        sample_bits: usize,
        succ: Vec<Vec<Vec<u32>>>,
        outputs: Vec<u64>,
        start: u32,
    ) -> Result<Self> {
        if passes == 0 || length == 0 {
            return Err(Error::invalid("a program needs at least one pass and one step"));
        }
        if sample_bits == 0 || sample_bits > 24 {
            return Err(Error::invalid("sample_bits must be in 1..=24"));
        }
        let steps = passes * length;
        if succ.len() != steps {
            return Err(Error::invalid(format!(
                "expected {steps} successor tables, got {}",
                succ.len()
            )));
        }
        if outputs.is_empty() {
            return Err(Error::invalid("final layer has no vertices"));
        }
        let degree = 2usize << sample_bits;
        let mut widths: Vec<usize> = succ.iter().map(Vec::len).collect();
        widths.push(outputs.len());
        for (g, table) in succ.iter().enumerate() {
            if table.is_empty() {
                return Err(Error::invalid(format!("layer {g} has no vertices")));
            }
            for (v, row) in table.iter().enumerate() {
                if row.len() != degree {
                    return Err(Error::invalid(format!(
                        "vertex {v} in layer {g} has {} edges, expected {degree}",
                        row.len()
                    )));
                }
                for &t in row {
                    if t as usize >= widths[g + 1] {
                        return Err(Error::invalid(format!(
                            "layer {g} vertex {v} points past layer {} width {}",
                            g + 1,
                            widths[g + 1]
                        )));
                    }
                }
            }
        }
        if start as usize >= widths[0] {
            return Err(Error::invalid("start vertex out of range"));
        }
        let meta = widths.iter().map(|&w| vec![VertexMeta::default(); w]).collect();
        Ok(BranchingProgram { passes, length, sample_bits, widths, succ, outputs, start, meta })
    }

    /// Single-chain program that ignores its input and guesses `guess`.
    pub fn trivial(passes: usize, length: usize, sample_bits: usize, guess: u64) -> Self {
        let degree = 2 << sample_bits;
        let succ = vec![vec![vec![0u32; degree]]; passes * length];
        BranchingProgram::new(passes, length, sample_bits, succ, vec![guess], 0)
            .expect("trivial program is well formed")
    }

    /// Seeded random program with layer widths drawn from `1..=max_width`
    /// (the start layer has width 1), uniform successor tables, and
    /// uniform concept guesses over `concept_bits` bits.
    ///
    /// # Panics
    /// Panics if `max_width` is 0.
    pub fn random(
        passes: usize,
        length: usize,
        sample_bits: usize,
        concept_bits: usize,
        max_width: usize,
        seed: u64,
    ) -> Self {
        assert!(max_width > 0, "max_width must be positive");
        let mut rng = rng_from_seed(seed);
        let steps = passes * length;
        let degree = 2 << sample_bits;
        let mut widths: Vec<usize> = (0..=steps).map(|_| rng.gen_range(1..=max_width)).collect();
        widths[0] = 1;
        let succ: Vec<Vec<Vec<u32>>> = (0..steps)
            .map(|g| {
                (0..widths[g])
                    .map(|_| (0..degree).map(|_| rng.gen_range(0..widths[g + 1]) as u32).collect())
                    .collect()
            })
            .collect();
        let outputs = (0..widths[steps]).map(|_| rng.gen_range(0..1u64 << concept_bits)).collect();
        BranchingProgram::new(passes, length, sample_bits, succ, outputs, 0)
            .expect("random tables are well formed")
    }

    pub fn passes(&self) -> usize {
        self.passes
    }

    /// Steps per pass.
    pub fn length(&self) -> usize {
        self.length
    }

    pub fn sample_bits(&self) -> usize {
        self.sample_bits
    }

    pub fn num_samples(&self) -> usize {
        1 << self.sample_bits
    }

    /// Number of edge labels per vertex, `2*|A|`.
    pub fn degree(&self) -> usize {
        2 << self.sample_bits
    }

    /// Total layer count `q*T + 1`.
    pub fn num_layers(&self) -> usize {
        self.passes * self.length + 1
    }

    /// Global index of position `i` of pass `j` (1-based pass, `i` in
    /// `0..=T`).
    ///
    /// # Panics
    /// Panics if `j` or `i` is out of range.
    pub fn global_layer(&self, j: usize, i: usize) -> usize {
        assert!(j >= 1 && j <= self.passes, "pass {j} out of range");
        assert!(i <= self.length, "position {i} out of range");
        (j - 1) * self.length + i
    }

    pub fn width(&self, layer: usize) -> usize {
        self.widths[layer]
    }

    pub fn max_width(&self) -> usize {
        self.widths.iter().copied().max().unwrap()
    }

    pub fn start(&self) -> u32 {
        self.start
    }

    pub fn successor(&self, layer: usize, v: u32, a: usize, b01: u8) -> u32 {
        self.succ[layer][v as usize][edge_key(a, b01)]
    }

    pub fn output(&self, v: u32) -> u64 {
        self.outputs[v as usize]
    }

    pub fn meta(&self, layer: usize, v: u32) -> &VertexMeta {
        &self.meta[layer][v as usize]
    }

    /// True if pass `j` went through stage 1 or stage 2.
    pub fn pass_modified(&self, j: usize) -> bool {
        let g = (j - 1) * self.length + 1;
        self.meta[g].iter().any(|m| m.copy_vertex.is_some() || m.counters.is_some())
    }

    /// Runs the program on hidden concept `x` and stream `samples`,
    /// replaying the same samples once per pass.
    ///
    /// # Panics
    /// Panics if `samples.len() != T` or the matrix does not match the
    /// program's sample space.
    pub fn run_path(&self, m: &LearningMatrix, x: u64, samples: &[usize]) -> Trajectory {
        assert_eq!(samples.len(), self.length, "need exactly T samples");
        assert_eq!(
            m.sample_bits() as usize,
            self.sample_bits,
            "matrix sample space does not match the program"
        );
        let mut vertices = Vec::with_capacity(self.num_layers());
        let mut v = self.start;
        vertices.push(v);
        for g in 0..self.passes * self.length {
            let a = samples[g % self.length];
            let b01 = if m.entry(a, x as usize) == 1 { 0 } else { 1 };
            v = self.successor(g, v, a, b01);
            vertices.push(v);
        }
        Trajectory { output: self.outputs[v as usize], vertices }
    }

    fn set_meta(&mut self, layer: usize, v: u32, meta: VertexMeta) {
        self.meta[layer][v as usize] = meta;
    }

    /// The first `passes` passes as a standalone program, metadata included.
    ///
    /// The new final layer outputs zero for every vertex, since the
    /// truncated program has no guessing layer of its own.
    ///
    /// # Errors
    ///
    /// Returns [`Error::InvalidArg`] when `passes` is zero or exceeds the
    /// program's pass count.
    pub fn prefix(&self, passes: usize) -> Result<BranchingProgram> {
        if passes == 0 || passes > self.passes {
            return Err(Error::invalid("prefix pass count out of range"));
        }
        let steps = passes * self.length;
        let succ = self.succ[..steps].to_vec();
        let outputs = vec![0u64; self.widths[steps]];
        let mut np = BranchingProgram::new(
            passes,
            self.length,
            self.sample_bits,
            succ,
            outputs,
            self.start,
        )?;
        for g in 0..=steps {
            for v in 0..np.widths[g] {
                np.set_meta(g, v as u32, self.meta[g][v].clone());
            }
        }
        Ok(np)
    }
}

/// Anything that can be run on one sampled stream and produce a guess.
pub trait Runnable {
    fn run_output(&self, m: &LearningMatrix, x: u64, samples: &[usize]) -> u64;
}

impl Runnable for BranchingProgram {
    fn run_output(&self, m: &LearningMatrix, x: u64, samples: &[usize]) -> u64 {
        self.run_path(m, x, samples).output
    }
}

/// A learner given by state-transition functions instead of explicit
/// layers. States are bit strings; the declared memory bound must cover
/// every reachable state.
pub trait ImplicitLearner: Sync {
    fn passes(&self) -> usize;
    fn init(&self) -> Gf2Vector;
    /// Consumes one labeled sample at position `pos` (1-based) of pass
    /// `j` (1-based). `b01` follows the edge-key convention.
    fn step(&self, state: &Gf2Vector, j: usize, pos: usize, a: usize, b01: u8) -> Gf2Vector;
    /// Transforms the state between pass `j` and pass `j+1`.
    fn between_pass(&self, state: &Gf2Vector, j: usize) -> Gf2Vector {
        let _ = j;
        state.clone()
    }
    fn finish(&self, state: &Gf2Vector) -> u64;
    fn memory_bits(&self) -> usize;
}

/// Adapter that runs an [`ImplicitLearner`] as a [`Runnable`].
pub struct LearnerRunner<'a, L: ImplicitLearner>(pub &'a L);

impl<L: ImplicitLearner> Runnable for LearnerRunner<'_, L> {
    fn run_output(&self, m: &LearningMatrix, x: u64, samples: &[usize]) -> u64 {
        let q = self.0.passes();
        let mut state = self.0.init();
        for j in 1..=q {
            for (pos, &a) in samples.iter().enumerate() {
                let b01 = if m.entry(a, x as usize) == 1 { 0 } else { 1 };
                state = self.0.step(&state, j, pos + 1, a, b01);
            }
            if j < q {
                state = self.0.between_pass(&state, j);
            }
        }
        self.0.finish(&state)
    }
}

/// Monte Carlo success estimate with a 95% normal-approximation interval.
#[derive(Clone, Copy, Debug)]
pub struct McEstimate {
    pub mean: f64,
    pub ci95: f64,
    pub trials: u64,
}

/// Estimates `Pr[output = x]` over uniform `x` and uniform samples.
/// Trials are independent and seeded per index, so the estimate is
/// deterministic for a given seed and may run in parallel.
///
/// # Panics
/// Panics if `trials` is 0.
pub fn success_probability_mc(
    r: &(impl Runnable + Sync),
    m: &LearningMatrix,
    t_len: usize,
    trials: u64,
    seed: u64,
) -> McEstimate {
    assert!(trials >= 1, "need at least one trial");
    let n_concepts = m.num_concepts() as u64;
    let n_samples = m.num_samples();
    let hits: u64 = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = rng_for_stream(seed, trial);
            let x = rng.gen_range(0..n_concepts);
            let samples: Vec<usize> = (0..t_len).map(|_| rng.gen_range(0..n_samples)).collect();
            u64::from(r.run_output(m, x, &samples) == x)
        })
        .sum();
    let mean = hits as f64 / trials as f64;
    let ci95 = 1.96 * (mean * (1.0 - mean) / trials as f64).sqrt();
    McEstimate { mean, ci95, trials }
}

fn require_later_passes_untouched(p: &BranchingProgram, j: usize) -> Result<()> {
    for jj in j + 1..=p.passes() {
        if p.pass_modified(jj) {
            return Err(Error::invalid(format!(
                "pass {jj} is already modified; passes must be modified in order"
            )));
        }
    }
    Ok(())
}

/// Stage 1: rebuilds pass `j` so each vertex is a triple of the lockstep
/// vertex of the (already modified) previous pass, the entry vertex of
/// pass `j`, and the original pass-`j` vertex. Only triples reachable
/// from some entry vertex are materialized, ordered lexicographically
/// per layer. The boundary layer itself keeps the previous pass's
/// vertices; the entry expansion is composed into the first step of
/// pass `j`. If a later pass exists, its first step is rewired through
/// the original vertex; if `j` is the last pass, outputs are projected
/// the same way. The input-output behaviour is unchanged.
pub fn modify_remember_pass(p: &BranchingProgram, j: usize) -> Result<BranchingProgram> {
    if j < 2 || j > p.passes {
        return Err(Error::invalid(format!(
            "remember stage applies to passes 2..=q, got {j} of {}",
            p.passes
        )));
    }
    let t_len = p.length;
    let base_g = (j - 1) * t_len;
    if p.pass_modified(j) {
        return Err(Error::invalid(format!("pass {j} is already modified")));
    }
    require_later_passes_untouched(p, j)?;
    let degree = p.degree();

    // The lockstep copy of pass j-1 starts where that pass actually
    // started: globally at v0 for j = 2, otherwise at the entry vertex
    // remembered by the boundary vertex.
    let copy_start: Vec<u32> = (0..p.widths[base_g])
        .map(|u| {
            if j == 2 {
                Ok(p.start)
            } else {
                p.meta[base_g][u].entry_vertex.ok_or_else(|| {
                    Error::invalid(format!("pass {} must be modified before pass {j}", j - 1))
                })
            }
        })
        .collect::<Result<_>>()?;

    // Reachable triples per position 1..=T, sorted per layer.
    let mut layers: Vec<Vec<(u32, u32, u32)>> = Vec::with_capacity(t_len);
    for i in 1..=t_len {
        let copy_g = (j - 2) * t_len + (i - 1);
        let orig_g = base_g + (i - 1);
        let mut layer: Vec<(u32, u32, u32)> = Vec::new();
        if i == 1 {
            for u in 0..p.widths[base_g] {
                for key in 0..degree {
                    layer.push((
                        p.succ[copy_g][copy_start[u] as usize][key],
                        u as u32,
                        p.succ[orig_g][u][key],
                    ));
                }
            }
        } else {
            for &(v, u, w) in &layers[i - 2] {
                for key in 0..degree {
                    layer.push((
                        p.succ[copy_g][v as usize][key],
                        u,
                        p.succ[orig_g][w as usize][key],
                    ));
                }
            }
        }
        layer.sort_unstable();
        layer.dedup();
        layers.push(layer);
    }
    let indexes: Vec<BTreeMap<(u32, u32, u32), u32>> = layers
        .iter()
        .map(|layer| layer.iter().enumerate().map(|(id, &t)| (t, id as u32)).collect())
        .collect();

    let mut succ = p.succ.clone();
    let mut meta = p.meta.clone();
    for i in 1..=t_len {
        let copy_g = (j - 2) * t_len + (i - 1);
        let orig_g = base_g + (i - 1);
        succ[orig_g] = if i == 1 {
            (0..p.widths[base_g])
                .map(|u| {
                    (0..degree)
                        .map(|key| {
                            let t = (
                                p.succ[copy_g][copy_start[u] as usize][key],
                                u as u32,
                                p.succ[orig_g][u][key],
                            );
                            indexes[0][&t]
                        })
                        .collect()
                })
                .collect()
        } else {
            layers[i - 2]
                .iter()
                .map(|&(v, u, w)| {
                    (0..degree)
                        .map(|key| {
                            let t = (
                                p.succ[copy_g][v as usize][key],
                                u,
                                p.succ[orig_g][w as usize][key],
                            );
                            indexes[i - 1][&t]
                        })
                        .collect()
                })
                .collect()
        };
        meta[base_g + i] = layers[i - 1]
            .iter()
            .map(|&(v, u, w)| VertexMeta {
                copy_vertex: Some(v),
                entry_vertex: Some(u),
                base_vertex: Some(w),
                counters: None,
            })
            .collect();
    }

    let mut outputs = p.outputs.clone();
    if j == p.passes {
        outputs = layers[t_len - 1].iter().map(|&(_, _, w)| p.outputs[w as usize]).collect();
    } else {
        let g = base_g + t_len;
        succ[g] =
            layers[t_len - 1].iter().map(|&(_, _, w)| p.succ[g][w as usize].clone()).collect();
    }

    let mut np = BranchingProgram::new(p.passes, t_len, p.sample_bits, succ, outputs, p.start)?;
    for g in 0..np.num_layers() {
        for v in 0..np.widths[g] {
            np.set_meta(g, v as u32, meta[g][v].clone());
        }
    }
    Ok(np)
}

/// View of a partially countered pass handed to the rule engine while
/// stage 2 is under construction. Position 0 is the boundary layer of
/// the input program with both counters implicitly zero.
pub struct PartialCounterBuild<'a> {
    /// The program being refined.
    pub base: &'a BranchingProgram,
    /// The pass under construction.
    pub pass: usize,
    /// Materialized states per position built so far: index 0 holds the
    /// boundary vertices as `(vertex, 0, 0)`, later entries hold
    /// `(base_vertex, cnt_high, cnt_bias)`.
    pub layers: Vec<Vec<(u32, u32, u32)>>,
    /// Completed successor tables between the materialized positions.
    pub succ: Vec<Vec<Vec<u32>>>,
}

/// Supplies counter increments layer by layer during stage 2. The
/// engine sees the partial build, so its position-`i` answer may depend
/// on arrival distributions over every countered layer up to `i`.
pub trait CounterRuleEngine {
    /// Returns `(d_high, d_bias)` for every `(vertex, edge key)` at
    /// position `i` of the pass under construction; the outer index runs
    /// over `build.layers[i]`.
    fn layer_increments(
        &mut self,
        build: &PartialCounterBuild,
        i: usize,
    ) -> Result<Vec<Vec<(u32, u32)>>>;
}

/// Rule engine with no high-probability edges: all increments zero.
pub struct NoCounterRules;

impl CounterRuleEngine for NoCounterRules {
    fn layer_increments(
        &mut self,
        build: &PartialCounterBuild,
        i: usize,
    ) -> Result<Vec<Vec<(u32, u32)>>> {
        Ok(vec![vec![(0, 0); build.base.degree()]; build.layers[i].len()])
    }
}

/// Stage 2: refines pass-`j` vertices into `(vertex, cnt_high,
/// cnt_bias)` states. Increments come from `rules` one position at a
/// time and both counters saturate at `counter_cap`. The boundary layer
/// keeps the previous pass's vertices and counters start at zero there;
/// a later pass's first step and the outputs are projected through the
/// underlying vertex, so the input-output behaviour is unchanged.
pub fn modify_attach_counters(
    p: &BranchingProgram,
    j: usize,
    counter_cap: u32,
    rules: &mut dyn CounterRuleEngine,
) -> Result<BranchingProgram> {
    if j < 2 || j > p.passes {
        return Err(Error::invalid(format!(
            "counters attach to passes 2..=q, got {j} of {}",
            p.passes
        )));
    }
    let t_len = p.length;
    let base_g = (j - 1) * t_len;
    if p.meta[base_g + 1].iter().any(|m| m.counters.is_some()) {
        return Err(Error::invalid(format!("pass {j} already carries counters")));
    }
    require_later_passes_untouched(p, j)?;
    let degree = p.degree();

    let mut build = PartialCounterBuild {
        base: p,
        pass: j,
        layers: vec![(0..p.widths[base_g] as u32).map(|u| (u, 0, 0)).collect()],
        succ: Vec::new(),
    };
    for i in 0..t_len {
        let inc = rules.layer_increments(&build, i)?;
        let cur = &build.layers[i];
        if inc.len() != cur.len() || inc.iter().any(|row| row.len() != degree) {
            return Err(Error::invariant(format!(
                "rule engine returned a malformed increment table at position {i}"
            )));
        }
        let targets: Vec<(u32, u32, u32)> = cur
            .iter()
            .zip(&inc)
            .flat_map(|(&(v, ch, cb), row)| {
                row.iter().enumerate().map(move |(key, &(dh, db))| {
                    (
                        p.succ[base_g + i][v as usize][key],
                        ch.saturating_add(dh).min(counter_cap),
                        cb.saturating_add(db).min(counter_cap),
                    )
                })
            })
            .collect();
        let mut layer = targets.clone();
        layer.sort_unstable();
        layer.dedup();
        let index: BTreeMap<(u32, u32, u32), u32> =
            layer.iter().enumerate().map(|(id, &t)| (t, id as u32)).collect();
        let table: Vec<Vec<u32>> =
            targets.chunks(degree).map(|per_v| per_v.iter().map(|t| index[t]).collect()).collect();
        build.succ.push(table);
        build.layers.push(layer);
    }

    let mut succ = p.succ.clone();
    let mut meta = p.meta.clone();
    for i in 1..=t_len {
        let g = base_g + i;
        meta[g] = build.layers[i]
            .iter()
            .map(|&(v, ch, cb)| {
                let mut vm = p.meta[g][v as usize].clone();
                vm.counters = Some((ch, cb));
                if vm.base_vertex.is_none() {
                    vm.base_vertex = Some(v);
                }
                vm
            })
            .collect();
        succ[g - 1] = build.succ[i - 1].clone();
    }

    let mut outputs = p.outputs.clone();
    if j == p.passes {
        outputs = build.layers[t_len].iter().map(|&(v, _, _)| p.outputs[v as usize]).collect();
    } else {
        let g = base_g + t_len;
        succ[g] =
            build.layers[t_len].iter().map(|&(v, _, _)| p.succ[g][v as usize].clone()).collect();
    }

    let mut np = BranchingProgram::new(p.passes, t_len, p.sample_bits, succ, outputs, p.start)?;
    for g in 0..np.num_layers() {
        for v in 0..np.widths[g] {
            np.set_meta(g, v as u32, meta[g][v].clone());
        }
    }
    Ok(np)
}

/// Expands an implicit learner into an explicit program by breadth-first
/// materialization of its reachable states, layer by layer.
///
/// # Errors
/// Budget error once the total state count exceeds `cap`; invariant
/// error if a reachable state is longer than the declared memory bound.
pub fn reachable_states(
    l: &impl ImplicitLearner,
    m: &LearningMatrix,
    t_len: usize,
    cap: usize,
) -> Result<BranchingProgram> {
    let q = l.passes();
    let n_a = m.sample_bits() as usize;
    let degree = 2usize << n_a;
    let mut total = 0usize;

    let check = |state: &Gf2Vector| -> Result<()> {
        if state.len() > l.memory_bits() {
            return Err(Error::invariant(format!(
                "reachable state uses {} bits, declared bound is {}",
                state.len(),
                l.memory_bits()
            )));
        }
        Ok(())
    };
    let over_budget = |total: usize| Error::Budget {
        what: "reachable_states materialization".into(),
        needed: total as u128,
        cap: cap as u128,
        hint: "raise the cap or shrink the learner".into(),
    };

    let mut layer_states: Vec<Gf2Vector> = vec![l.init()];
    check(&layer_states[0])?;
    let mut succ: Vec<Vec<Vec<u32>>> = Vec::with_capacity(q * t_len);
    for g in 0..q * t_len {
        let j = g / t_len + 1;
        let pos = g % t_len + 1;
        total += layer_states.len();
        if total > cap {
            return Err(over_budget(total));
        }
        let mut rows: Vec<Vec<Gf2Vector>> = Vec::with_capacity(layer_states.len());
        for state in &layer_states {
            let mut row = Vec::with_capacity(degree);
            for a in 0..1usize << n_a {
                for b01 in 0..2u8 {
                    let mut t = l.step(state, j, pos, a, b01);
                    if pos == t_len && j < q {
                        t = l.between_pass(&t, j);
                    }
                    check(&t)?;
                    row.push(t);
                }
            }
            rows.push(row);
        }
        let mut index: BTreeMap<Gf2Vector, u32> = BTreeMap::new();
        for row in &rows {
            for t in row {
                index.entry(t.clone()).or_insert(0);
            }
        }
        let mut next: Vec<Gf2Vector> = Vec::with_capacity(index.len());
        for (id, (state, slot)) in index.iter_mut().enumerate() {
            *slot = id as u32;
            next.push(state.clone());
        }
        succ.push(
            rows.into_iter().map(|row| row.into_iter().map(|t| index[&t]).collect()).collect(),
        );
        layer_states = next;
    }
    total += layer_states.len();
    if total > cap {
        return Err(over_budget(total));
    }
    let outputs = layer_states.iter().map(|s| l.finish(s)).collect();
    BranchingProgram::new(q, t_len, n_a, succ, outputs, 0)
}

fn meta_field(v: Option<u32>) -> String {
    v.map_or_else(|| "-".into(), |x| x.to_string())
}

fn parse_meta_field(tok: &str, line: usize) -> Result<Option<u32>> {
    if tok == "-" {
        Ok(None)
    } else {
        tok.parse::<u32>()
            .map(Some)
            .map_err(|_| Error::Parse { line, msg: format!("bad meta field {tok:?}") })
    }
}

impl BranchingProgram {
    /// Serializes to the `BP v1` text format. The format is line based:
    /// a header, per-layer `layer` lines with optional `meta` lines,
    /// `succ` lines for non-final vertices, then `outputs` and `start`.
    pub fn to_bp_string(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "BP v1 passes={} length={} sample_bits={}",
            self.passes, self.length, self.sample_bits
        )
        .unwrap();
        for g in 0..self.num_layers() {
            writeln!(out, "layer {g} width={}", self.widths[g]).unwrap();
            for v in 0..self.widths[g] {
                let m = &self.meta[g][v];
                if !m.is_empty() {
                    let (ch, cb) = m
                        .counters
                        .map_or(("-".into(), "-".into()), |(h, b)| (h.to_string(), b.to_string()));
                    writeln!(
                        out,
                        "meta {g} {v} {} {} {} {ch} {cb}",
                        meta_field(m.copy_vertex),
                        meta_field(m.entry_vertex),
                        meta_field(m.base_vertex),
                    )
                    .unwrap();
                }
                if g < self.num_layers() - 1 {
                    let row: Vec<String> = self.succ[g][v].iter().map(|t| t.to_string()).collect();
                    writeln!(out, "succ {g} {v}: {}", row.join(" ")).unwrap();
                }
            }
        }
        let outs: Vec<String> = self.outputs.iter().map(|o| o.to_string()).collect();
        writeln!(out, "outputs: {}", outs.join(" ")).unwrap();
        writeln!(out, "start: {}", self.start).unwrap();
        out
    }

    /// Parses the `BP v1` text format; exact inverse of
    /// [`BranchingProgram::to_bp_string`].
    ///
    /// # Errors
    /// Parse errors carry the offending line number; structural problems
    /// surface as invalid-argument errors from validation.
    pub fn from_bp_string(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::Parse { line: 1, msg: "empty input".into() })?;
        let mut passes = None;
        let mut length = None;
        let mut sample_bits = None;
        let mut parts = header.split_whitespace();
        if parts.next() != Some("BP") || parts.next() != Some("v1") {
            return Err(Error::Parse { line: 1, msg: "expected `BP v1` header".into() });
        }
        for tok in parts {
            let (key, val) = tok
                .split_once('=')
                .ok_or_else(|| Error::Parse { line: 1, msg: format!("bad header token {tok:?}") })?;
            let val: usize = val
                .parse()
                .map_err(|_| Error::Parse { line: 1, msg: format!("bad header value {tok:?}") })?;
            match key {
                "passes" => passes = Some(val),
                "length" => length = Some(val),
                "sample_bits" => sample_bits = Some(val),
                other => {
                    return Err(Error::Parse {
                        line: 1,
                        msg: format!("unknown header key {other:?}"),
                    })
                }
            }
        }
        let (passes, length, sample_bits) = match (passes, length, sample_bits) {
            (Some(p), Some(l), Some(s)) => (p, l, s),
            _ => return Err(Error::Parse { line: 1, msg: "incomplete header".into() }),
        };
        if sample_bits == 0 || sample_bits > 24 {
            return Err(Error::Parse { line: 1, msg: "sample_bits must be in 1..=24".into() });
        }
        let steps = passes * length;
        let degree = 2usize << sample_bits;
        let mut succ: Vec<Vec<Vec<u32>>> = vec![Vec::new(); steps];
        let mut metas: Vec<(usize, usize, VertexMeta)> = Vec::new();
        let mut final_width = 0usize;
        let mut outputs: Option<Vec<u64>> = None;
        let mut start: Option<u32> = None;
        for (idx, raw) in lines {
            let line = idx + 1;
            let l = raw.trim();
            if l.is_empty() {
                continue;
            }
            let mut toks = l.split_whitespace();
            match toks.next().unwrap() {
                "layer" => {
                    let g: usize = toks
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or(Error::Parse { line, msg: "bad layer index".into() })?;
                    let w: usize = toks
                        .next()
                        .and_then(|t| t.strip_prefix("width="))
                        .and_then(|t| t.parse().ok())
                        .ok_or(Error::Parse { line, msg: "bad layer width".into() })?;
                    if g > steps {
                        return Err(Error::Parse { line, msg: "layer out of range".into() });
                    }
                    if g < steps {
                        succ[g] = vec![Vec::new(); w];
                    } else {
                        final_width = w;
                    }
                }
                "meta" => {
                    let g: usize = toks
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or(Error::Parse { line, msg: "bad meta layer".into() })?;
                    let v: usize = toks
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or(Error::Parse { line, msg: "bad meta vertex".into() })?;
                    let fields: Vec<&str> = toks.collect();
                    if fields.len() != 5 {
                        return Err(Error::Parse { line, msg: "meta needs 5 fields".into() });
                    }
                    let copy_vertex = parse_meta_field(fields[0], line)?;
                    let entry_vertex = parse_meta_field(fields[1], line)?;
                    let base_vertex = parse_meta_field(fields[2], line)?;
                    let counters = match (
                        parse_meta_field(fields[3], line)?,
                        parse_meta_field(fields[4], line)?,
                    ) {
                        (Some(h), Some(b)) => Some((h, b)),
                        (None, None) => None,
                        _ => {
                            return Err(Error::Parse {
                                line,
                                msg: "counters must both be set or both empty".into(),
                            })
                        }
                    };
                    metas.push((
                        g,
                        v,
                        VertexMeta { copy_vertex, entry_vertex, base_vertex, counters },
                    ));
                }
                "succ" => {
                    let g: usize = toks
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or(Error::Parse { line, msg: "bad succ layer".into() })?;
                    let v: usize = toks
                        .next()
                        .and_then(|t| t.strip_suffix(':'))
                        .and_then(|t| t.parse().ok())
                        .ok_or(Error::Parse { line, msg: "bad succ vertex".into() })?;
                    let row: Vec<u32> = toks
                        .map(|t| t.parse::<u32>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| Error::Parse { line, msg: "bad successor id".into() })?;
                    if row.len() != degree {
                        return Err(Error::Parse {
                            line,
                            msg: format!("expected {degree} successors, got {}", row.len()),
                        });
                    }
                    if g >= steps || v >= succ[g].len() {
                        return Err(Error::Parse { line, msg: "succ out of range".into() });
                    }
                    succ[g][v] = row;
                }
                "outputs:" => {
                    let row: Vec<u64> = toks
                        .map(|t| t.parse::<u64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| Error::Parse { line, msg: "bad output".into() })?;
                    outputs = Some(row);
                }
                "start:" => {
                    start = toks.next().and_then(|t| t.parse().ok());
                    if start.is_none() {
                        return Err(Error::Parse { line, msg: "bad start vertex".into() });
                    }
                }
                other => {
                    return Err(Error::Parse { line, msg: format!("unknown directive {other:?}") })
                }
            }
        }
        let outputs = outputs.ok_or(Error::Parse { line: 0, msg: "missing outputs".into() })?;
        let start = start.ok_or(Error::Parse { line: 0, msg: "missing start".into() })?;
        if outputs.len() != final_width {
            return Err(Error::Parse {
                line: 0,
                msg: format!(
                    "final layer declares width {final_width} but {} outputs given",
                    outputs.len()
                ),
            });
        }
        let mut program = BranchingProgram::new(passes, length, sample_bits, succ, outputs, start)?;
        for (g, v, m) in metas {
            if g >= program.num_layers() || v >= program.widths[g] {
                return Err(Error::Parse { line: 0, msg: "meta out of range".into() });
            }
            program.set_meta(g, v as u32, m);
        }
        Ok(program)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learning_matrix::LearningMatrix;

    fn all_samples(n_a: usize, t_len: usize) -> Vec<Vec<usize>> {
        let count = 1usize << (n_a * t_len);
        (0..count)
            .map(|mut c| {
                (0..t_len)
                    .map(|_| {
                        let a = c & ((1 << n_a) - 1);
                        c >>= n_a;
                        a
                    })
                    .collect()
            })
            .collect()
    }

    fn outputs_agree(a: &BranchingProgram, b: &BranchingProgram, m: &LearningMatrix) -> bool {
        let t_len = a.length();
        for x in 0..m.num_concepts() as u64 {
            for samples in all_samples(m.sample_bits() as usize, t_len) {
                if a.run_path(m, x, &samples).output != b.run_path(m, x, &samples).output {
                    return false;
                }
            }
        }
        true
    }

    #[test]
    fn trivial_program_ignores_input() {
        let m = LearningMatrix::parity(2);
        let p = BranchingProgram::trivial(2, 2, 2, 3);
        for x in 0..4 {
            for samples in all_samples(2, 2) {
                assert_eq!(p.run_path(&m, x, &samples).output, 3);
            }
        }
    }

    #[test]
    fn one_step_branch_learns_when_sample_is_informative() {
        // n = 1 parity, T = 1: seeing (a=1, b) pins x. The program
        // branches on b for a=1 and guesses 0 otherwise.
        let m = LearningMatrix::parity(1);
        // Keys: a=0,b=+1 | a=0,b=-1 | a=1,b=+1 | a=1,b=-1.
        let succ = vec![vec![vec![0, 0, 0, 1]]];
        let p = BranchingProgram::new(1, 1, 1, succ, vec![0, 1], 0).unwrap();
        for x in 0..2u64 {
            assert_eq!(p.run_path(&m, x, &[1]).output, x, "a=1 reveals x={x}");
        }
        assert_eq!(p.run_path(&m, 1, &[0]).output, 0, "a=0 is uninformative");
    }

    #[test]
    fn run_path_is_deterministic_and_replays_passes() {
        let m = LearningMatrix::parity(2);
        let p = BranchingProgram::random(3, 2, 2, 2, 5, 17);
        let samples = vec![1, 3];
        let t1 = p.run_path(&m, 2, &samples);
        let t2 = p.run_path(&m, 2, &samples);
        assert_eq!(t1, t2);
        assert_eq!(t1.vertices.len(), p.num_layers());
    }

    #[test]
    fn new_rejects_malformed_tables() {
        let ok = vec![vec![vec![0u32, 0, 0, 0]]];
        assert!(BranchingProgram::new(1, 1, 1, ok.clone(), vec![0], 0).is_ok());
        assert!(BranchingProgram::new(0, 1, 1, ok.clone(), vec![0], 0).is_err());
        assert!(BranchingProgram::new(1, 1, 1, ok.clone(), vec![], 0).is_err());
        assert!(BranchingProgram::new(1, 1, 1, ok.clone(), vec![0], 1).is_err());
        let dangling = vec![vec![vec![0u32, 1, 0, 0]]];
        assert!(BranchingProgram::new(1, 1, 1, dangling, vec![0], 0).is_err());
        let short_row = vec![vec![vec![0u32, 0]]];
        assert!(BranchingProgram::new(1, 1, 1, short_row, vec![0], 0).is_err());
    }

    #[test]
    fn remember_pass_tracks_the_actual_previous_pass_vertex() {
        let m = LearningMatrix::parity(2);
        let p = BranchingProgram::random(2, 2, 2, 2, 4, 5);
        let q = modify_remember_pass(&p, 2).unwrap();
        for x in 0..4u64 {
            for samples in all_samples(2, 2) {
                let orig = p.run_path(&m, x, &samples);
                let modi = q.run_path(&m, x, &samples);
                for i in 1..=p.length() {
                    let g = q.global_layer(2, i);
                    let meta = q.meta(g, modi.vertices[g]);
                    assert_eq!(
                        meta.copy_vertex,
                        Some(orig.vertices[q.global_layer(1, i)]),
                        "lockstep copy at position {i}"
                    );
                    assert_eq!(
                        meta.entry_vertex,
                        Some(modi.vertices[q.global_layer(2, 0)]),
                        "entry vertex at position {i}"
                    );
                    assert_eq!(
                        meta.base_vertex,
                        Some(orig.vertices[g]),
                        "projection to the original run at position {i}"
                    );
                }
            }
        }
    }

    #[test]
    fn remember_pass_preserves_outputs() {
        for seed in 0..8 {
            let m = LearningMatrix::parity(2);
            let p = BranchingProgram::random(2, 3, 2, 2, 4, seed);
            let q = modify_remember_pass(&p, 2).unwrap();
            assert!(outputs_agree(&p, &q, &m), "seed {seed}");
        }
    }

    #[test]
    fn remember_pass_rejects_bad_pass_and_double_modification() {
        let p = BranchingProgram::random(2, 2, 1, 1, 3, 7);
        assert!(modify_remember_pass(&p, 1).is_err());
        assert!(modify_remember_pass(&p, 3).is_err());
        let q = modify_remember_pass(&p, 2).unwrap();
        assert!(modify_remember_pass(&q, 2).is_err());
        // Pass 3 cannot be remembered before pass 2.
        let p3 = BranchingProgram::random(3, 2, 1, 1, 3, 7);
        assert!(modify_remember_pass(&p3, 3).is_err());
    }

    #[test]
    fn remember_pass_with_trivial_first_pass_keeps_width() {
        // Pass 1 is a single chain, so the remembered components are
        // constant and pass-2 layers cannot grow.
        let m = LearningMatrix::parity(1);
        let base = BranchingProgram::random(2, 2, 1, 1, 3, 2);
        let t_len = base.length();
        let degree = base.degree();
        let mut succ: Vec<Vec<Vec<u32>>> = Vec::new();
        for _ in 0..t_len {
            succ.push(vec![vec![0; degree]]);
        }
        succ.push(vec![base.succ[t_len][0].clone()]);
        for g in t_len + 1..2 * t_len {
            succ.push(base.succ[g].clone());
        }
        let p = BranchingProgram::new(2, t_len, 1, succ, base.outputs.clone(), 0).unwrap();
        let q = modify_remember_pass(&p, 2).unwrap();
        for i in 1..=t_len {
            let g = q.global_layer(2, i);
            assert!(
                q.width(g) <= p.width(g),
                "width at position {i}: {} > {}",
                q.width(g),
                p.width(g)
            );
        }
        assert!(outputs_agree(&p, &q, &m));
    }

    #[test]
    fn counters_stay_zero_without_increments() {
        let p = BranchingProgram::random(2, 2, 1, 1, 3, 9);
        let p = modify_remember_pass(&p, 2).unwrap();
        let c = modify_attach_counters(&p, 2, 4, &mut NoCounterRules).unwrap();
        for i in 1..=c.length() {
            let g = c.global_layer(2, i);
            for v in 0..c.width(g) {
                assert_eq!(c.meta(g, v as u32).counters, Some((0, 0)));
            }
        }
        let m = LearningMatrix::parity(1);
        assert!(outputs_agree(&p, &c, &m));
    }

    struct FixedIncrement {
        key: usize,
        dh: u32,
        db: u32,
    }

    impl CounterRuleEngine for FixedIncrement {
        fn layer_increments(
            &mut self,
            build: &PartialCounterBuild,
            i: usize,
        ) -> Result<Vec<Vec<(u32, u32)>>> {
            let mut table = vec![vec![(0, 0); build.base.degree()]; build.layers[i].len()];
            for row in &mut table {
                row[self.key] = (self.dh, self.db);
            }
            Ok(table)
        }
    }

    struct MalformedRules;

    impl CounterRuleEngine for MalformedRules {
        fn layer_increments(
            &mut self,
            build: &PartialCounterBuild,
            i: usize,
        ) -> Result<Vec<Vec<(u32, u32)>>> {
            let _ = (build, i);
            Ok(vec![])
        }
    }

    #[test]
    fn single_high_edge_accumulates_counters() {
        let p = BranchingProgram::trivial(2, 3, 1, 0);
        let p = modify_remember_pass(&p, 2).unwrap();
        let key = edge_key(1, 0);
        let c =
            modify_attach_counters(&p, 2, 10, &mut FixedIncrement { key, dh: 1, db: 2 }).unwrap();
        let m = LearningMatrix::parity(1);
        // x = 0 makes every b = +1, so samples [1,1,1] hit the keyed edge
        // at every step of pass 2.
        let t = c.run_path(&m, 0, &[1, 1, 1]);
        for i in 1..=3 {
            let g = c.global_layer(2, i);
            assert_eq!(
                c.meta(g, t.vertices[g]).counters,
                Some((i as u32, 2 * i as u32)),
                "counters after {i} keyed steps"
            );
        }
        // Sample 0 never hits the keyed edge.
        let t = c.run_path(&m, 0, &[0, 0, 0]);
        let g = c.global_layer(2, 3);
        assert_eq!(c.meta(g, t.vertices[g]).counters, Some((0, 0)));
    }

    #[test]
    fn counters_saturate_at_the_cap() {
        let p = BranchingProgram::trivial(2, 4, 1, 0);
        let p = modify_remember_pass(&p, 2).unwrap();
        let key = edge_key(1, 0);
        let c =
            modify_attach_counters(&p, 2, 3, &mut FixedIncrement { key, dh: 1, db: 2 }).unwrap();
        let m = LearningMatrix::parity(1);
        let t = c.run_path(&m, 0, &[1, 1, 1, 1]);
        let g = c.global_layer(2, 4);
        assert_eq!(c.meta(g, t.vertices[g]).counters, Some((3, 3)), "both clamp at 3");
    }

    #[test]
    fn counter_width_growth_is_bounded_by_counter_range() {
        let p = BranchingProgram::random(2, 2, 1, 1, 3, 21);
        let p = modify_remember_pass(&p, 2).unwrap();
        let cap = 2u32;
        let key = edge_key(0, 1);
        let c =
            modify_attach_counters(&p, 2, cap, &mut FixedIncrement { key, dh: 1, db: 1 }).unwrap();
        let factor = ((cap + 1) * (cap + 1)) as usize;
        for i in 1..=c.length() {
            let g = c.global_layer(2, i);
            assert!(
                c.width(g) <= factor * p.width(g),
                "width at position {i}: {} > {factor} * {}",
                c.width(g),
                p.width(g)
            );
        }
    }

    #[test]
    fn attach_counters_rejects_malformed_rule_output() {
        let p = BranchingProgram::random(2, 2, 1, 1, 3, 13);
        let p = modify_remember_pass(&p, 2).unwrap();
        match modify_attach_counters(&p, 2, 2, &mut MalformedRules) {
            Err(Error::Invariant(_)) => {}
            other => panic!("expected invariant error, got {other:?}"),
        }
    }

    #[test]
    fn both_stages_preserve_outputs_for_three_passes() {
        let m = LearningMatrix::parity(2);
        for seed in 0..4 {
            let p = BranchingProgram::random(3, 2, 2, 2, 3, seed);
            let mut cur = p.clone();
            for j in 2..=3 {
                cur = modify_remember_pass(&cur, j).unwrap();
                cur = modify_attach_counters(&cur, j, 2, &mut NoCounterRules).unwrap();
            }
            assert!(outputs_agree(&p, &cur, &m), "seed {seed}");
        }
    }

    #[test]
    fn constant_output_success_is_two_to_minus_n() {
        let m = LearningMatrix::parity(3);
        let p = BranchingProgram::trivial(1, 2, 3, 5);
        let est = success_probability_mc(&p, &m, 2, 20_000, 11);
        assert!(
            (est.mean - 0.125).abs() < 0.01,
            "constant guess should succeed with probability 1/8, got {}",
            est.mean
        );
        assert!(est.ci95 < 0.01, "interval should be tight at 20k trials");
    }

    struct ConstantLearner;

    impl ImplicitLearner for ConstantLearner {
        fn passes(&self) -> usize {
            1
        }
        fn init(&self) -> Gf2Vector {
            Gf2Vector::zeros(1)
        }
        fn step(&self, state: &Gf2Vector, _: usize, _: usize, _: usize, _: u8) -> Gf2Vector {
            state.clone()
        }
        fn finish(&self, _: &Gf2Vector) -> u64 {
            0
        }
        fn memory_bits(&self) -> usize {
            1
        }
    }

    struct ParityOfLabels;

    impl ImplicitLearner for ParityOfLabels {
        fn passes(&self) -> usize {
            1
        }
        fn init(&self) -> Gf2Vector {
            Gf2Vector::zeros(1)
        }
        fn step(&self, state: &Gf2Vector, _: usize, _: usize, _: usize, b01: u8) -> Gf2Vector {
            let mut s = state.clone();
            s.set_bit(0, s.bit(0) ^ (b01 == 1));
            s
        }
        fn finish(&self, state: &Gf2Vector) -> u64 {
            state.bit(0) as u64
        }
        fn memory_bits(&self) -> usize {
            1
        }
    }

    #[test]
    fn reachable_states_materializes_small_learners() {
        let m = LearningMatrix::parity(2);
        let p = reachable_states(&ConstantLearner, &m, 3, 100).unwrap();
        for g in 0..p.num_layers() {
            assert_eq!(p.width(g), 1, "constant learner layer {g}");
        }
        let p = reachable_states(&ParityOfLabels, &m, 3, 100).unwrap();
        for g in 0..p.num_layers() {
            assert!(p.width(g) <= 2, "1-bit learner layer {g}");
        }
        // The materialization must agree with the implicit run.
        for x in 0..4u64 {
            for samples in all_samples(2, 3) {
                assert_eq!(
                    p.run_path(&m, x, &samples).output,
                    LearnerRunner(&ParityOfLabels).run_output(&m, x, &samples)
                );
            }
        }
    }

    #[test]
    fn reachable_states_enforces_cap_and_memory_bound() {
        let m = LearningMatrix::parity(2);
        match reachable_states(&ParityOfLabels, &m, 3, 2) {
            Err(Error::Budget { .. }) => {}
            other => panic!("expected budget error, got {other:?}"),
        }

        struct Liar;
        impl ImplicitLearner for Liar {
            fn passes(&self) -> usize {
                1
            }
            fn init(&self) -> Gf2Vector {
                Gf2Vector::zeros(8)
            }
            fn step(&self, s: &Gf2Vector, _: usize, _: usize, _: usize, _: u8) -> Gf2Vector {
                s.clone()
            }
            fn finish(&self, _: &Gf2Vector) -> u64 {
                0
            }
            fn memory_bits(&self) -> usize {
                4
            }
        }
        match reachable_states(&Liar, &m, 2, 100) {
            Err(Error::Invariant(_)) => {}
            other => panic!("expected invariant error, got {other:?}"),
        }
    }

    #[test]
    fn bp_text_roundtrip_is_exact() {
        let p = BranchingProgram::random(2, 2, 2, 2, 4, 33);
        let p = modify_remember_pass(&p, 2).unwrap();
        let p = modify_attach_counters(&p, 2, 2, &mut NoCounterRules).unwrap();
        let text = p.to_bp_string();
        let q = BranchingProgram::from_bp_string(&text).unwrap();
        assert_eq!(p, q);
        assert_eq!(text, q.to_bp_string());
    }

    #[test]
    fn bp_parser_rejects_malformed_input() {
        assert!(BranchingProgram::from_bp_string("").is_err());
        assert!(BranchingProgram::from_bp_string("BP v2 passes=1 length=1 sample_bits=1").is_err());
        let p = BranchingProgram::trivial(1, 1, 1, 0);
        let good = p.to_bp_string();
        let bad = good.replace("succ 0 0: 0 0 0 0", "succ 0 0: 0 0 0");
        assert!(BranchingProgram::from_bp_string(&bad).is_err());
        let bad = good.replace("start: 0", "start: 7");
        assert!(BranchingProgram::from_bp_string(&bad).is_err());
    }
}
