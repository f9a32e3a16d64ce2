//! Counter attachment driven by an exact analysis.
//!
//! The second modification stage needs, for every pass-`j` vertex and edge,
//! the high flag and the increment Δ under the distributions of the program
//! *before* pass `j` carries counters.  [`EngineCounterRules`] reads both
//! from a stored [`PathDistribution`]; [`attach_counters_exact`] wires it to
//! the program modification.
//!
//! Passes are modified bottom up (remember pass 2, counter pass 2, remember
//! pass 3, ...), so when pass `j` is being countered the later passes are
//! still unmodified and cannot be analysed under rules.  The analysis
//! therefore runs on the `j`-pass prefix of the program, where pass `j` is
//! the last pass and needs no counters of its own.

use std::collections::BTreeMap;

use crate::branching_program::{
    edge_key, modify_attach_counters, BranchingProgram, CounterRuleEngine, PartialCounterBuild,
};
use crate::error::{Error, Result};
use crate::learning_matrix::LearningMatrix;

use super::{dp_exact, enumerate_exact, PathDistribution, RefinedState, ThresholdSet};

/// [`CounterRuleEngine`] that reads increments from an exact rules-mode
/// analysis of the pass being countered.
///
/// A build state `(v, ch, cb)` is matched to the analysis state with the
/// same vertex and counters and the entry recorded by the first modification
/// stage.  Build states the analysis never materialized are unreachable, and
/// their increments are zero; edges no concept traverses also increment by
/// zero, since no run can cross them.
pub struct EngineCounterRules {
    d: PathDistribution,
    base_layer: usize,
    boundary_index: BTreeMap<u32, usize>,
}

impl EngineCounterRules {
    /// Wraps an analysis of the program whose pass `j` is about to receive
    /// counters.  The analysis must cover exactly `j` passes, with pass `j`
    /// last.
    ///
    /// # Errors
    ///
    /// Returns [`Error::InvalidArg`] when the analysis was computed without
    /// rules or does not end at pass `j`, and [`Error::Invariant`] when a
    /// boundary vertex appears under two refined states (valid modification
    /// pipelines determine the refined state from the vertex alone).
    pub fn new(d: PathDistribution, j: usize) -> Result<Self> {
        if d.rules.is_none() {
            return Err(Error::invalid(
                "counter attachment needs an analysis with stopping rules",
            ));
        }
        if j < 2 || j != d.passes {
            return Err(Error::invalid(
                "the analysis must end at the pass being countered",
            ));
        }
        let base_layer = (j - 1) * d.length;
        let mut boundary_index = BTreeMap::new();
        for (idx, s) in d.layers[base_layer].states.iter().enumerate() {
            if boundary_index.insert(s.vertex, idx).is_some() {
                return Err(Error::invariant(format!(
                    "boundary vertex {} has two refined states",
                    s.vertex
                )));
            }
        }
        Ok(EngineCounterRules {
            d,
            base_layer,
            boundary_index,
        })
    }

    fn state_of(&self, build: &PartialCounterBuild<'_>, i: usize, v: u32, ch: u32, cb: u32) -> Option<usize> {
        if i == 0 {
            return self.boundary_index.get(&v).copied();
        }
        let g = self.base_layer + i;
        let entry_vertex = build.base.meta(g, v).entry_vertex?;
        let entry = *self.boundary_index.get(&entry_vertex)? as u32;
        self.d.layers[g].state_index(&RefinedState {
            entry,
            vertex: v,
            cnt_high: ch,
            cnt_bias: cb,
        })
    }
}

impl CounterRuleEngine for EngineCounterRules {
    fn layer_increments(
        &mut self,
        build: &PartialCounterBuild<'_>,
        i: usize,
    ) -> Result<Vec<Vec<(u32, u32)>>> {
        let g = self.base_layer + i;
        let cls = self.d.class[g]
            .as_ref()
            .ok_or_else(|| Error::invariant(format!("analysis has no classification at layer {g}")))?;
        let degree = build.base.degree();
        let n_a = degree / 2;
        let mut table = Vec::with_capacity(build.layers[i].len());
        for &(v, ch, cb) in &build.layers[i] {
            let mut row = vec![(0u32, 0u32); degree];
            if let Some(sidx) = self.state_of(build, i, v, ch, cb) {
                for a in 0..n_a {
                    if !cls.high[sidx][a] {
                        continue;
                    }
                    for b01 in 0..2u8 {
                        if let Some(delta) = cls.delta[sidx][edge_key(a, b01)] {
                            row[edge_key(a, b01)] = (1, delta);
                        }
                    }
                }
            }
            table.push(row);
        }
        Ok(table)
    }
}

/// Runs an exact analysis of the first `j` passes and attaches the
/// resulting counters to pass `j`.
///
/// `th` is the schedule for the whole program; the analysis uses its
/// `j`-pass truncation.  The counter cap is `log |X|`, the range the
/// increments are clamped into.  The product-form engine is used when the
/// prefix satisfies its requirements, the enumeration engine otherwise.
///
/// # Errors
///
/// Returns [`Error::InvalidArg`] when `j` is out of range, the schedule
/// does not cover the program, earlier passes are missing their
/// modifications, or pass `j` already carries counters; budget errors come
/// from the engines.
pub fn attach_counters_exact(
    p: &BranchingProgram,
    m: &LearningMatrix,
    th: &ThresholdSet,
    j: usize,
) -> Result<BranchingProgram> {
    if j < 2 || j > p.passes() {
        return Err(Error::invalid(format!(
            "counters attach to passes 2..=q, got {j} of {}",
            p.passes()
        )));
    }
    if th.passes() != p.passes() {
        return Err(Error::invalid(format!(
            "threshold schedule covers {} passes but the program has {}",
            th.passes(),
            p.passes()
        )));
    }
    let prefix = p.prefix(j)?;
    let th_prefix = truncate_schedule(th, j);
    let d = match dp_exact(&prefix, m, Some(&th_prefix)) {
        Ok(d) => d,
        Err(_) => enumerate_exact(&prefix, m, Some(&th_prefix))?,
    };
    let mut rules = EngineCounterRules::new(d, j)?;
    modify_attach_counters(p, j, m.concept_bits(), &mut rules)
}

fn truncate_schedule(th: &ThresholdSet, passes: usize) -> ThresholdSet {
    ThresholdSet::custom(
        th.l,
        th.r_len,
        th.r_ext,
        th.k_ext,
        th.l_sigs[..passes].to_vec(),
        th.l_sigv,
        th.l_high,
        th.l_bias[..passes].to_vec(),
        th.l_flat,
    )
    .expect("a truncated schedule stays well formed")
}
