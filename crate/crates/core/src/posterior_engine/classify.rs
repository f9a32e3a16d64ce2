//! Classification formulas and the shared per-step stopping decision.
//!
//! Both engines call into this module so that the *definitions* of the
//! stopping rules are written once; the engines differ only in how they
//! compute the masses these definitions consume.  All comparisons are exact:
//! thresholds are dyadic rationals and the high-edge threshold, whose
//! exponent can be a half-integer, goes through [`crate::exact`].

use num::{BigRational, Zero};

use crate::branching_program::{edge_key, BranchingProgram};
use crate::error::{Error, Result};
use crate::exact;
use crate::learning_matrix::LearningMatrix;

use super::{EdgeClassification, PathDistribution, RefinedState, StopRule, ThresholdSet};

/// Outcome of one truncated step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum StepResult {
    Stop(StopRule),
    Advance(RefinedState),
}

/// Everything the stepping logic needs about layers processed so far.
pub(crate) struct StepCtx<'a> {
    pub p: &'a BranchingProgram,
    pub m: &'a LearningMatrix,
    pub th: &'a ThresholdSet,
    pub counter_cap: u32,
    /// State lists per layer, filled up to and including the current layer.
    pub states: &'a [Vec<RefinedState>],
    /// Classifications per layer, filled up to and including the current one.
    pub class: &'a [EdgeClassification],
}

impl StepCtx<'_> {
    /// Applies the stopping rules and counter updates for the step out of
    /// `states[layer][sidx]` on row `a` with concept `x`.
    ///
    /// # Panics
    ///
    /// Panics when a copy state cannot be resolved, which indicates an
    /// inconsistency between the program's bookkeeping and the layer tables.
    pub fn step(&self, layer: usize, sidx: usize, a: usize, x: usize) -> StepResult {
        let t_len = self.p.length();
        let s = self.states[layer][sidx];
        let pass = layer / t_len + 1;
        let pos = layer % t_len;
        let cls = &self.class[layer];

        if pos == 0 && pass >= 2 {
            if u64::from(s.cnt_high) > self.th.l_high {
                return StepResult::Stop(StopRule::CntHigh);
            }
            if u64::from(s.cnt_bias) > self.th.l_bias[pass - 2] {
                return StepResult::Stop(StopRule::CntBias);
            }
        }

        if pass == 1 {
            if cls.significant[sidx] {
                return StepResult::Stop(StopRule::Significant);
            }
            if cls.bad[sidx][a] {
                return StepResult::Stop(StopRule::BadEdge);
            }
            if cls.sigv[sidx][x] {
                return StepResult::Stop(StopRule::SigV);
            }
        } else {
            if cls.sigv[sidx][x] {
                return StepResult::Stop(StopRule::SigV);
            }
            if cls.bad[sidx][a] && !cls.high[sidx][a] {
                return StepResult::Stop(StopRule::BadEdge);
            }
            let (copy_layer, copy_idx) = resolve_copy(self.p, self.states, layer, sidx, true);
            if matches!(
                self.step(copy_layer, copy_idx, a, x),
                StepResult::Stop(_)
            ) {
                return StepResult::Stop(StopRule::CopyStop);
            }
            if cls.significant[sidx] {
                return StepResult::Stop(StopRule::Significant);
            }
            if pos > 0 {
                if u64::from(s.cnt_high) > self.th.l_high {
                    return StepResult::Stop(StopRule::CntHigh);
                }
                if u64::from(s.cnt_bias) > self.th.l_bias[pass - 1] {
                    return StepResult::Stop(StopRule::CntBias);
                }
            }
        }

        let b01 = if self.m.entry(a, x) == 1 { 0 } else { 1 };
        let target = self.p.successor(layer, s.vertex, a, b01 as u8);
        let (base_high, base_bias, entry) = if pos == 0 {
            (0, 0, sidx as u32)
        } else {
            (s.cnt_high, s.cnt_bias, s.entry)
        };
        let (cnt_high, cnt_bias) = if pass >= 2 && cls.high[sidx][a] {
            let delta = cls.delta[sidx][edge_key(a, b01 as u8)]
                .expect("traversed edge must have a defined increment");
            (
                (base_high + 1).min(self.counter_cap),
                base_bias.saturating_add(delta).min(self.counter_cap),
            )
        } else {
            (base_high, base_bias)
        };
        StepResult::Advance(RefinedState {
            entry,
            vertex: target,
            cnt_high,
            cnt_bias,
        })
    }

}

/// Resolves the copy of the previous pass that `states[layer][sidx]` replays,
/// as a `(layer, index)` pair one pass earlier.
///
/// With `use_meta_counters` the copy's counter values are read from the
/// program's metadata; without it the walk tracks no counters and the copy is
/// looked up with zero counters instead.
///
/// # Panics
///
/// Panics when the copy is not a materialized state, which indicates an
/// inconsistency between the program's bookkeeping and the layer tables.
pub(crate) fn resolve_copy(
    p: &BranchingProgram,
    states: &[Vec<RefinedState>],
    layer: usize,
    sidx: usize,
    use_meta_counters: bool,
) -> (usize, usize) {
    let t_len = p.length();
    let pos = layer % t_len;
    let s = states[layer][sidx];
    let copy_layer = layer - t_len;
    let boundary = layer - pos;
    if pos == 0 {
        let anchor = states[boundary][sidx].entry as usize;
        return (copy_layer, anchor);
    }
    let meta = p.meta(layer, s.vertex);
    let copy_vertex = meta
        .copy_vertex
        .expect("pass-boundary conditioning needs remembered copies");
    let (ch, cb) = if use_meta_counters {
        p.meta(copy_layer, copy_vertex).counters.unwrap_or((0, 0))
    } else {
        (0, 0)
    };
    let copy_entry = states[boundary][s.entry as usize].entry;
    let key = RefinedState {
        entry: copy_entry,
        vertex: copy_vertex,
        cnt_high: ch,
        cnt_bias: cb,
    };
    let idx = states[copy_layer]
        .binary_search(&key)
        .expect("replayed copy must be a materialized state");
    (copy_layer, idx)
}

/// One truncated step, with or without rules.
///
/// Without rules every step advances, counters stay zero, and the entry
/// field still tracks the anchoring boundary state so local posteriors stay
/// available.
#[allow(clippy::too_many_arguments)]
pub(crate) fn walk_step(
    p: &BranchingProgram,
    m: &LearningMatrix,
    th: Option<&ThresholdSet>,
    counter_cap: u32,
    states: &[Vec<RefinedState>],
    class: &[EdgeClassification],
    layer: usize,
    sidx: usize,
    a: usize,
    x: usize,
) -> StepResult {
    match th {
        Some(th) => StepCtx {
            p,
            m,
            th,
            counter_cap,
            states,
            class,
        }
        .step(layer, sidx, a, x),
        None => {
            let s = states[layer][sidx];
            let pos = layer % p.length();
            let b01 = if m.entry(a, x) == 1 { 0u8 } else { 1u8 };
            let target = p.successor(layer, s.vertex, a, b01);
            let entry = if pos == 0 { sidx as u32 } else { s.entry };
            StepResult::Advance(RefinedState {
                entry,
                vertex: target,
                cnt_high: 0,
                cnt_bias: 0,
            })
        }
    }
}

/// Checks that a program can be analysed under the given rules and returns
/// the counter cap.
///
/// # Errors
///
/// Returns [`Error::InvalidArg`] when the schedule does not cover the
/// program's passes, when a later pass lacks the remembered-copy metadata
/// the copy-stop rule needs, or when a middle pass lacks attached counters
/// (the copy of such a pass cannot be resolved to a unique counter state).
pub(crate) fn validate_rules(
    p: &BranchingProgram,
    m: &LearningMatrix,
    th: &ThresholdSet,
) -> Result<u32> {
    if th.passes() != p.passes() {
        return Err(Error::invalid(format!(
            "threshold schedule covers {} passes but the program has {}",
            th.passes(),
            p.passes()
        )));
    }
    let t_len = p.length();
    for pass in 2..=p.passes() {
        for pos in 1..=t_len {
            let layer = (pass - 1) * t_len + pos;
            for v in 0..p.width(layer) as u32 {
                let meta = p.meta(layer, v);
                if meta.copy_vertex.is_none() || meta.entry_vertex.is_none() {
                    return Err(Error::invalid(format!(
                        "pass {pass} lacks remembered-copy metadata at layer {layer}; \
                         apply the remember-pass modification first"
                    )));
                }
                if pass < p.passes() && meta.counters.is_none() {
                    return Err(Error::invalid(format!(
                        "pass {pass} is replayed by a later pass but has no attached \
                         counters; attach counters to it first"
                    )));
                }
            }
        }
    }
    Ok(m.concept_bits())
}
pub(crate) struct LayerView<'a> {
    /// Local arrival mass per `[state][x]`, in the classifying pass's space.
    pub local: &'a [Vec<BigRational>],
    /// Global arrival mass per `[state][x]`.
    pub global: &'a [Vec<BigRational>],
    /// Global joint mass with the next sample, per `[state][a]`.
    pub next_joint: &'a [Vec<BigRational>],
}

/// Computes the classification tables for one layer from exact masses.
pub(crate) fn classify_position(
    m: &LearningMatrix,
    th: &ThresholdSet,
    layer: usize,
    pass: usize,
    states: &[RefinedState],
    view: &LayerView<'_>,
    counter_cap: u32,
) -> EdgeClassification {
    let n_x = m.num_concepts();
    let n_a = m.num_samples();
    let big_x = exact::int(n_x as i64);
    let mut cls = EdgeClassification {
        layer,
        unreachable: vec![false; states.len()],
        significant: vec![false; states.len()],
        sigv: vec![vec![false; n_x]; states.len()],
        bad: vec![vec![false; n_a]; states.len()],
        high: vec![vec![false; n_a]; states.len()],
        delta: vec![vec![None; 2 * n_a]; states.len()],
        clamped: Vec::new(),
    };
    for sidx in 0..states.len() {
        let local = &view.local[sidx];
        let tot: BigRational = local.iter().sum();
        if tot.is_zero() {
            cls.unreachable[sidx] = true;
        } else {
            let sq: BigRational = local.iter().map(|v| v * v).sum();
            let sig_exp = 2 * th.l_sigs[pass - 1] as i64;
            cls.significant[sidx] =
                exact::ge_pow2_scaled(&(&sq * &big_x), &(&tot * &tot), 2 * sig_exp);
            for x in 0..n_x {
                cls.sigv[sidx][x] = exact::ge_pow2_scaled(
                    &(&local[x] * &big_x),
                    &tot,
                    2 * th.l_sigv as i64,
                );
            }
            for a in 0..n_a {
                let mut p_plus = BigRational::zero();
                for (x, mass) in local.iter().enumerate() {
                    if m.entry(a, x) == 1 {
                        p_plus += mass;
                    }
                }
                let two_p = &p_plus + &p_plus;
                let gap = if two_p >= tot { &two_p - &tot } else { &tot - &two_p };
                cls.bad[sidx][a] =
                    exact::ge_pow2_scaled(&gap, &tot, 2 * (1 - th.r_ext as i64));
                for b01 in 0..2u8 {
                    let pb = if b01 == 0 {
                        p_plus.clone()
                    } else {
                        &tot - &p_plus
                    };
                    if pb.is_zero() {
                        continue;
                    }
                    let mut t = 0u32;
                    loop {
                        let bound = exact::pow2(-(t as i64) - 1) * &tot;
                        if pb > bound {
                            break;
                        }
                        if t == counter_cap {
                            cls.clamped.push((sidx, edge_key(a, b01)));
                            break;
                        }
                        t += 1;
                    }
                    cls.delta[sidx][edge_key(a, b01)] = Some(t);
                }
            }
        }
        let glob_tot: BigRational = view.global[sidx].iter().sum();
        if !glob_tot.is_zero() {
            let e2 = th.k_ext as i64 - 2 * m.sample_bits() as i64;
            for a in 0..n_a {
                cls.high[sidx][a] =
                    exact::ge_pow2_scaled(&view.next_joint[sidx][a], &glob_tot, e2);
            }
        }
    }
    cls
}

/// Recomputes the classification of one position from a stored distribution.
///
/// `pass` and `pos` are 1-based and 0-based respectively.  Position 0 of a
/// pass classifies the boundary states under their fresh local spaces, so
/// the local posterior there is uniform by construction.
///
/// # Errors
///
/// Returns [`Error::InvalidArg`] when the position is out of range or the
/// distribution has no next-sample data for it.
pub fn classify_layer(
    d: &PathDistribution,
    m: &LearningMatrix,
    th: &ThresholdSet,
    pass: usize,
    pos: usize,
) -> Result<EdgeClassification> {
    if pass < 1 || pass > d.passes || pos >= d.length {
        return Err(Error::invalid("classification position out of range"));
    }
    let layer = d.layer_of(pass, pos);
    let data = &d.layers[layer];
    let next_joint = data
        .next_joint
        .as_ref()
        .ok_or_else(|| Error::invalid("layer has no next-sample data"))?;
    let fresh;
    let local: &[Vec<BigRational>] = if pos == 0 {
        let per_x = exact::int(1) / exact::int(m.num_concepts() as i64);
        fresh = data
            .states
            .iter()
            .map(|_| vec![per_x.clone(); m.num_concepts()])
            .collect::<Vec<_>>();
        &fresh
    } else {
        &data.local
    };
    Ok(classify_position(
        m,
        th,
        layer,
        pass,
        &data.states,
        &LayerView {
            local,
            global: &data.global,
            next_joint,
        },
        m.concept_bits(),
    ))
}
