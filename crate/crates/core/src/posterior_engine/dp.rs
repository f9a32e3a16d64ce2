//! Product-form engine: forward chains with backward suffix tables.
//!
//! For each pass the local masses follow from a per-concept forward product
//! over the pass's layers, one chain per boundary entry.  Global masses
//! multiply the local mass by the probability that the previous pass,
//! replayed from the state's remembered copy on the not-yet-seen remainder
//! of the stream, lands exactly on the anchor the entry points to; those
//! survival probabilities come from a backward table over the previous
//! pass's layers.  The sample blocks driving the two factors are disjoint,
//! which is what makes the product exact.  Later passes therefore need the
//! remembered-copy metadata even when no rules are active, and the engine is
//! capped at three passes.

use std::collections::BTreeMap;

use num::{BigRational, Zero};

use crate::branching_program::BranchingProgram;
use crate::error::{Error, Result};
use crate::exact;
use crate::learning_matrix::LearningMatrix;

use super::classify::{
    classify_position, resolve_copy, validate_rules, walk_step, LayerView, StepResult,
};
use super::{
    EdgeClassification, LayerData, PathDistribution, RefinedState, StopRule, ThresholdSet,
    STATE_BUDGET,
};

/// `[state][x]` masses for one layer.
type LayerMass = Vec<Vec<BigRational>>;

/// `suffix[x][pos][state][target]` is the probability that the owning
/// pass's truncated run, continued from `state` at position `pos` under
/// concept `x`, is alive at position `T` in `target`.
type SuffixTable = Vec<Vec<Vec<Vec<BigRational>>>>;

/// Chain consistency of a state read at position `T` of its own pass: the
/// remembered copy must coincide with the state its entry anchors to,
/// recursively down to the program start.  Inconsistent states exist in
/// local spaces but never occur in the global space.
fn consistent(
    p: &BranchingProgram,
    states: &[Vec<RefinedState>],
    layer: usize,
    idx: usize,
    meta_counters: bool,
) -> bool {
    if layer == 0 {
        return true;
    }
    let s = states[layer][idx];
    let Some(cv) = p.meta(layer, s.vertex).copy_vertex else {
        return true;
    };
    let prev = layer - p.length();
    let (ch, cb) = if meta_counters {
        p.meta(prev, cv).counters.unwrap_or((0, 0))
    } else {
        (0, 0)
    };
    let anchor = states[prev][s.entry as usize];
    anchor.vertex == cv
        && anchor.cnt_high == ch
        && anchor.cnt_bias == cb
        && consistent(p, states, prev, s.entry as usize, meta_counters)
}

/// Computes exact truncated-path distributions by forward products.
///
/// Produces the same numbers as [`super::enumerate_exact`] on any instance
/// both engines accept, without ever walking a full sample stream: work is
/// polynomial in the layer widths instead of exponential in `T`.
///
/// # Errors
///
/// Returns [`Error::InvalidArg`] when the program has more than three
/// passes, lacks remembered copies on a pass after the first (with or
/// without rules; the pass-boundary conditioning follows the copies), or
/// does not fit the matrix or rules, and [`Error::Budget`] when a layer
/// materializes more than [`STATE_BUDGET`] states.
pub fn dp_exact(
    p: &BranchingProgram,
    m: &LearningMatrix,
    rules: Option<&ThresholdSet>,
) -> Result<PathDistribution> {
    if p.sample_bits() != m.sample_bits() as usize {
        return Err(Error::invalid(
            "program and matrix disagree on the sample alphabet",
        ));
    }
    let q = p.passes();
    if q > 3 {
        return Err(Error::invalid(
            "the product-form engine supports at most three passes",
        ));
    }
    let t_len = p.length();
    for pass in 2..=q {
        for pos in 1..=t_len {
            let layer = (pass - 1) * t_len + pos;
            for v in 0..p.width(layer) as u32 {
                let meta = p.meta(layer, v);
                if meta.copy_vertex.is_none() || meta.entry_vertex.is_none() {
                    return Err(Error::invalid(format!(
                        "pass {pass} lacks remembered copies at layer {layer}; \
                         the product-form engine needs the remember-pass \
                         modification on every pass after the first"
                    )));
                }
            }
        }
    }
    let counter_cap = match rules {
        Some(th) => validate_rules(p, m, th)?,
        None => 0,
    };
    let track = rules.is_some();

    let n_x = m.num_concepts();
    let n_a = m.num_samples();
    let num_layers = q * t_len + 1;
    let per_x = exact::int(1) / exact::int(n_x as i64);
    let inv_a = exact::int(1) / exact::int(n_a as i64);

    let start = RefinedState {
        entry: 0,
        vertex: p.start(),
        cnt_high: 0,
        cnt_bias: 0,
    };
    let mut states: Vec<Vec<RefinedState>> = vec![vec![start]];
    let mut locals: Vec<LayerMass> = vec![vec![vec![per_x.clone(); n_x]]];
    let mut globals: Vec<LayerMass> = vec![vec![vec![per_x.clone(); n_x]]];
    let mut next_joints: Vec<LayerMass> = vec![vec![vec![inv_a.clone(); n_a]]];
    let mut class: Vec<EdgeClassification> = Vec::new();
    let mut ledger: Vec<BTreeMap<StopRule, BigRational>> =
        vec![BTreeMap::new(); num_layers - 1];
    let mut local_ledger: Vec<BTreeMap<(u32, StopRule), BigRational>> =
        vec![BTreeMap::new(); num_layers - 1];

    // suffix table of the completed previous pass, and the pinned global
    // arrival masses `[entry][a][x]` at the current pass boundary
    let mut prev_suffix: Option<SuffixTable> = None;
    let mut prev_njx: Option<Vec<Vec<Vec<BigRational>>>> = None;

    for pass in 1..=q {
        let base = (pass - 1) * t_len;
        let gate: Vec<bool> = (0..states[base].len())
            .map(|e| consistent(p, &states, base, e, track))
            .collect();

        // forward local chains, anchored fresh at every boundary entry
        let mut fwd: Vec<LayerMass> =
            vec![vec![vec![per_x.clone(); n_x]; states[base].len()]];

        for i in 0..t_len {
            let g = base + i;
            if let Some(th) = rules {
                debug_assert_eq!(class.len(), g, "layers classify in order");
                class.push(classify_position(
                    m,
                    th,
                    g,
                    pass,
                    &states[g],
                    &LayerView {
                        local: &fwd[i],
                        global: &globals[g],
                        next_joint: &next_joints[g],
                    },
                    counter_cap,
                ));
            }

            let mut new_counts: BTreeMap<RefinedState, Vec<BigRational>> = BTreeMap::new();
            for sidx in 0..states[g].len() {
                for x in 0..n_x {
                    if fwd[i][sidx][x].is_zero() {
                        continue;
                    }
                    let mass = &fwd[i][sidx][x] * &inv_a;
                    for a in 0..n_a {
                        match walk_step(
                            p, m, rules, counter_cap, &states, &class, g, sidx, a, x,
                        ) {
                            StepResult::Stop(rule) => {
                                let e_idx = if i == 0 {
                                    sidx
                                } else {
                                    states[g][sidx].entry as usize
                                };
                                *local_ledger[g]
                                    .entry((e_idx as u32, rule))
                                    .or_insert_with(BigRational::zero) += &mass;
                                let gmass = if pass == 1 {
                                    mass.clone()
                                } else if i == 0 {
                                    prev_njx
                                        .as_ref()
                                        .expect("later passes have pinned boundary joints")
                                        [sidx][a][x]
                                        .clone()
                                } else if gate[e_idx] {
                                    let (cl, ci) = resolve_copy(p, &states, g, sidx, track);
                                    match walk_step(
                                        p, m, rules, counter_cap, &states, &class, cl, ci,
                                        a, x,
                                    ) {
                                        StepResult::Advance(cs) => {
                                            let cn = states[cl + 1]
                                                .binary_search(&cs)
                                                .expect("replayed copies stay materialized");
                                            let suf = prev_suffix
                                                .as_ref()
                                                .expect("later passes have suffix tables");
                                            &mass * &suf[x][i + 1][cn][e_idx]
                                        }
                                        StepResult::Stop(_) => BigRational::zero(),
                                    }
                                } else {
                                    BigRational::zero()
                                };
                                if !gmass.is_zero() {
                                    *ledger[g]
                                        .entry(rule)
                                        .or_insert_with(BigRational::zero) += gmass;
                                }
                            }
                            StepResult::Advance(s) => {
                                new_counts
                                    .entry(s)
                                    .or_insert_with(|| vec![BigRational::zero(); n_x])[x] +=
                                    &mass;
                            }
                        }
                    }
                }
            }
            if new_counts.len() > STATE_BUDGET {
                return Err(Error::Budget {
                    what: "refined states in one layer".into(),
                    needed: new_counts.len() as u128,
                    cap: STATE_BUDGET as u128,
                    hint: "shrink the instance".into(),
                });
            }
            let next_states: Vec<RefinedState> = new_counts.keys().copied().collect();
            let next_fwd: LayerMass =
                next_states.iter().map(|s| new_counts[s].clone()).collect();
            states.push(next_states);
            locals.push(next_fwd.clone());
            fwd.push(next_fwd);

            let g1 = g + 1;
            let glob: LayerMass = if pass == 1 {
                fwd[i + 1].clone()
            } else if i + 1 == t_len {
                (0..states[g1].len())
                    .map(|idx| {
                        if consistent(p, &states, g1, idx, track) {
                            fwd[i + 1][idx].clone()
                        } else {
                            vec![BigRational::zero(); n_x]
                        }
                    })
                    .collect()
            } else {
                let suf = prev_suffix.as_ref().expect("later passes have suffix tables");
                states[g1]
                    .iter()
                    .enumerate()
                    .map(|(idx, s)| {
                        let e_idx = s.entry as usize;
                        if !gate[e_idx] {
                            return vec![BigRational::zero(); n_x];
                        }
                        let (_, ci) = resolve_copy(p, &states, g1, idx, track);
                        (0..n_x)
                            .map(|x| {
                                if fwd[i + 1][idx][x].is_zero() {
                                    BigRational::zero()
                                } else {
                                    &fwd[i + 1][idx][x] * &suf[x][i + 1][ci][e_idx]
                                }
                            })
                            .collect()
                    })
                    .collect()
            };
            globals.push(glob);

            if g1 < num_layers - 1 && !g1.is_multiple_of(t_len) {
                let nj: LayerMass = if pass == 1 {
                    globals[g1]
                        .iter()
                        .map(|row| {
                            let tot: BigRational = row.iter().sum();
                            vec![tot * &inv_a; n_a]
                        })
                        .collect()
                } else {
                    let suf = prev_suffix.as_ref().expect("later passes have suffix tables");
                    states[g1]
                        .iter()
                        .enumerate()
                        .map(|(idx, s)| {
                            let e_idx = s.entry as usize;
                            let mut row = vec![BigRational::zero(); n_a];
                            if !gate[e_idx] {
                                return row;
                            }
                            let (cl, ci) = resolve_copy(p, &states, g1, idx, track);
                            for x in 0..n_x {
                                if fwd[i + 1][idx][x].is_zero() {
                                    continue;
                                }
                                for (a, slot) in row.iter_mut().enumerate() {
                                    if let StepResult::Advance(cs) = walk_step(
                                        p, m, rules, counter_cap, &states, &class, cl, ci,
                                        a, x,
                                    ) {
                                        let cn = states[cl + 1]
                                            .binary_search(&cs)
                                            .expect("replayed copies stay materialized");
                                        *slot += &fwd[i + 1][idx][x]
                                            * &inv_a
                                            * &suf[x][i + 2][cn][e_idx];
                                    }
                                }
                            }
                            row
                        })
                        .collect()
                };
                next_joints.push(nj);
            }
        }

        if pass < q {
            let bound = base + t_len;
            let final_len = states[bound].len();

            // backward suffix-survival table over this pass's layers; rows
            // outside the forward support stay zero and are never read
            let mut suffix: SuffixTable = Vec::with_capacity(n_x);
            for x in 0..n_x {
                let mut per_pos: Vec<Vec<Vec<BigRational>>> = vec![Vec::new(); t_len + 1];
                per_pos[t_len] = (0..final_len)
                    .map(|sidx| {
                        let mut row = vec![BigRational::zero(); final_len];
                        row[sidx] = exact::int(1);
                        row
                    })
                    .collect();
                for pos in (0..t_len).rev() {
                    let g = base + pos;
                    let rows: Vec<Vec<BigRational>> = (0..states[g].len())
                        .map(|sidx| {
                            let mut row = vec![BigRational::zero(); final_len];
                            if fwd[pos][sidx][x].is_zero() {
                                return row;
                            }
                            for a in 0..n_a {
                                if let StepResult::Advance(s) = walk_step(
                                    p, m, rules, counter_cap, &states, &class, g, sidx, a,
                                    x,
                                ) {
                                    let nidx = states[g + 1]
                                        .binary_search(&s)
                                        .expect("suffix states stay materialized");
                                    for (t, v) in row.iter_mut().enumerate() {
                                        if !per_pos[pos + 1][nidx][t].is_zero() {
                                            *v += &inv_a * &per_pos[pos + 1][nidx][t];
                                        }
                                    }
                                }
                            }
                            row
                        })
                        .collect();
                    per_pos[pos] = rows;
                }
                suffix.push(per_pos);
            }

            // pinned boundary joints: rerun the pass with the first sample
            // fixed, then gate on chain consistency
            let gate_t: Vec<bool> = (0..final_len)
                .map(|e| consistent(p, &states, bound, e, track))
                .collect();
            let mut njx = vec![vec![vec![BigRational::zero(); n_x]; n_a]; final_len];
            for a0 in 0..n_a {
                let mut cur: LayerMass =
                    vec![vec![per_x.clone(); n_x]; states[base].len()];
                for pos in 0..t_len {
                    let g = base + pos;
                    let mut next: LayerMass =
                        vec![vec![BigRational::zero(); n_x]; states[g + 1].len()];
                    for sidx in 0..states[g].len() {
                        for x in 0..n_x {
                            if cur[sidx][x].is_zero() {
                                continue;
                            }
                            let mass = &cur[sidx][x] * &inv_a;
                            for a in 0..n_a {
                                if pos == 0 && a != a0 {
                                    continue;
                                }
                                if let StepResult::Advance(s) = walk_step(
                                    p, m, rules, counter_cap, &states, &class, g, sidx, a,
                                    x,
                                ) {
                                    let idx = states[g + 1].binary_search(&s).expect(
                                        "pinned support is contained in the full support",
                                    );
                                    next[idx][x] += &mass;
                                }
                            }
                        }
                    }
                    cur = next;
                }
                for e in 0..final_len {
                    if !gate_t[e] {
                        continue;
                    }
                    for x in 0..n_x {
                        if !cur[e][x].is_zero() {
                            njx[e][a0][x] = cur[e][x].clone();
                        }
                    }
                }
            }
            let nj: LayerMass = njx
                .iter()
                .map(|per_a| per_a.iter().map(|row| row.iter().sum()).collect())
                .collect();
            next_joints.push(nj);
            prev_njx = Some(njx);
            prev_suffix = Some(suffix);
        }
    }

    let mut layers = Vec::with_capacity(num_layers);
    let mut class_iter = class.into_iter();
    let mut class_out = Vec::with_capacity(num_layers);
    for g in 0..num_layers {
        layers.push(LayerData {
            states: std::mem::take(&mut states[g]),
            local: std::mem::take(&mut locals[g]),
            global: std::mem::take(&mut globals[g]),
            next_joint: if g < num_layers - 1 {
                Some(std::mem::take(&mut next_joints[g]))
            } else {
                None
            },
        });
        class_out.push(if rules.is_some() && g < num_layers - 1 {
            class_iter.next()
        } else {
            None
        });
    }

    Ok(PathDistribution {
        passes: q,
        length: t_len,
        n_x,
        degree: p.degree(),
        rules: rules.cloned(),
        layers,
        class: class_out,
        ledger,
        local_ledger,
        engine: "dp",
    })
}
