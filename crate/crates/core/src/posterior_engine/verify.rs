//! Numerical verifiers for the quantitative bounds behind the truncation
//! analysis, plus exact success probabilities.
//!
//! Every verifier takes a [`PathDistribution`] computed with rules for the
//! same program and matrix and re-derives one inequality from the stored
//! masses with exact rational arithmetic.  The four bounds are:
//!
//! * *edge potential*: one step multiplies the potential by at most
//!   `(1 + 2^(1-r_ext)) / (2 Pr[M(a,x)=b])`;
//! * *potential growth*: conditioned on the previous pass reaching a given
//!   state, the expected potential grows by at most `(1 + 2^(2-2 r_len))`
//!   per position, times `2^cnt_bias` of the conditioning state;
//! * *counter overflow*: the bias counter exceeds its threshold with
//!   probability at most `2^(l_high - l_bias)` times the growth factor;
//! * *flatness*: conditioned on a non-significant state and on the concept
//!   being flat there, no concept has posterior above `2^(l_flat+1) / |X|`.
//!
//! The per-tuple functions check a single conditioning choice; the `_all`
//! variants sweep every valid tuple and keep the worst margin.

use std::cmp::Ordering;

use num::{BigRational, Zero};

use crate::branching_program::{BranchingProgram, VertexMeta};
use crate::error::{Error, Result};
use crate::exact;
use crate::learning_matrix::LearningMatrix;

use super::classify::{resolve_copy, validate_rules, walk_step, StepResult};
use super::{
    dp_exact, enumerate_exact, EdgeClassification, PathDistribution, RefinedState, ThresholdSet,
};

/// Potential of a vertex, from the counters attached by the second
/// modification stage.
///
/// # Panics
///
/// Panics when the vertex has no attached counters.
pub fn potential(meta: &VertexMeta) -> BigRational {
    let (cnt_high, cnt_bias) = meta.counters.expect("potential needs attached counters");
    exact::pow2(cnt_bias as i64 - cnt_high as i64)
}

/// Potential of a refined engine state.  Halted runs carry potential zero;
/// that case never reaches this function because stopped states leave the
/// layer tables.
pub fn potential_of(s: &RefinedState) -> BigRational {
    exact::pow2(s.cnt_bias as i64 - s.cnt_high as i64)
}

/// Outcome of one verified inequality, or of a sweep merged into one report.
///
/// `lhs`, `rhs`, and `margin = rhs - lhs` describe the comparison with the
/// smallest margin seen; a negative margin means the bound failed there.
/// `checks` counts the comparisons actually evaluated, so a vacuous report
/// holds with `checks == 0`.
#[derive(Clone, Debug)]
pub struct VerifierReport {
    pub holds: bool,
    pub lhs: BigRational,
    pub rhs: BigRational,
    pub margin: BigRational,
    pub checks: usize,
    pub detail: String,
}

impl VerifierReport {
    fn vacuous(detail: impl Into<String>) -> Self {
        VerifierReport {
            holds: true,
            lhs: BigRational::zero(),
            rhs: BigRational::zero(),
            margin: BigRational::zero(),
            checks: 0,
            detail: detail.into(),
        }
    }

    fn check(lhs: BigRational, rhs: BigRational, detail: impl Into<String>) -> Self {
        let margin = &rhs - &lhs;
        VerifierReport {
            holds: lhs <= rhs,
            lhs,
            rhs,
            margin,
            checks: 1,
            detail: detail.into(),
        }
    }

    fn merge(&mut self, other: VerifierReport) {
        let first = self.checks == 0;
        self.holds &= other.holds;
        self.checks += other.checks;
        if other.checks > 0 && (first || other.margin < self.margin) {
            self.lhs = other.lhs;
            self.rhs = other.rhs;
            self.margin = other.margin;
            self.detail = other.detail;
        }
    }
}

fn finish(mut report: VerifierReport, what: &str) -> VerifierReport {
    report.detail = if report.checks == 0 {
        format!("{what}: no checks applied")
    } else {
        format!(
            "{what}: {} checks, worst at {}",
            report.checks, report.detail
        )
    };
    report
}

fn exp_i64(v: u64) -> Result<i64> {
    i64::try_from(v).map_err(|_| Error::invalid("threshold too large to exponentiate"))
}

/// Shared scaffolding for the verifiers: the layer tables of a rules-mode
/// distribution, reshaped for the stepping code.
struct Ctx<'a> {
    p: &'a BranchingProgram,
    m: &'a LearningMatrix,
    d: &'a PathDistribution,
    th: &'a ThresholdSet,
    counter_cap: u32,
    states: Vec<Vec<RefinedState>>,
    class: Vec<EdgeClassification>,
}

impl<'a> Ctx<'a> {
    fn new(
        p: &'a BranchingProgram,
        m: &'a LearningMatrix,
        d: &'a PathDistribution,
    ) -> Result<Self> {
        let th = d.rules.as_ref().ok_or_else(|| {
            Error::invalid("lemma verification needs a distribution computed with stopping rules")
        })?;
        if d.passes != p.passes()
            || d.length != p.length()
            || d.n_x != m.num_concepts()
            || d.degree != p.degree()
        {
            return Err(Error::invalid(
                "distribution does not describe this program and matrix",
            ));
        }
        let counter_cap = validate_rules(p, m, th)?;
        let states: Vec<Vec<RefinedState>> =
            d.layers.iter().map(|l| l.states.clone()).collect();
        let class: Vec<EdgeClassification> = d
            .class
            .iter()
            .take(d.layers.len() - 1)
            .map(|c| {
                c.clone()
                    .expect("rules-mode distributions classify every step layer")
            })
            .collect();
        Ok(Ctx {
            p,
            m,
            d,
            th,
            counter_cap,
            states,
            class,
        })
    }

    /// `(1 + 2^(2 - 2 r_len))^i`, the per-position growth allowance.
    fn growth_factor(&self, i: usize) -> BigRational {
        let base = exact::int(1) + exact::pow2(2 - 2 * self.th.r_len as i64);
        let mut f = exact::int(1);
        for _ in 0..i {
            f *= &base;
        }
        f
    }

    /// Copy of `states[layer][sidx]` one pass earlier, reading boundary
    /// layers as position `T` of the pass that just ended.
    fn copy_of(&self, layer: usize, sidx: usize) -> (usize, usize) {
        if layer.is_multiple_of(self.d.length) {
            boundary_copy(self.p, &self.states, layer, sidx)
        } else {
            resolve_copy(self.p, &self.states, layer, sidx, true)
        }
    }

    fn edge_potential(
        &self,
        pass: usize,
        pos: usize,
        sidx: usize,
        a: usize,
        b01: u8,
    ) -> Result<VerifierReport> {
        let layer = self.d.layer_of(pass, pos);
        let (local, tot): (Vec<BigRational>, BigRational) = if pos == 0 {
            let per = exact::int(1) / exact::int(self.d.n_x as i64);
            (vec![per; self.d.n_x], exact::int(1))
        } else {
            let l = self.d.layers[layer].local[sidx].clone();
            let t = l.iter().sum();
            (l, t)
        };
        if tot.is_zero() {
            return Err(Error::invariant("conditioning state has zero local mass"));
        }
        let mut pb = BigRational::zero();
        for (x, mass) in local.iter().enumerate() {
            let label = if self.m.entry(a, x) == 1 { 0u8 } else { 1 };
            if label == b01 {
                pb += mass;
            }
        }
        if pb.is_zero() {
            return Ok(VerifierReport::vacuous(format!(
                "no concept with positive mass traverses row {a} with label {b01}"
            )));
        }
        let phi_u = if pos == 0 {
            exact::int(1)
        } else {
            potential_of(&self.states[layer][sidx])
        };
        let mut phi_after = BigRational::zero();
        let mut case = "stopped";
        for (x, mass) in local.iter().enumerate() {
            if mass.is_zero() {
                continue;
            }
            let label = if self.m.entry(a, x) == 1 { 0u8 } else { 1 };
            if label != b01 {
                continue;
            }
            match walk_step(
                self.p,
                self.m,
                Some(self.th),
                self.counter_cap,
                &self.states,
                &self.class,
                layer,
                sidx,
                a,
                x,
            ) {
                StepResult::Advance(v) => {
                    let phi = potential_of(&v);
                    debug_assert!(
                        phi_after.is_zero() || phi_after == phi,
                        "advancing concepts share one target state"
                    );
                    phi_after = phi;
                    case = if self.class[layer].high[sidx][a] {
                        "high"
                    } else if self.class[layer].bad[sidx][a] {
                        "bad"
                    } else {
                        "plain"
                    };
                }
                StepResult::Stop(_) => {}
            }
        }
        let rhs = phi_u * (exact::int(1) + exact::pow2(1 - self.th.r_ext as i64)) * &tot
            / (exact::int(2) * &pb);
        Ok(VerifierReport::check(
            phi_after,
            rhs,
            format!("pass {pass} position {pos} state {sidx} row {a} label {b01} ({case} edge)"),
        ))
    }

    /// Conditioning probability `Pr[previous pass reaches v']` for the
    /// growth and overflow bounds, in the previous pass's local space.
    fn conditioning(
        &self,
        pass: usize,
        v_start: usize,
        i: usize,
        vp_idx: usize,
    ) -> BigRational {
        let boundary = (pass - 1) * self.d.length;
        let anchor = self.states[boundary][v_start].entry as usize;
        let prev_layer = (pass - 2) * self.d.length + i;
        if i == 0 {
            if vp_idx == anchor {
                exact::int(1)
            } else {
                BigRational::zero()
            }
        } else if self.states[prev_layer][vp_idx].entry as usize == anchor {
            self.d.layers[prev_layer].local_total(vp_idx)
        } else {
            BigRational::zero()
        }
    }

    fn growth(
        &self,
        pass: usize,
        v_start: usize,
        i: usize,
        vp_idx: usize,
    ) -> Result<VerifierReport> {
        let denom = self.conditioning(pass, v_start, i, vp_idx);
        if denom.is_zero() {
            return Err(Error::invariant("conditioning event has zero probability"));
        }
        let prev_layer = (pass - 2) * self.d.length + i;
        let layer = (pass - 1) * self.d.length + i;
        let mut num = BigRational::zero();
        if i == 0 {
            num = exact::int(1);
        } else {
            for (sidx, s) in self.states[layer].iter().enumerate() {
                if s.entry as usize != v_start {
                    continue;
                }
                let mass = self.d.layers[layer].local_total(sidx);
                if mass.is_zero() {
                    continue;
                }
                let (cl, ci) = self.copy_of(layer, sidx);
                debug_assert_eq!(cl, prev_layer, "copies live one pass earlier");
                if ci == vp_idx {
                    num += mass * potential_of(s);
                }
            }
        }
        let cb_prev = if i == 0 {
            0
        } else {
            self.states[prev_layer][vp_idx].cnt_bias as i64
        };
        let rhs = self.growth_factor(i) * exact::pow2(cb_prev);
        Ok(VerifierReport::check(
            num / denom,
            rhs,
            format!("pass {pass} start {v_start} position {i} copy state {vp_idx}"),
        ))
    }

    fn overflow(
        &self,
        pass: usize,
        v_start: usize,
        i: usize,
        vp_idx: usize,
    ) -> Result<VerifierReport> {
        let denom = self.conditioning(pass, v_start, i, vp_idx);
        if denom.is_zero() {
            return Err(Error::invariant("conditioning event has zero probability"));
        }
        let prev_layer = (pass - 2) * self.d.length + i;
        let layer = (pass - 1) * self.d.length + i;
        let lb_here = self.th.l_bias[pass - 1];
        let mut num = BigRational::zero();
        if i > 0 {
            for (sidx, s) in self.states[layer].iter().enumerate() {
                if s.entry as usize != v_start || s.cnt_bias as u64 <= lb_here {
                    continue;
                }
                let mass = self.d.layers[layer].local_total(sidx);
                if mass.is_zero() {
                    continue;
                }
                let (_, ci) = self.copy_of(layer, sidx);
                if ci == vp_idx {
                    num += mass;
                }
            }
        }
        let cb_prev = if i == 0 {
            0
        } else {
            self.states[prev_layer][vp_idx].cnt_bias as i64
        };
        let rhs = self.growth_factor(i)
            * exact::pow2(exp_i64(self.th.l_high)? - exp_i64(lb_here)? + cb_prev);
        let mut detail =
            format!("pass {pass} start {v_start} position {i} copy state {vp_idx}");
        let lb_prev = self.th.l_bias[pass - 2];
        if cb_prev as u64 <= lb_prev && self.growth_factor(self.d.length) <= exact::int(2) {
            let closed =
                exp_i64(lb_prev)? - exp_i64(lb_here)? + exp_i64(self.th.l_high)? + 1;
            detail.push_str(&format!("; closed-form bound 2^{closed} applies"));
        }
        Ok(VerifierReport::check(num / denom, rhs, detail))
    }

    /// Flatness checks for one first-pass state, or `None` when the state is
    /// significant and the claim does not apply.
    fn flatness(
        &self,
        pos: usize,
        sidx: usize,
        l_flat: u64,
    ) -> Result<Option<VerifierReport>> {
        let local = &self.d.layers[pos].local[sidx];
        let tot: BigRational = local.iter().sum();
        if tot.is_zero() {
            return Err(Error::invariant("conditioning state has zero local mass"));
        }
        let n_x = exact::int(self.d.n_x as i64);
        let sq: BigRational = local.iter().map(|v| v * v).sum();
        if exact::ge_pow2_scaled(&(&sq * &n_x), &(&tot * &tot), 4 * self.th.l_sigs[0] as i64) {
            return Ok(None);
        }
        let lf = exp_i64(l_flat)?;
        let mut flat_mass = BigRational::zero();
        let mut flat: Vec<usize> = Vec::new();
        for (x, mass) in local.iter().enumerate() {
            if exact::cmp_pow2_scaled(&(mass * &n_x), &tot, 2 * lf) != Ordering::Greater {
                flat.push(x);
                flat_mass += mass;
            }
        }
        if flat_mass.is_zero() {
            return Err(Error::invariant("flat event has zero probability"));
        }
        let mut report = VerifierReport::vacuous("no flat concept has positive mass");
        let posterior_bound = exact::pow2(lf + 1) / &n_x;
        let transfer_bound = exact::pow2(lf + 1) * &flat_mass;
        for &x in &flat {
            report.merge(VerifierReport::check(
                &local[x] / &flat_mass,
                posterior_bound.clone(),
                format!("flat posterior at concept {x} (position {pos} state {sidx})"),
            ));
            report.merge(VerifierReport::check(
                &local[x] * &n_x,
                transfer_bound.clone(),
                format!("Bayes transfer at concept {x} (position {pos} state {sidx})"),
            ));
        }
        Ok(Some(report))
    }
}

/// Copy of a position-`T` state, read from its own pass's metadata.
///
/// [`resolve_copy`] treats a boundary layer as position 0 of the pass that
/// begins there; the verifiers also need the other reading, where the
/// boundary state is position `T` of the pass that just ended.
fn boundary_copy(
    p: &BranchingProgram,
    states: &[Vec<RefinedState>],
    layer: usize,
    sidx: usize,
) -> (usize, usize) {
    let t_len = p.length();
    debug_assert_eq!(layer % t_len, 0, "boundary reading of an interior layer");
    let s = states[layer][sidx];
    let copy_layer = layer - t_len;
    let copy_vertex = p
        .meta(layer, s.vertex)
        .copy_vertex
        .expect("pass-boundary conditioning needs remembered copies");
    let (cnt_high, cnt_bias) = p.meta(copy_layer, copy_vertex).counters.unwrap_or((0, 0));
    let copy_entry = states[copy_layer][s.entry as usize].entry;
    let key = RefinedState {
        entry: copy_entry,
        vertex: copy_vertex,
        cnt_high,
        cnt_bias,
    };
    let idx = states[copy_layer]
        .binary_search(&key)
        .expect("replayed copy must be a materialized state");
    (copy_layer, idx)
}

/// Checks the edge-potential bound for one labeled edge out of `u`.
///
/// The bound says the potential after an `(a, b)` step from `u` at position
/// `pos` of pass `pass` is at most `Φ(u) (1 + 2^(1-r_ext)) / (2 Pr[M(a,x) =
/// b])`, the probability taken under the local posterior at `u`.  Steps that
/// stop have potential zero and satisfy the bound trivially; an edge no
/// concept traverses is reported as a vacuous hold.
///
/// # Errors
///
/// Returns [`Error::InvalidArg`] when the distribution was computed without
/// rules or does not match the program, when the coordinates are out of
/// range, or when `u` is not a state of the layer; [`Error::Invariant`]
/// when `u` has zero local mass.
#[allow(clippy::too_many_arguments)]
pub fn verify_edge_potential(
    p: &BranchingProgram,
    m: &LearningMatrix,
    d: &PathDistribution,
    pass: usize,
    pos: usize,
    u: &RefinedState,
    a: usize,
    b01: u8,
) -> Result<VerifierReport> {
    let cx = Ctx::new(p, m, d)?;
    if pass < 2 || pass > d.passes {
        return Err(Error::invalid(
            "the edge-potential bound applies to passes after the first",
        ));
    }
    if pos >= d.length || a >= d.num_rows() || b01 > 1 {
        return Err(Error::invalid("edge coordinates out of range"));
    }
    let layer = d.layer_of(pass, pos);
    let sidx = d.layers[layer]
        .state_index(u)
        .ok_or_else(|| Error::invalid("state not present in the layer"))?;
    cx.edge_potential(pass, pos, sidx, a, b01)
}

/// Sweeps [`verify_edge_potential`] over every labeled edge out of every
/// reachable state in every pass after the first.
///
/// # Errors
///
/// As for [`verify_edge_potential`].
pub fn verify_edge_potential_all(
    p: &BranchingProgram,
    m: &LearningMatrix,
    d: &PathDistribution,
) -> Result<VerifierReport> {
    let cx = Ctx::new(p, m, d)?;
    let mut report = VerifierReport::vacuous("");
    for pass in 2..=d.passes {
        for pos in 0..d.length {
            let layer = d.layer_of(pass, pos);
            for sidx in 0..cx.states[layer].len() {
                if pos > 0 && d.layers[layer].local_total(sidx).is_zero() {
                    continue;
                }
                for a in 0..d.num_rows() {
                    for b01 in 0..2u8 {
                        report.merge(cx.edge_potential(pass, pos, sidx, a, b01)?);
                    }
                }
            }
        }
    }
    Ok(finish(report, "edge potential"))
}

/// Checks the potential-growth bound for one conditioning tuple.
///
/// `v_start` indexes the entry state at the boundary of pass `pass`, and
/// `v_prev` is a state at position `i` of the previous pass.  The bound says
/// the expected potential at position `i` of pass `pass`, conditioned on the
/// previous pass reaching `v_prev`, is at most `(1 + 2^(2-2 r_len))^i` times
/// `2^cnt_bias(v_prev)`.
///
/// # Errors
///
/// Returns [`Error::InvalidArg`] on bad coordinates or a rules-less
/// distribution, and [`Error::Invariant`] when the conditioning event has
/// zero probability.
pub fn verify_potential_growth(
    p: &BranchingProgram,
    m: &LearningMatrix,
    d: &PathDistribution,
    pass: usize,
    v_start: usize,
    i: usize,
    v_prev: &RefinedState,
) -> Result<VerifierReport> {
    let cx = Ctx::new(p, m, d)?;
    let vp_idx = growth_coords(&cx, pass, v_start, i, v_prev)?;
    cx.growth(pass, v_start, i, vp_idx)
}

/// Sweeps [`verify_potential_growth`] over every pass, entry state,
/// position, and reachable conditioning state.
///
/// # Errors
///
/// As for [`verify_potential_growth`].
pub fn verify_potential_growth_all(
    p: &BranchingProgram,
    m: &LearningMatrix,
    d: &PathDistribution,
) -> Result<VerifierReport> {
    let cx = Ctx::new(p, m, d)?;
    let mut report = VerifierReport::vacuous("");
    sweep_conditionings(&cx, |pass, v_start, i, vp_idx| {
        report.merge(cx.growth(pass, v_start, i, vp_idx)?);
        Ok(())
    })?;
    Ok(finish(report, "potential growth"))
}

/// Checks the counter-overflow bound for one conditioning tuple.
///
/// The bound says the bias counter at position `i` of pass `pass` exceeds
/// the pass's `l_bias` with conditional probability at most `2^(l_high -
/// l_bias)` times the growth allowance and `2^cnt_bias(v_prev)`.  When the
/// conditioning state has not itself overflowed and the growth allowance
/// over a whole pass is at most two, the detail notes the closed-form bound
/// this reduces to.
///
/// # Errors
///
/// As for [`verify_potential_growth`].
pub fn verify_overflow_bound(
    p: &BranchingProgram,
    m: &LearningMatrix,
    d: &PathDistribution,
    pass: usize,
    v_start: usize,
    i: usize,
    v_prev: &RefinedState,
) -> Result<VerifierReport> {
    let cx = Ctx::new(p, m, d)?;
    let vp_idx = growth_coords(&cx, pass, v_start, i, v_prev)?;
    cx.overflow(pass, v_start, i, vp_idx)
}

/// Sweeps [`verify_overflow_bound`] over every pass, entry state, position,
/// and reachable conditioning state.
///
/// # Errors
///
/// As for [`verify_overflow_bound`].
pub fn verify_overflow_bound_all(
    p: &BranchingProgram,
    m: &LearningMatrix,
    d: &PathDistribution,
) -> Result<VerifierReport> {
    let cx = Ctx::new(p, m, d)?;
    let mut report = VerifierReport::vacuous("");
    sweep_conditionings(&cx, |pass, v_start, i, vp_idx| {
        report.merge(cx.overflow(pass, v_start, i, vp_idx)?);
        Ok(())
    })?;
    Ok(finish(report, "counter overflow"))
}

fn growth_coords(
    cx: &Ctx<'_>,
    pass: usize,
    v_start: usize,
    i: usize,
    v_prev: &RefinedState,
) -> Result<usize> {
    let d = cx.d;
    if pass < 2 || pass > d.passes {
        return Err(Error::invalid(
            "conditioning on the previous pass needs a pass after the first",
        ));
    }
    if i > d.length {
        return Err(Error::invalid("position out of range"));
    }
    let boundary = (pass - 1) * d.length;
    if v_start >= d.layers[boundary].states.len() {
        return Err(Error::invalid("entry state out of range"));
    }
    let prev_layer = (pass - 2) * d.length + i;
    d.layers[prev_layer]
        .state_index(v_prev)
        .ok_or_else(|| Error::invalid("conditioning state not present in the layer"))
}

fn sweep_conditionings(
    cx: &Ctx<'_>,
    mut visit: impl FnMut(usize, usize, usize, usize) -> Result<()>,
) -> Result<()> {
    let d = cx.d;
    for pass in 2..=d.passes {
        let boundary = (pass - 1) * d.length;
        for v_start in 0..cx.states[boundary].len() {
            let anchor = cx.states[boundary][v_start].entry as usize;
            for i in 0..=d.length {
                let prev_layer = (pass - 2) * d.length + i;
                for vp_idx in 0..cx.states[prev_layer].len() {
                    let valid = if i == 0 {
                        vp_idx == anchor
                    } else {
                        cx.states[prev_layer][vp_idx].entry as usize == anchor
                            && !d.layers[prev_layer].local_total(vp_idx).is_zero()
                    };
                    if valid {
                        visit(pass, v_start, i, vp_idx)?;
                    }
                }
            }
        }
    }
    Ok(())
}

/// Checks the flatness claim at one first-pass state.
///
/// Conditioning a non-significant state's posterior on the flat event (the
/// concept's posterior is at most `2^l_flat / |X|`) leaves every concept
/// with posterior at most `2^(l_flat+1) / |X|`.  Both that form and the
/// equivalent Bayes transfer `Pr[flat | x] <= 2^(l_flat+1) Pr[flat]` are
/// evaluated.
///
/// # Errors
///
/// Returns [`Error::InvalidArg`] when the state is significant (the claim's
/// precondition excludes it), is unknown, or the distribution carries no
/// rules; [`Error::Invariant`] when the state or the flat event has zero
/// mass.
pub fn verify_flatness(
    p: &BranchingProgram,
    m: &LearningMatrix,
    d: &PathDistribution,
    pos: usize,
    v: &RefinedState,
    l_flat: u64,
) -> Result<VerifierReport> {
    let cx = Ctx::new(p, m, d)?;
    if pos > d.length {
        return Err(Error::invalid("position out of range"));
    }
    let sidx = d.layers[pos]
        .state_index(v)
        .ok_or_else(|| Error::invalid("state not present in the layer"))?;
    cx.flatness(pos, sidx, l_flat)?
        .ok_or_else(|| Error::invalid("flatness applies to non-significant states only"))
}

/// Sweeps [`verify_flatness`] over every reachable non-significant state of
/// the first pass, with `l_flat` defaulting to the schedule's value.
///
/// # Errors
///
/// Returns [`Error::InvalidArg`] when no flat threshold is available, plus
/// the errors of [`verify_flatness`] other than the significance
/// precondition (significant states are skipped and counted in the detail).
pub fn verify_flatness_all(
    p: &BranchingProgram,
    m: &LearningMatrix,
    d: &PathDistribution,
    l_flat: Option<u64>,
) -> Result<VerifierReport> {
    let cx = Ctx::new(p, m, d)?;
    let lf = l_flat.or(cx.th.l_flat).ok_or_else(|| {
        Error::invalid("no flat threshold: pass one explicitly or use a schedule with l_flat")
    })?;
    let mut report = VerifierReport::vacuous("");
    let mut significant = 0usize;
    for pos in 0..=d.length {
        for sidx in 0..cx.states[pos].len() {
            if d.layers[pos].local_total(sidx).is_zero() {
                continue;
            }
            match cx.flatness(pos, sidx, lf)? {
                Some(r) => report.merge(r),
                None => significant += 1,
            }
        }
    }
    let mut report = finish(report, "flatness");
    report
        .detail
        .push_str(&format!(" ({significant} significant states skipped)"));
    Ok(report)
}

/// Exact success numbers for one program.
#[derive(Clone, Debug)]
pub struct SuccessReport {
    /// Engine that produced the distribution.
    pub engine: &'static str,
    /// Probability that the final output equals the concept, conditioned on
    /// reaching the final layer when rules are active.
    pub success: BigRational,
    /// Mass that reaches the final layer (one without rules).
    pub surviving_mass: BigRational,
    /// Total stopped mass (zero without rules).
    pub stop_probability: BigRational,
}

/// Exact probability that a program outputs the hidden concept.
///
/// The engine is chosen automatically: the product-form engine when the
/// program satisfies its requirements, the enumeration engine otherwise.
/// With rules, `success` is conditioned on not stopping (zero when
/// everything stops) and the stopped mass is reported alongside.
///
/// # Errors
///
/// Returns [`Error::Budget`] when the instance exceeds the engines' budgets,
/// or any validation error shared by both engines.
pub fn success_probability_exact(
    p: &BranchingProgram,
    m: &LearningMatrix,
    rules: Option<&ThresholdSet>,
) -> Result<SuccessReport> {
    let d = match dp_exact(p, m, rules) {
        Ok(d) => d,
        Err(_) => enumerate_exact(p, m, rules)?,
    };
    let last = d.layers.len() - 1;
    let layer = &d.layers[last];
    let mut raw = BigRational::zero();
    for (sidx, s) in layer.states.iter().enumerate() {
        let out = p.output(s.vertex);
        if (out as usize) < d.n_x {
            raw += &layer.global[sidx][out as usize];
        }
    }
    let surviving_mass = d.alive_mass(last);
    let stop_probability = exact::int(1) - &surviving_mass;
    let success = if surviving_mass.is_zero() {
        BigRational::zero()
    } else {
        raw / &surviving_mass
    };
    Ok(SuccessReport {
        engine: d.engine,
        success,
        surviving_mass,
        stop_probability,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::branching_program::modify_remember_pass;
    use crate::posterior_engine::dp_exact;

    fn two_pass_instance(seed: u64) -> (BranchingProgram, LearningMatrix, ThresholdSet) {
        let m = LearningMatrix::parity(2);
        let p = BranchingProgram::random(2, 2, 2, 2, 3, seed);
        let p = modify_remember_pass(&p, 2).unwrap();
        let th = ThresholdSet::custom(1, 1, 2, 2, vec![1, 2], 8, 1, vec![0, 1], Some(3)).unwrap();
        (p, m, th)
    }

    #[test]
    fn potential_follows_the_counter_difference() {
        let zero = RefinedState { entry: 0, vertex: 0, cnt_high: 0, cnt_bias: 0 };
        assert_eq!(potential_of(&zero), exact::int(1));
        let skewed = RefinedState { entry: 0, vertex: 0, cnt_high: 2, cnt_bias: 3 };
        assert_eq!(potential_of(&skewed), exact::int(2));
        let meta = VertexMeta { counters: Some((2, 3)), ..VertexMeta::default() };
        assert_eq!(potential(&meta), exact::int(2));
    }

    #[test]
    fn edge_potential_holds_on_random_two_pass_programs() {
        for seed in 0..6 {
            let (p, m, th) = two_pass_instance(seed);
            let d = dp_exact(&p, &m, Some(&th)).unwrap();
            let r = verify_edge_potential_all(&p, &m, &d).unwrap();
            assert!(r.holds, "seed {seed} violates the bound: {}", r.detail);
            assert!(r.checks > 0, "seed {seed} checked nothing");
        }
    }

    #[test]
    fn potential_growth_holds_on_random_two_pass_programs() {
        for seed in 0..6 {
            let (p, m, th) = two_pass_instance(seed);
            let d = dp_exact(&p, &m, Some(&th)).unwrap();
            let r = verify_potential_growth_all(&p, &m, &d).unwrap();
            assert!(r.holds, "seed {seed} violates the bound: {}", r.detail);
            assert!(r.checks > 0, "seed {seed} checked nothing");
        }
    }

    #[test]
    fn overflow_bound_holds_on_random_two_pass_programs() {
        for seed in 0..6 {
            let (p, m, th) = two_pass_instance(seed);
            let d = dp_exact(&p, &m, Some(&th)).unwrap();
            let r = verify_overflow_bound_all(&p, &m, &d).unwrap();
            assert!(r.holds, "seed {seed} violates the bound: {}", r.detail);
            assert!(r.checks > 0, "seed {seed} checked nothing");
        }
    }

    #[test]
    fn flatness_holds_on_random_two_pass_programs() {
        for seed in 0..6 {
            let (p, m, th) = two_pass_instance(seed);
            let d = dp_exact(&p, &m, Some(&th)).unwrap();
            let r = verify_flatness_all(&p, &m, &d, None).unwrap();
            assert!(r.holds, "seed {seed} violates the claim: {}", r.detail);
            assert!(r.checks > 0, "seed {seed} checked nothing");
        }
    }

    #[test]
    fn growth_at_position_zero_is_an_equality() {
        let (p, m, th) = two_pass_instance(0);
        let d = dp_exact(&p, &m, Some(&th)).unwrap();
        let start = d.layers[0].states[0];
        let r = verify_potential_growth(&p, &m, &d, 2, 0, 0, &start).unwrap();
        assert!(r.holds);
        assert!(r.margin.is_zero(), "expectation and bound are both one");
    }

    #[test]
    fn verifiers_reject_distributions_without_rules() {
        let (p, m, _) = two_pass_instance(0);
        let d = dp_exact(&p, &m, None).unwrap();
        let u = d.layers[0].states[0];
        let err = verify_edge_potential(&p, &m, &d, 2, 0, &u, 0, 0).unwrap_err();
        assert!(matches!(err, Error::InvalidArg(_)));
    }

    #[test]
    fn flatness_rejects_significant_states() {
        let (p, m, _) = two_pass_instance(0);
        let th = ThresholdSet::custom(1, 1, 4, 2, vec![0, 2], 8, 1, vec![0, 1], Some(3)).unwrap();
        let d = dp_exact(&p, &m, Some(&th)).unwrap();
        let s = d.layers[0].states[0];
        let err = verify_flatness(&p, &m, &d, 0, &s, 3).unwrap_err();
        assert!(matches!(err, Error::InvalidArg(_)));
    }

    #[test]
    fn uniform_start_state_is_flat_for_any_threshold() {
        let (p, m, th) = two_pass_instance(1);
        let d = dp_exact(&p, &m, Some(&th)).unwrap();
        let s = d.layers[0].states[0];
        let r = verify_flatness(&p, &m, &d, 0, &s, 0).unwrap();
        assert!(r.holds, "a uniform posterior is already flat: {}", r.detail);
    }

    #[test]
    fn constant_output_program_guesses_one_concept() {
        let m = LearningMatrix::parity(2);
        let p = BranchingProgram::trivial(1, 2, 2, 3);
        let r = success_probability_exact(&p, &m, None).unwrap();
        assert_eq!(r.success, exact::int(1) / exact::int(4));
        assert!(r.stop_probability.is_zero());
    }

    #[test]
    fn one_bit_one_sample_optimum_is_three_quarters() {
        let m = LearningMatrix::parity(1);
        let succ = vec![vec![vec![0, 0, 0, 1]]];
        let p = BranchingProgram::new(1, 1, 1, succ, vec![0, 1], 0).unwrap();
        let r = success_probability_exact(&p, &m, None).unwrap();
        assert_eq!(r.success, exact::int(3) / exact::int(4));
    }

    #[test]
    fn extra_passes_of_a_constant_program_keep_its_success() {
        let m = LearningMatrix::parity(2);
        let one =
            success_probability_exact(&BranchingProgram::trivial(1, 2, 2, 0), &m, None).unwrap();
        let two =
            success_probability_exact(&BranchingProgram::trivial(2, 2, 2, 0), &m, None).unwrap();
        assert_eq!(one.success, two.success);
        assert_eq!(one.engine, "dp", "a single pass runs on the product-form engine");
        assert_eq!(two.engine, "enumerate", "unmodified later passes fall back");
    }
}

