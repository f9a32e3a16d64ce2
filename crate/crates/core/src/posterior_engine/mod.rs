//! Exact path-distribution analysis for multi-pass branching programs.
//!
//! Everything in this module works with exact rational arithmetic.  Given a
//! program, a learning matrix, and an optional [`ThresholdSet`], the two
//! engines ([`enumerate_exact`] and [`dp_exact`]) compute, for every layer,
//! the joint distribution of (program state, hidden concept) under the
//! truncated execution semantics: paths stop when a stopping rule fires, and
//! stopped mass is recorded in a per-rule ledger.  The engines share the
//! definitional code (classification formulas and the per-step stopping
//! decision) but propagate mass through entirely separate computations, so
//! agreement between them is a meaningful check.
//!
//! Two probability spaces appear throughout.  The *local* space of pass `j`
//! fixes an entry vertex at the pass boundary and draws the concept and all
//! samples fresh; local posteriors drive the bad-edge, significant-vertex,
//! and significant-concept classifications.  The *global* space runs the
//! whole program from its start vertex with one shared sample stream; global
//! arrival probabilities drive the high-edge classification.  A state's
//! `entry` field identifies its local anchor, so both views coexist in one
//! layer table.
//!
//! Thresholds at desk scale: the table presets produce exponents that are
//! far larger than `log |X|` for any program small enough to analyse
//! exactly, so with preset thresholds no rule ever fires.  Verifier suites
//! and tests use [`ThresholdSet::custom`] with small values instead.

mod attach;
mod classify;
mod dp;
mod enumerate;
mod verify;

pub use attach::{attach_counters_exact, EngineCounterRules};
pub use classify::classify_layer;
pub use dp::dp_exact;
pub use enumerate::enumerate_exact;
pub use verify::{
    potential, potential_of, success_probability_exact, verify_edge_potential,
    verify_edge_potential_all, verify_flatness, verify_flatness_all, verify_overflow_bound,
    verify_overflow_bound_all, verify_potential_growth, verify_potential_growth_all,
    SuccessReport, VerifierReport,
};

use std::collections::BTreeMap;

use num::{BigRational, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact;

/// Hard cap on `|X| * |A|^T` for the enumeration engine.
pub const ENUM_BUDGET: u64 = 1 << 25;

/// Hard cap on the number of refined states in any single layer.
pub const STATE_BUDGET: usize = 1 << 16;

/// Which preset produced a [`ThresholdSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ThresholdPreset {
    /// Two-pass schedule: `l_sigs = [l, 18l]`, `l_high = l`,
    /// `l_bias = [0, 14l]`, `l_sigv = 50l`, `l_flat = 3l`.
    TwoPassTable1,
    /// Multi-pass schedule with doubly exponential growth per pass.
    MultiPassTable2,
    /// Caller-specified values.
    Custom,
}

/// Stopping-rule thresholds for the truncated execution semantics.
///
/// `l_sigs` and `l_bias` hold one entry per pass (index `j - 1` for pass
/// `j`); `l_bias[0]` is unused because the first pass carries no counters.
/// `r_ext` and `k_ext` come from the extractor certificate for the matrix:
/// an edge is bad when the conditional bias leaves the open interval of
/// radius `2^-r_ext` around one half, and an edge is high when its global
/// next-sample probability is at least `2^(k_ext/2) / |A|`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThresholdSet {
    pub l: u64,
    pub r_len: u32,
    pub r_ext: u32,
    pub k_ext: u32,
    pub l_sigs: Vec<u64>,
    pub l_sigv: u64,
    pub l_high: u64,
    pub l_bias: Vec<u64>,
    pub l_flat: Option<u64>,
    pub preset: ThresholdPreset,
}

impl ThresholdSet {
    /// Two-pass schedule derived from the base parameter `l`.
    ///
    /// # Errors
    ///
    /// Returns [`Error::InvalidArg`] when `l == 0` or a threshold overflows.
    pub fn two_pass_table1(l: u64, r_len: u32, r_ext: u32, k_ext: u32) -> Result<Self> {
        if l == 0 {
            return Err(Error::invalid("threshold base l must be positive"));
        }
        let mul = |k: u64| -> Result<u64> {
            l.checked_mul(k)
                .ok_or_else(|| Error::invalid("threshold overflows u64"))
        };
        Ok(Self {
            l,
            r_len,
            r_ext,
            k_ext,
            l_sigs: vec![l, mul(18)?],
            l_sigv: mul(50)?,
            l_high: l,
            l_bias: vec![0, mul(14)?],
            l_flat: Some(mul(3)?),
            preset: ThresholdPreset::TwoPassTable1,
        })
    }

    /// Multi-pass schedule for `q` passes: `l_sigs[j] = l * 100^(3^(j-1)-1)`,
    /// `l_bias[j] = l * (100^(3^(j-1)-1) - 1) / 2`, `l_sigv = l * 100^(3^(q-1))`.
    ///
    /// # Errors
    ///
    /// Returns [`Error::InvalidArg`] when `q < 2`, `l == 0`, or any threshold
    /// overflows u64 (which happens for `q >= 4`).
    pub fn multi_pass_table2(q: usize, l: u64, r_len: u32, r_ext: u32, k_ext: u32) -> Result<Self> {
        if q < 2 {
            return Err(Error::invalid("multi-pass schedule needs at least two passes"));
        }
        if l == 0 {
            return Err(Error::invalid("threshold base l must be positive"));
        }
        let overflow = || Error::invalid("threshold overflows u64; use custom thresholds");
        let mut l_sigs = Vec::with_capacity(q);
        let mut l_bias = Vec::with_capacity(q);
        let mut exp3 = 1u32;
        for _ in 0..q {
            let pow = 100u64.checked_pow(exp3 - 1).ok_or_else(overflow)?;
            l_sigs.push(l.checked_mul(pow).ok_or_else(overflow)?);
            l_bias.push(l.checked_mul((pow - 1) / 2).ok_or_else(overflow)?);
            exp3 = exp3.checked_mul(3).ok_or_else(overflow)?;
        }
        let sigv_pow = 100u64
            .checked_pow(exp3 / 3)
            .ok_or_else(overflow)?;
        Ok(Self {
            l,
            r_len,
            r_ext,
            k_ext,
            l_sigs,
            l_sigv: l.checked_mul(sigv_pow).ok_or_else(overflow)?,
            l_high: l,
            l_bias,
            l_flat: None,
            preset: ThresholdPreset::MultiPassTable2,
        })
    }

    /// Fully caller-specified thresholds.
    ///
    /// # Errors
    ///
    /// Returns [`Error::InvalidArg`] when the per-pass vectors are empty or
    /// have mismatched lengths.
    #[allow(clippy::too_many_arguments)]
    pub fn custom(
        l: u64,
        r_len: u32,
        r_ext: u32,
        k_ext: u32,
        l_sigs: Vec<u64>,
        l_sigv: u64,
        l_high: u64,
        l_bias: Vec<u64>,
        l_flat: Option<u64>,
    ) -> Result<Self> {
        if l_sigs.is_empty() || l_sigs.len() != l_bias.len() {
            return Err(Error::invalid(
                "per-pass threshold vectors must be non-empty and equal length",
            ));
        }
        Ok(Self {
            l,
            r_len,
            r_ext,
            k_ext,
            l_sigs,
            l_sigv,
            l_high,
            l_bias,
            l_flat,
            preset: ThresholdPreset::Custom,
        })
    }

    /// Number of passes the schedule covers.
    pub fn passes(&self) -> usize {
        self.l_sigs.len()
    }

    /// Program length implied by `r_len`.
    pub fn expected_length(&self) -> usize {
        1usize << self.r_len
    }
}

/// Stopping rules, in the order they are tried within one step.
///
/// The first pass tries `Significant`, `BadEdge`, `SigV`.  Later passes try
/// `SigV`, `BadEdge` (bad and not high), `CopyStop`, `Significant`,
/// `CntHigh`, `CntBias`.  The order only affects ledger attribution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StopRule {
    /// The hidden concept has large posterior mass at the current state.
    SigV,
    /// The sampled row is biased under the local posterior (and not high).
    BadEdge,
    /// The replayed copy of the previous pass stops on this step.
    CopyStop,
    /// The local posterior at the current state has large L2 norm.
    Significant,
    /// The high-edge counter exceeds `l_high`.
    CntHigh,
    /// The bias counter exceeds the pass's `l_bias`.
    CntBias,
}

impl std::fmt::Display for StopRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            StopRule::SigV => "sigv",
            StopRule::BadEdge => "bad_edge",
            StopRule::CopyStop => "copy_stop",
            StopRule::Significant => "significant",
            StopRule::CntHigh => "cnt_high",
            StopRule::CntBias => "cnt_bias",
        };
        f.write_str(name)
    }
}

/// A program vertex refined by its local anchor and pass counters.
///
/// `entry` is the index of the anchoring state in the pass-boundary layer
/// (index 0 for the first pass, whose anchor is the start vertex).  The
/// counters belong to the pass that owns the layer and are zero whenever the
/// pass is the first or rules are disabled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RefinedState {
    pub entry: u32,
    pub vertex: u32,
    pub cnt_high: u32,
    pub cnt_bias: u32,
}

/// Classification tables for one layer, indexed like the layer's state list.
///
/// `sigv` is indexed by `[state][concept]`, `bad` and `high` by
/// `[state][row]`, and `delta` by `[state][edge_key(a, b01)]`.  `delta` is
/// `None` for edges no concept can traverse.  `clamped` records `(state,
/// edge_key)` pairs where the increment hit the counter cap.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeClassification {
    pub layer: usize,
    pub unreachable: Vec<bool>,
    pub significant: Vec<bool>,
    pub sigv: Vec<Vec<bool>>,
    pub bad: Vec<Vec<bool>>,
    pub high: Vec<Vec<bool>>,
    pub delta: Vec<Vec<Option<u32>>>,
    pub clamped: Vec<(usize, usize)>,
}

/// Distribution data for one global layer.
///
/// `local[s][x]` is the arrival mass of state `s` with concept `x` in the
/// local space of the pass that owns the layer (the preceding pass for a
/// boundary layer).  `global[s][x]` is the arrival mass in the global space.
/// `next_joint[s][a]` is the global joint mass of arriving at `s` and the
/// next stream sample being row `a`, marginalized over concepts; it is
/// `None` for the final layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerData {
    pub states: Vec<RefinedState>,
    pub local: Vec<Vec<BigRational>>,
    pub global: Vec<Vec<BigRational>>,
    pub next_joint: Option<Vec<Vec<BigRational>>>,
}

impl LayerData {
    /// Index of `state` in this layer's state list.
    pub fn state_index(&self, state: &RefinedState) -> Option<usize> {
        self.states.binary_search(state).ok()
    }

    /// Total local arrival mass of one state, summed over concepts.
    pub fn local_total(&self, idx: usize) -> BigRational {
        self.local[idx].iter().sum()
    }

    /// Total global arrival mass of one state, summed over concepts.
    pub fn global_total(&self, idx: usize) -> BigRational {
        self.global[idx].iter().sum()
    }

    /// Local posterior over concepts at one state, or `None` when the state
    /// has zero local mass.
    pub fn posterior(&self, idx: usize) -> Option<Vec<BigRational>> {
        let tot = self.local_total(idx);
        if tot.is_zero() {
            return None;
        }
        Some(self.local[idx].iter().map(|v| v / &tot).collect())
    }
}

/// Exact truncated-path distributions for a whole program.
///
/// `layers[g]` describes global layer `g`; `class[g]` holds the
/// classification used when stepping out of layer `g` (present only when
/// rules are active, absent for the final layer).  `ledger[g]` holds global
/// stopped mass per rule at the transition out of layer `g`, and
/// `local_ledger[g]` the same per `(entry, rule)` in the owning pass's local
/// space.
#[derive(Clone, Debug)]
pub struct PathDistribution {
    pub passes: usize,
    pub length: usize,
    pub n_x: usize,
    pub degree: usize,
    pub rules: Option<ThresholdSet>,
    pub layers: Vec<LayerData>,
    pub class: Vec<Option<EdgeClassification>>,
    pub ledger: Vec<BTreeMap<StopRule, BigRational>>,
    pub local_ledger: Vec<BTreeMap<(u32, StopRule), BigRational>>,
    pub engine: &'static str,
}

impl PathDistribution {
    /// Rows in the sample alphabet.
    pub fn num_rows(&self) -> usize {
        self.degree / 2
    }

    /// Global layer index of position `i` in 1-based pass `j`.
    ///
    /// # Panics
    ///
    /// Panics when the pass or position is out of range.
    pub fn layer_of(&self, pass: usize, pos: usize) -> usize {
        assert!(pass >= 1 && pass <= self.passes, "pass out of range");
        assert!(pos <= self.length, "position out of range");
        (pass - 1) * self.length + pos
    }

    /// Total live global mass at one layer.
    pub fn alive_mass(&self, layer: usize) -> BigRational {
        self.layers[layer]
            .global
            .iter()
            .flatten()
            .sum()
    }

    /// Total global stopped mass at transitions strictly before `layer`.
    pub fn stopped_before(&self, layer: usize) -> BigRational {
        self.ledger[..layer]
            .iter()
            .flat_map(|m| m.values())
            .sum()
    }

    /// Checks that live plus stopped mass is exactly one at every layer and
    /// that every local space conserves mass as well.
    ///
    /// # Errors
    ///
    /// Returns [`Error::Invariant`] naming the first layer that leaks mass.
    pub fn check_conservation(&self) -> Result<()> {
        let one = exact::int(1);
        for g in 0..self.layers.len() {
            let total = self.alive_mass(g) + self.stopped_before(g);
            if total != one {
                return Err(Error::invariant(format!(
                    "global mass at layer {g} sums to {total} instead of 1"
                )));
            }
        }
        for pass in 1..=self.passes {
            let base = (pass - 1) * self.length;
            let entries: Vec<u32> = (0..self.layers[base].states.len() as u32).collect();
            for pos in 0..=self.length {
                let g = base + pos;
                let mut live: BTreeMap<u32, BigRational> = BTreeMap::new();
                if pos == 0 {
                    for &e in &entries {
                        live.insert(e, one.clone());
                    }
                } else {
                    let layer = &self.layers[g];
                    for (idx, s) in layer.states.iter().enumerate() {
                        *live.entry(s.entry).or_insert_with(BigRational::zero) +=
                            layer.local[idx].iter().sum::<BigRational>();
                    }
                }
                for &e in &entries {
                    let mut total = live.remove(&e).unwrap_or_else(BigRational::zero);
                    for t in base..g {
                        for ((entry, _), mass) in &self.local_ledger[t] {
                            if *entry == e {
                                total += mass;
                            }
                        }
                    }
                    if total != one {
                        return Err(Error::invariant(format!(
                            "local mass for entry {e} of pass {pass} at layer {g} \
                             sums to {total} instead of 1"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// True when the other distribution carries identical numbers, ignoring
    /// which engine produced it.
    pub fn agrees_with(&self, other: &PathDistribution) -> bool {
        self.passes == other.passes
            && self.length == other.length
            && self.n_x == other.n_x
            && self.degree == other.degree
            && self.rules == other.rules
            && self.layers == other.layers
            && self.class == other.class
            && self.ledger == other.ledger
            && self.local_ledger == other.local_ledger
    }
}
