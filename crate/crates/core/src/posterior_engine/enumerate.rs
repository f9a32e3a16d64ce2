//! Exhaustive configuration-walk engine.
//!
//! Masses are computed by literally walking every `(concept, sample
//! prefix)` configuration through the program and counting arrivals, so a
//! layer's numbers never depend on how an earlier layer's numbers were
//! stored: each layer is recounted from scratch.  This makes the engine
//! slow and simple, which is exactly what an oracle should be.

use std::collections::BTreeMap;

use num::BigRational;

use crate::branching_program::BranchingProgram;
use crate::error::{Error, Result};
use crate::exact;
use crate::learning_matrix::LearningMatrix;

use super::classify::{classify_position, validate_rules, walk_step, LayerView, StepResult};
use super::{
    EdgeClassification, LayerData, PathDistribution, RefinedState, StopRule, ThresholdSet,
    ENUM_BUDGET, STATE_BUDGET,
};

/// Calls `f` with every tuple in `{0, .., base-1}^len`.
fn for_each_tuple(len: usize, base: usize, mut f: impl FnMut(&[usize])) {
    let mut tuple = vec![0usize; len];
    loop {
        f(&tuple);
        let mut k = 0;
        loop {
            if k == len {
                return;
            }
            tuple[k] += 1;
            if tuple[k] < base {
                break;
            }
            tuple[k] = 0;
            k += 1;
        }
    }
}

/// Computes exact truncated-path distributions by exhaustive enumeration.
///
/// Works for any number of passes.  With rules, classification tables are
/// built layer by layer and every walk respects the stopping rules of the
/// layers it crosses; without rules no path ever stops.
///
/// # Errors
///
/// Returns [`Error::Budget`] when `|X| * |A|^T` exceeds [`ENUM_BUDGET`] or a
/// layer materializes more than [`STATE_BUDGET`] states, and
/// [`Error::InvalidArg`] when the matrix does not fit the program or the
/// rules do not fit either.
pub fn enumerate_exact(
    p: &BranchingProgram,
    m: &LearningMatrix,
    rules: Option<&ThresholdSet>,
) -> Result<PathDistribution> {
    if p.sample_bits() != m.sample_bits() as usize {
        return Err(Error::invalid(
            "program and matrix disagree on the sample alphabet",
        ));
    }
    let n_x = m.num_concepts();
    let n_a = m.num_samples();
    let t_len = p.length();
    let q = p.passes();
    let configs = (n_a as u128).pow(t_len as u32).saturating_mul(n_x as u128);
    if configs > ENUM_BUDGET as u128 {
        return Err(Error::Budget {
            what: "exhaustive path enumeration".into(),
            needed: configs,
            cap: ENUM_BUDGET as u128,
            hint: "use the product-form engine or shrink the instance".into(),
        });
    }
    let counter_cap = match rules {
        Some(th) => validate_rules(p, m, th)?,
        None => 0,
    };

    let num_layers = q * t_len + 1;
    let start = RefinedState {
        entry: 0,
        vertex: p.start(),
        cnt_high: 0,
        cnt_bias: 0,
    };
    let mut states: Vec<Vec<RefinedState>> = vec![vec![start]];
    let mut locals: Vec<Vec<Vec<BigRational>>> = Vec::with_capacity(num_layers);
    let mut globals: Vec<Vec<Vec<BigRational>>> = Vec::with_capacity(num_layers);
    let mut next_joints: Vec<Vec<Vec<BigRational>>> = Vec::with_capacity(num_layers);
    let mut class: Vec<EdgeClassification> = Vec::new();
    let per_x = exact::int(1) / exact::int(n_x as i64);
    locals.push(vec![vec![per_x.clone(); n_x]]);

    let config_unit = exact::int(1)
        / (exact::int(n_x as i64) * exact::int((n_a as i64).pow(t_len as u32)));

    for g in 0..num_layers {
        if g > 0 {
            let pass = (g - 1) / t_len + 1;
            let pos = (g - 1) % t_len + 1;
            let boundary = (pass - 1) * t_len;

            let mut counts: BTreeMap<RefinedState, Vec<u64>> = BTreeMap::new();
            for e in 0..states[boundary].len() {
                for x in 0..n_x {
                    for_each_tuple(pos, n_a, |prefix| {
                        let mut cur = e;
                        for (t, &a) in prefix.iter().enumerate() {
                            match walk_step(
                                p, m, rules, counter_cap, &states, &class,
                                boundary + t, cur, a, x,
                            ) {
                                StepResult::Stop(_) => return,
                                StepResult::Advance(s) => {
                                    if t + 1 < pos {
                                        cur = states[boundary + t + 1]
                                            .binary_search(&s)
                                            .expect("interior states are already materialized");
                                    } else {
                                        counts.entry(s).or_insert_with(|| vec![0; n_x])[x] += 1;
                                    }
                                }
                            }
                        }
                    });
                }
            }
            if counts.len() > STATE_BUDGET {
                return Err(Error::Budget {
                    what: "refined states in one layer".into(),
                    needed: counts.len() as u128,
                    cap: STATE_BUDGET as u128,
                    hint: "shrink the instance".into(),
                });
            }
            let layer_states: Vec<RefinedState> = counts.keys().copied().collect();
            let denom = exact::int(n_x as i64) * exact::int((n_a as i64).pow(pos as u32));
            let local: Vec<Vec<BigRational>> = layer_states
                .iter()
                .map(|s| {
                    counts[s]
                        .iter()
                        .map(|&c| exact::int(c as i64) / denom.clone())
                        .collect()
                })
                .collect();
            states.push(layer_states);
            locals.push(local);
        }

        let width = states[g].len();
        let mut glob_counts = vec![vec![0u64; n_x]; width];
        let mut nj_counts = vec![vec![0u64; n_a]; width];
        for x in 0..n_x {
            for_each_tuple(t_len, n_a, |stream| {
                let mut cur = 0usize;
                for t in 0..g {
                    match walk_step(
                        p, m, rules, counter_cap, &states, &class,
                        t, cur, stream[t % t_len], x,
                    ) {
                        StepResult::Stop(_) => return,
                        StepResult::Advance(s) => {
                            cur = states[t + 1]
                                .binary_search(&s)
                                .expect("global support is contained in local support");
                        }
                    }
                }
                glob_counts[cur][x] += 1;
                if g < num_layers - 1 {
                    nj_counts[cur][stream[g % t_len]] += 1;
                }
            });
        }
        globals.push(
            glob_counts
                .iter()
                .map(|row| row.iter().map(|&c| exact::int(c as i64) * &config_unit).collect())
                .collect(),
        );
        if g < num_layers - 1 {
            next_joints.push(
                nj_counts
                    .iter()
                    .map(|row| row.iter().map(|&c| exact::int(c as i64) * &config_unit).collect())
                    .collect(),
            );
        }

        if let Some(th) = rules {
            if g < num_layers - 1 {
                let pass = g / t_len + 1;
                let pos = g % t_len;
                let fresh;
                let local_view: &[Vec<BigRational>] = if pos == 0 {
                    fresh = states[g]
                        .iter()
                        .map(|_| vec![per_x.clone(); n_x])
                        .collect::<Vec<_>>();
                    &fresh
                } else {
                    &locals[g]
                };
                class.push(classify_position(
                    m,
                    th,
                    g,
                    pass,
                    &states[g],
                    &LayerView {
                        local: local_view,
                        global: &globals[g],
                        next_joint: &next_joints[g],
                    },
                    counter_cap,
                ));
            }
        }
    }

    let mut ledger: Vec<BTreeMap<StopRule, BigRational>> =
        vec![BTreeMap::new(); num_layers - 1];
    let mut local_ledger: Vec<BTreeMap<(u32, StopRule), BigRational>> =
        vec![BTreeMap::new(); num_layers - 1];
    if rules.is_some() {
        for x in 0..n_x {
            for_each_tuple(t_len, n_a, |stream| {
                let mut cur = 0usize;
                for t in 0..num_layers - 1 {
                    match walk_step(
                        p, m, rules, counter_cap, &states, &class,
                        t, cur, stream[t % t_len], x,
                    ) {
                        StepResult::Stop(rule) => {
                            *ledger[t].entry(rule).or_insert_with(|| exact::int(0)) +=
                                &config_unit;
                            return;
                        }
                        StepResult::Advance(s) => {
                            cur = states[t + 1].binary_search(&s).expect("state materialized");
                        }
                    }
                }
            });
        }
        for pass in 1..=q {
            let boundary = (pass - 1) * t_len;
            for e in 0..states[boundary].len() {
                for x in 0..n_x {
                    for_each_tuple(t_len, n_a, |stream| {
                        let mut cur = e;
                        for (t, &a) in stream.iter().enumerate() {
                            match walk_step(
                                p, m, rules, counter_cap, &states, &class,
                                boundary + t, cur, a, x,
                            ) {
                                StepResult::Stop(rule) => {
                                    *local_ledger[boundary + t]
                                        .entry((e as u32, rule))
                                        .or_insert_with(|| exact::int(0)) += &config_unit;
                                    return;
                                }
                                StepResult::Advance(s) => {
                                    cur = states[boundary + t + 1]
                                        .binary_search(&s)
                                        .expect("state materialized");
                                }
                            }
                        }
                    });
                }
            }
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
        engine: "enumerate",
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num::{One, Zero};

    #[test]
    fn trivial_program_keeps_the_posterior_uniform() {
        let m = LearningMatrix::parity(2);
        let p = BranchingProgram::trivial(1, 2, 2, 0);
        let d = enumerate_exact(&p, &m, None).unwrap();
        let last = d.layers.last().unwrap();
        assert_eq!(last.states.len(), 1);
        let post = last.posterior(0).unwrap();
        let quarter = exact::int(1) / exact::int(4);
        assert!(post.iter().all(|v| *v == quarter), "posterior must stay uniform");
        let l2_sq: BigRational = post.iter().map(|v| v * v).sum::<BigRational>()
            / exact::int(4);
        assert_eq!(
            l2_sq,
            exact::int(1) / exact::int(16),
            "expectation-norm squared of the uniform posterior is 2^-2n"
        );
    }

    #[test]
    fn recording_one_label_halves_the_support() {
        let m = LearningMatrix::parity(2);
        let n_a = m.num_samples();
        let mut succ = Vec::new();
        succ.push(vec![{
            let mut row = vec![0u32; 2 * n_a];
            for a in 0..n_a {
                row[2 * a] = 0;
                row[2 * a + 1] = if a == 3 { 1 } else { 0 };
            }
            row
        }]);
        let p = BranchingProgram::new(1, 1, 2, succ, vec![0, 0], 0).unwrap();
        let d = enumerate_exact(&p, &m, None).unwrap();
        let last = &d.layers[1];
        let split = last
            .states
            .iter()
            .position(|s| s.vertex == 1)
            .expect("the informative branch is reachable");
        let post = last.posterior(split).unwrap();
        let half = exact::int(1) / exact::int(2);
        let nonzero: Vec<&BigRational> = post.iter().filter(|v| !v.is_zero()).collect();
        assert_eq!(nonzero.len(), 2, "row 3 splits the four concepts in half");
        assert!(nonzero.iter().all(|v| **v == half));
        let l2_sq: BigRational =
            post.iter().map(|v| v * v).sum::<BigRational>() / exact::int(4);
        assert_eq!(
            l2_sq,
            exact::int(2) / exact::int(16),
            "the halved support doubles the squared expectation norm"
        );
    }

    #[test]
    fn rules_off_distribution_conserves_mass_everywhere() {
        let m = LearningMatrix::parity(2);
        let p = BranchingProgram::random(2, 2, 2, 2, 3, 7);
        let d = enumerate_exact(&p, &m, None).unwrap();
        d.check_conservation().unwrap();
        for g in 0..d.layers.len() {
            assert!(d.alive_mass(g).is_one(), "no rules means no stopped mass");
        }
    }

    #[test]
    fn budget_is_enforced_before_walking() {
        let m = LearningMatrix::parity(8);
        let p = BranchingProgram::trivial(1, 9, 8, 0);
        match enumerate_exact(&p, &m, None) {
            Err(Error::Budget { .. }) => {}
            other => panic!("expected a budget refusal, got {other:?}"),
        }
    }
}
