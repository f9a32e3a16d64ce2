//! Subcommand implementations, each producing one experiment record.
//!
//! Handlers separate hard failures (bad input, exceeded budgets) from
//! verdict failures: a lemma violation still writes its record, then
//! surfaces through [`RunOutput::failure`] so the process exits with
//! the invariant code after persisting the evidence.

use serde_json::{json, Map, Value};

use paritylab_core::branching_program::{
    modify_remember_pass, success_probability_mc, BranchingProgram, ImplicitLearner,
};
use paritylab_core::error::{Error, Result};
use paritylab_core::experiment::{decimal_value, exact_value, ExperimentRecord};
use paritylab_core::extractor_cert::{
    certify_exhaustive, certify_parseval, refute_montecarlo, ExtractorParams,
};
use paritylab_core::learning_matrix::LearningMatrix;
use paritylab_core::multipass_learner::{
    bruteforce_rate, multipass_trials, onepass_ge_rate, BruteForce, OnepassGe,
};
use paritylab_core::posterior_engine::{
    dp_exact, enumerate_exact, success_probability_exact, verify_edge_potential_all,
    verify_flatness_all, verify_overflow_bound_all, verify_potential_growth_all, ThresholdSet,
    VerifierReport,
};

use crate::inputs::{load_matrix, load_program, load_thresholds};
use crate::{
    BaselinesArgs, CertMode, CertifyArgs, EngineChoice, LearnMultipassArgs, ProbMode,
    SimulateArgs, SuccessProbArgs, VerifyLemmasArgs, TOOL,
};

/// A produced record plus the verdict failure to exit with, if any.
pub struct RunOutput {
    pub record: ExperimentRecord,
    pub failure: Option<Error>,
}

impl RunOutput {
    fn ok(record: ExperimentRecord) -> Self {
        RunOutput { record, failure: None }
    }
}

pub fn certify_extractor(a: &CertifyArgs) -> Result<RunOutput> {
    let m = load_matrix(&a.matrix)?;
    let params = ExtractorParams::new(a.k, a.l, a.r)?;
    let mode = match a.mode {
        CertMode::Exhaustive => "exhaustive",
        CertMode::Parseval => "parseval",
        CertMode::Montecarlo => "montecarlo",
    };
    let cert = match a.mode {
        CertMode::Exhaustive => certify_exhaustive(&m, params, None)?,
        CertMode::Parseval => certify_parseval(&m, params)?,
        CertMode::Montecarlo => refute_montecarlo(&m, params, a.trials, a.seed)?,
    };

    let config = json!({
        "matrix": a.matrix, "k": a.k, "l": a.l, "r": a.r,
        "mode": mode, "trials": a.trials, "seed": a.seed,
    });
    let mut record = ExperimentRecord::new(TOOL, "certify-extractor", config, a.seed);
    record.aggregate = json!({
        "verdict": to_value(&cert.verdict),
        "family": cert.family,
        "candidates": cert.trials,
        "witness_rows": cert.witness.as_ref().map(|w| w.bad_rows.len()),
    });
    record.outcomes.push(to_value(&cert));
    Ok(RunOutput::ok(record))
}

pub fn simulate(a: &SimulateArgs) -> Result<RunOutput> {
    let p = load_program(&a.program)?;
    let m = load_matrix(&a.matrix)?;
    let th = a.thresholds.as_deref().map(load_thresholds).transpose()?;
    let rules = th.as_ref();

    let (d, second) = match a.engine {
        EngineChoice::Auto => {
            let d = dp_exact(&p, &m, rules).or_else(|_| enumerate_exact(&p, &m, rules))?;
            (d, None)
        }
        EngineChoice::Dp => (dp_exact(&p, &m, rules)?, None),
        EngineChoice::Enumerate => (enumerate_exact(&p, &m, rules)?, None),
        EngineChoice::Both => {
            (dp_exact(&p, &m, rules)?, Some(enumerate_exact(&p, &m, rules)?))
        }
    };
    d.check_conservation()?;
    if let Some(d2) = &second {
        d2.check_conservation()?;
    }
    let agree = second.as_ref().map(|d2| d.agrees_with(d2));

    let engine_choice = match a.engine {
        EngineChoice::Auto => "auto",
        EngineChoice::Dp => "dp",
        EngineChoice::Enumerate => "enumerate",
        EngineChoice::Both => "both",
    };
    let config = json!({
        "program": a.program.display().to_string(),
        "matrix": a.matrix,
        "thresholds": a.thresholds,
        "engine": engine_choice,
    });
    let mut record = ExperimentRecord::new(TOOL, "simulate", config, 0);
    for g in 0..d.layers.len() {
        let stops: Map<String, Value> = d
            .ledger
            .get(g)
            .map(|per_rule| {
                per_rule.iter().map(|(rule, mass)| (rule.to_string(), exact_value(mass))).collect()
            })
            .unwrap_or_default();
        record.outcomes.push(json!({
            "layer": g,
            "states": d.layers[g].states.len(),
            "alive": exact_value(&d.alive_mass(g)),
            "stopped_before": exact_value(&d.stopped_before(g)),
            "stops": stops,
        }));
    }
    let last = d.layers.len() - 1;
    record.aggregate = json!({
        "engine": d.engine,
        "layers": d.layers.len(),
        "final_alive": exact_value(&d.alive_mass(last)),
        "final_stopped": exact_value(&d.stopped_before(last)),
        "engines_agree": agree,
    });

    let failure = (agree == Some(false))
        .then(|| Error::invariant("the two exact engines disagree on this instance"));
    Ok(RunOutput { record, failure })
}

pub fn success_prob(a: &SuccessProbArgs) -> Result<RunOutput> {
    let p = load_program(&a.program)?;
    let m = load_matrix(&a.matrix)?;
    let th = a.thresholds.as_deref().map(load_thresholds).transpose()?;

    let config = json!({
        "program": a.program.display().to_string(),
        "matrix": a.matrix,
        "thresholds": a.thresholds,
        "mode": match a.mode { ProbMode::Exact => "exact", ProbMode::Montecarlo => "montecarlo" },
        "trials": a.trials,
        "seed": a.seed,
    });
    let mut record = ExperimentRecord::new(TOOL, "success-prob", config, a.seed);
    record.aggregate = match a.mode {
        ProbMode::Exact => {
            let rep = success_probability_exact(&p, &m, th.as_ref())?;
            json!({
                "success": exact_value(&rep.success),
                "surviving_mass": exact_value(&rep.surviving_mass),
                "stop_probability": exact_value(&rep.stop_probability),
                "engine": rep.engine,
            })
        }
        ProbMode::Montecarlo => {
            if th.is_some() {
                return Err(Error::invalid(
                    "the montecarlo mode runs the untruncated program; drop --thresholds",
                ));
            }
            let est = success_probability_mc(&p, &m, p.length(), a.trials, a.seed);
            json!({
                "success": decimal_value(est.mean),
                "ci95": decimal_value(est.ci95),
                "trials": est.trials,
            })
        }
    };
    Ok(RunOutput::ok(record))
}

/// The lemmas checked per instance, in report order.
const LEMMAS: [&str; 4] =
    ["edge_potential", "potential_growth", "counter_overflow", "flatness"];

struct LemmaTally {
    held: u64,
    violated: u64,
    checks: u64,
    worst: Option<VerifierReport>,
}

pub fn verify_lemmas(a: &VerifyLemmasArgs) -> Result<RunOutput> {
    let th = match &a.thresholds {
        Some(arg) => load_thresholds(arg)?,
        None => ThresholdSet::custom(1, 1, 2, 2, vec![1, 2], 8, 1, vec![0, 1], Some(3))
            .expect("the default schedule is well formed"),
    };

    let instances: Vec<(Value, BranchingProgram, LearningMatrix)> = match &a.program {
        Some(path) => {
            let p = load_program(path)?;
            let m = match &a.matrix {
                Some(arg) => load_matrix(arg)?,
                None => LearningMatrix::parity(p.sample_bits() as u32),
            };
            vec![(json!(path.display().to_string()), p, m)]
        }
        None => {
            if a.instances == 0 {
                return Err(Error::invalid("need at least one instance"));
            }
            let m = match &a.matrix {
                Some(arg) => load_matrix(arg)?,
                None => LearningMatrix::parity(2),
            };
            (0..a.instances)
                .map(|i| {
                    let s = a.seed.wrapping_add(i);
                    let p = BranchingProgram::random(2, 2, m.sample_bits() as usize, 2, 3, s);
                    let p = modify_remember_pass(&p, 2)?;
                    Ok((json!(s), p, m.clone()))
                })
                .collect::<Result<_>>()?
        }
    };

    let mut tallies: Vec<LemmaTally> = LEMMAS
        .iter()
        .map(|_| LemmaTally { held: 0, violated: 0, checks: 0, worst: None })
        .collect();
    let config = json!({
        "program": a.program.as_ref().map(|p| p.display().to_string()),
        "matrix": a.matrix,
        "thresholds": a.thresholds,
        "seed": a.seed,
        "instances": instances.len(),
    });
    let mut record = ExperimentRecord::new(TOOL, "verify-lemmas", config, a.seed);

    for (idx, (label, p, m)) in instances.iter().enumerate() {
        if th.passes() != p.passes() {
            return Err(Error::invalid(format!(
                "the schedule covers {} passes but the program has {}",
                th.passes(),
                p.passes()
            )));
        }
        let d = dp_exact(p, m, Some(&th)).or_else(|_| enumerate_exact(p, m, Some(&th)))?;
        let mut reports = vec![
            verify_edge_potential_all(p, m, &d)?,
            verify_potential_growth_all(p, m, &d)?,
            verify_overflow_bound_all(p, m, &d)?,
        ];
        if th.l_flat.is_some() {
            reports.push(verify_flatness_all(p, m, &d, None)?);
        }

        let mut lemmas = Map::new();
        for (tally, (name, report)) in
            tallies.iter_mut().zip(LEMMAS.iter().zip(&reports))
        {
            lemmas.insert(
                name.to_string(),
                json!({
                    "holds": report.holds,
                    "checks": report.checks,
                    "margin": exact_value(&report.margin),
                    "detail": report.detail,
                }),
            );
            if report.holds {
                tally.held += 1;
            } else {
                tally.violated += 1;
            }
            tally.checks += report.checks as u64;
            let tighter = report.checks > 0
                && tally.worst.as_ref().map_or(true, |w| report.margin < w.margin);
            if tighter {
                tally.worst = Some(report.clone());
            }
        }
        record.outcomes.push(json!({
            "instance": idx,
            "source": label,
            "lemmas": lemmas,
        }));
    }

    let all_hold = tallies.iter().all(|t| t.violated == 0);
    let mut per_lemma = Map::new();
    for (name, tally) in LEMMAS.iter().zip(&tallies) {
        per_lemma.insert(
            name.to_string(),
            json!({
                "held": tally.held,
                "violated": tally.violated,
                "checks": tally.checks,
                "worst_margin": tally.worst.as_ref().map(|w| exact_value(&w.margin)),
                "worst_detail": tally.worst.as_ref().map(|w| w.detail.clone()),
            }),
        );
    }
    record.aggregate = json!({
        "instances": instances.len(),
        "all_hold": all_hold,
        "lemmas": per_lemma,
    });

    let failure = (!all_hold).then(|| {
        let violated: u64 = tallies.iter().map(|t| t.violated).sum();
        Error::invariant(format!(
            "{violated} lemma reports violated; reproduce with --seed {}",
            a.seed
        ))
    });
    Ok(RunOutput { record, failure })
}

pub fn learn_multipass(a: &LearnMultipassArgs) -> Result<RunOutput> {
    let stats = multipass_trials(a.n, a.q, a.trials, a.seed)?;
    let est = stats.estimate();

    let config = json!({ "n": a.n, "q": a.q, "trials": a.trials, "seed": a.seed });
    let mut record = ExperimentRecord::new(TOOL, "learn-multipass", config, a.seed);
    for ((&success, meter), &attempts) in
        stats.succeeded.iter().zip(&stats.meters).zip(&stats.attempts_used)
    {
        record.outcomes.push(json!({
            "success": success,
            "passes": meter.passes_used,
            "samples": meter.samples_touched,
            "peak_bits": meter.peak_live_bits,
            "attempts": attempts,
        }));
    }
    let passes: Vec<u64> = stats.meters.iter().map(|m| m.passes_used).collect();
    let samples: Vec<u64> = stats.meters.iter().map(|m| m.samples_touched).collect();
    let peaks: Vec<u64> = stats.meters.iter().map(|m| m.peak_live_bits).collect();
    record.aggregate = json!({
        "success_rate": decimal_value(est.mean),
        "ci95": decimal_value(est.ci95),
        "trials": est.trials,
        "config": to_value(&stats.config),
        "meters": {
            "passes": percentile_summary(passes),
            "samples": percentile_summary(samples),
            "peak_bits": percentile_summary(peaks),
        },
    });
    Ok(RunOutput::ok(record))
}

pub fn baselines(a: &BaselinesArgs) -> Result<RunOutput> {
    let ge = onepass_ge_rate(a.n, a.samples, a.trials, a.seed)?;
    let bf = bruteforce_rate(a.n, a.samples, a.trials, a.seed)?;

    let config =
        json!({ "n": a.n, "samples": a.samples, "trials": a.trials, "seed": a.seed });
    let mut record = ExperimentRecord::new(TOOL, "baselines", config, a.seed);
    let rows = [
        ("onepass_ge", ge, OnepassGe { n: a.n }.memory_bits()),
        ("bruteforce", bf, BruteForce { n: a.n }.memory_bits()),
    ];
    let mut aggregate = Map::new();
    for (name, est, memory_bits) in rows {
        record.outcomes.push(json!({
            "algorithm": name,
            "success_rate": decimal_value(est.mean),
            "ci95": decimal_value(est.ci95),
            "memory_bits": memory_bits,
        }));
        aggregate.insert(
            name.to_string(),
            json!({
                "success_rate": decimal_value(est.mean),
                "ci95": decimal_value(est.ci95),
                "memory_bits": memory_bits,
            }),
        );
    }
    record.aggregate = Value::Object(aggregate);
    Ok(RunOutput::ok(record))
}

/// One human-readable line describing a finished record.
pub fn summary(record: &ExperimentRecord) -> String {
    let agg = &record.aggregate;
    let text = |path: &str| agg.pointer(path).and_then(Value::as_str).unwrap_or("?").to_string();
    let num = |path: &str| agg.pointer(path).and_then(Value::as_f64).unwrap_or(f64::NAN);
    match record.command.as_str() {
        "certify-extractor" => format!(
            "certify-extractor: {} ({} family, {} candidates)",
            text("/verdict"),
            text("/family"),
            agg.pointer("/candidates").and_then(Value::as_u64).unwrap_or(0),
        ),
        "simulate" => format!(
            "simulate: {} engine, {} layers, final alive {}",
            text("/engine"),
            agg.pointer("/layers").and_then(Value::as_u64).unwrap_or(0),
            text("/final_alive/exact"),
        ),
        "success-prob" => match agg.pointer("/success/exact") {
            Some(v) => format!("success-prob: exactly {}", v.as_str().unwrap_or("?")),
            None => format!("success-prob: {:.4} +- {:.4}", num("/success/decimal"), num("/ci95/decimal")),
        },
        "verify-lemmas" => format!(
            "verify-lemmas: {} over {} instances",
            if agg.pointer("/all_hold") == Some(&Value::Bool(true)) {
                "every report holds"
            } else {
                "violations found"
            },
            agg.pointer("/instances").and_then(Value::as_u64).unwrap_or(0),
        ),
        "learn-multipass" => format!(
            "learn-multipass: success {:.3} +- {:.3} over {} trials",
            num("/success_rate/decimal"),
            num("/ci95/decimal"),
            agg.pointer("/trials").and_then(Value::as_u64).unwrap_or(0),
        ),
        "baselines" => format!(
            "baselines: onepass-ge {:.3}, bruteforce {:.3}",
            num("/onepass_ge/success_rate/decimal"),
            num("/bruteforce/success_rate/decimal"),
        ),
        other => format!("{other}: done"),
    }
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("record fields contain no non-serializable values")
}

/// Nearest-rank percentiles plus the maximum, for meter aggregates.
fn percentile_summary(mut values: Vec<u64>) -> Value {
    values.sort_unstable();
    let rank = |q: f64| {
        let idx = (q * values.len() as f64).ceil() as usize;
        values[idx.clamp(1, values.len()) - 1]
    };
    json!({ "p50": rank(0.50), "p90": rank(0.90), "max": values[values.len() - 1] })
}
