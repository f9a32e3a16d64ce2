//! End-to-end tests of the `paritylab` binary: records, verdicts, and
//! exit codes, driven through the compiled executable.

use std::path::Path;
use std::process::{Command, Output};

use paritylab_core::branching_program::{modify_remember_pass, BranchingProgram};
use paritylab_core::experiment::ExperimentRecord;
use serde_json::Value;

fn run(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_paritylab"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("the binary should spawn")
}

fn record_from(output: &Output) -> ExperimentRecord {
    let stdout = String::from_utf8_lossy(&output.stdout);
    let line = stdout.lines().next().unwrap_or_else(|| {
        panic!("no record line; stderr: {}", String::from_utf8_lossy(&output.stderr))
    });
    ExperimentRecord::from_line(line).expect("stdout should carry one record line")
}

fn record_from_file(path: &Path) -> ExperimentRecord {
    let text = std::fs::read_to_string(path).expect("record file should exist");
    ExperimentRecord::from_line(text.trim_end()).expect("file should carry one record line")
}

fn write_program(dir: &Path, name: &str, p: &BranchingProgram) -> String {
    let path = dir.join(name);
    std::fs::write(&path, p.to_bp_string()).unwrap();
    path.display().to_string()
}

#[test]
fn success_prob_on_the_constant_program_is_exactly_one_eighth() {
    let dir = tempfile::tempdir().unwrap();
    let program = write_program(dir.path(), "const.bp", &BranchingProgram::trivial(1, 1, 3, 0));
    let out = run(
        &["success-prob", "--program", &program, "--matrix", "parity(3)"],
        &[],
    );
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let record = record_from(&out);
    assert_eq!(record.command, "success-prob");
    assert_eq!(record.aggregate.pointer("/success/exact"), Some(&Value::from("1/8")));
    assert_eq!(record.aggregate.pointer("/stop_probability/exact"), Some(&Value::from("0")));
}

#[test]
fn certify_extractor_certifies_parity_and_refutes_overclaims() {
    let out = run(
        &[
            "certify-extractor", "--matrix", "parity(3)", "--k", "1", "--l", "0.5",
            "--r", "0.5", "--mode", "exhaustive",
        ],
        &[],
    );
    assert!(out.status.success());
    let record = record_from(&out);
    assert_eq!(record.aggregate.pointer("/verdict"), Some(&Value::from("certified")));

    // A singleton indicator correlates fully with every parity row, so
    // claiming any bad-row fraction below 1 at l >= n/2, r = 0 is false.
    let out = run(
        &[
            "certify-extractor", "--matrix", "parity(3)", "--k", "1", "--l", "1.5",
            "--r", "0", "--mode", "exhaustive",
        ],
        &[],
    );
    assert!(out.status.success(), "a refuted verdict is still a successful run");
    let record = record_from(&out);
    assert_eq!(record.aggregate.pointer("/verdict"), Some(&Value::from("refuted")));
    let witness_values: Vec<u64> = record.outcomes[0]
        .pointer("/witness/values")
        .and_then(Value::as_array)
        .expect("refutations carry a witness")
        .iter()
        .map(|v| v.as_u64().unwrap())
        .collect();
    assert_eq!(witness_values.iter().sum::<u64>(), 1, "smallest witness is a singleton");
    assert_eq!(
        record.outcomes[0].pointer("/witness/bad_rows").unwrap().as_array().unwrap().len(),
        8,
        "every row is bad against a singleton at r = 0"
    );
}

#[test]
fn parseval_and_montecarlo_modes_produce_verdicts() {
    let out = run(
        &[
            "certify-extractor", "--matrix", "parity(4)", "--k", "2", "--l", "0.5",
            "--r", "0.5", "--mode", "parseval",
        ],
        &[],
    );
    assert!(out.status.success());
    let record = record_from(&out);
    assert_eq!(record.aggregate.pointer("/verdict"), Some(&Value::from("certified")));

    let out = run(
        &[
            "certify-extractor", "--matrix", "parity(3)", "--k", "0.1", "--l", "1.5",
            "--r", "0", "--mode", "montecarlo", "--trials", "16", "--seed", "9",
        ],
        &[],
    );
    assert!(out.status.success());
    let record = record_from(&out);
    assert_eq!(record.aggregate.pointer("/verdict"), Some(&Value::from("refuted")));
    assert!(record.outcomes[0].pointer("/witness").unwrap().is_object());
}

#[test]
fn verify_lemmas_holds_on_fifty_seeded_instances() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("lemmas.json");
    let out = run(
        &[
            "verify-lemmas", "--instances", "50", "--seed", "7", "--out",
            out_path.to_str().unwrap(),
        ],
        &[],
    );
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let record = record_from_file(&out_path);
    assert_eq!(record.aggregate.pointer("/all_hold"), Some(&Value::Bool(true)));
    assert_eq!(record.outcomes.len(), 50);
    for lemma in ["edge_potential", "potential_growth", "counter_overflow", "flatness"] {
        let tally = record.aggregate.pointer(&format!("/lemmas/{lemma}")).unwrap();
        assert_eq!(tally["violated"], Value::from(0u64), "{lemma} must never be violated");
        assert_eq!(tally["held"], Value::from(50u64));
        assert!(tally["checks"].as_u64().unwrap() > 0, "{lemma} must check something");
    }
}

#[test]
fn verify_lemmas_surfaces_violations_with_the_invariant_exit_code() {
    // r_ext = 1 admits edges of bias up to one half while r_len = 3
    // claims per-step growth (1 + 2^-4); the growth bound genuinely
    // fails on such schedules, and the record must still be written.
    let dir = tempfile::tempdir().unwrap();
    let th_path = dir.path().join("loose.json");
    std::fs::write(
        &th_path,
        r#"{"l":1,"r_len":3,"r_ext":1,"k_ext":2,"l_sigs":[1,2],
            "l_sigv":8,"l_high":1,"l_bias":[0,1],"l_flat":3}"#,
    )
    .unwrap();
    let out_path = dir.path().join("lemmas.json");
    let out = run(
        &[
            "verify-lemmas", "--instances", "30", "--seed", "0", "--thresholds",
            th_path.to_str().unwrap(), "--out", out_path.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(out.status.code(), Some(3), "violations exit with the invariant code");
    let record = record_from_file(&out_path);
    assert_eq!(record.aggregate.pointer("/all_hold"), Some(&Value::Bool(false)));
    let growth = record.aggregate.pointer("/lemmas/potential_growth").unwrap();
    assert!(growth["violated"].as_u64().unwrap() >= 1);
    let worst = growth.pointer("/worst_margin/exact").unwrap().as_str().unwrap();
    assert!(worst.starts_with('-'), "the worst margin should be negative, got {worst}");
}

#[test]
fn simulate_runs_both_engines_to_agreement() {
    let dir = tempfile::tempdir().unwrap();
    let p = BranchingProgram::random(2, 2, 2, 2, 3, 11);
    let p = modify_remember_pass(&p, 2).unwrap();
    let program = write_program(dir.path(), "two_pass.bp", &p);
    let out = run(
        &[
            "simulate", "--program", &program, "--matrix", "parity(2)", "--engine",
            "both", "--thresholds", "two_pass_table1(1,1,2,2)",
        ],
        &[],
    );
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let record = record_from(&out);
    assert_eq!(record.aggregate.pointer("/engines_agree"), Some(&Value::Bool(true)));
    assert_eq!(record.outcomes.len(), 5, "a 2x2 program has five layers");
    assert_eq!(record.outcomes[0].pointer("/alive/exact"), Some(&Value::from("1")));
}

#[test]
fn learn_multipass_record_meets_the_resource_envelope() {
    let out = run(
        &["learn-multipass", "--n", "8", "--q", "1024", "--trials", "300", "--seed", "1"],
        &[],
    );
    assert!(out.status.success());
    let record = record_from(&out);
    assert_eq!(record.outcomes.len(), 300);
    let rate = record.aggregate.pointer("/success_rate/decimal").unwrap().as_f64().unwrap();
    assert!(rate >= 0.55, "measured success {rate} too low");
    assert_eq!(record.aggregate.pointer("/config/k_blocks"), Some(&Value::from(2u64)));
    let max_passes = record.aggregate.pointer("/meters/passes/max").unwrap().as_u64().unwrap();
    let max_peak = record.aggregate.pointer("/meters/peak_bits/max").unwrap().as_u64().unwrap();
    assert!(max_passes <= 1024, "pass budget violated: {max_passes}");
    assert!(max_peak <= 256, "memory budget violated: {max_peak}");
}

#[test]
fn baselines_track_the_known_rates() {
    let out = run(
        &["baselines", "--n", "4", "--samples", "4", "--trials", "4000", "--seed", "5"],
        &[],
    );
    assert!(out.status.success());
    let record = record_from(&out);
    let ge = record.aggregate.pointer("/onepass_ge/success_rate/decimal").unwrap().as_f64().unwrap();
    assert!((ge - 0.3076).abs() < 0.05, "one-pass elimination rate {ge} off the product formula");
    assert_eq!(record.aggregate.pointer("/onepass_ge/memory_bits"), Some(&Value::from(20u64)));
    assert_eq!(record.aggregate.pointer("/bruteforce/memory_bits"), Some(&Value::from(4u64)));
}

#[test]
fn records_reproduce_across_runs_and_worker_counts() {
    let args =
        ["learn-multipass", "--n", "8", "--q", "1024", "--trials", "60", "--seed", "3"];
    let serial = record_from(&run(&args, &[("PARITYLAB_WORKERS", "1")]));
    let parallel = record_from(&run(&args, &[("PARITYLAB_WORKERS", "4")]));
    let repeat = record_from(&run(&args, &[]));
    assert!(serial.same_run(&parallel), "worker count must not change the record");
    assert!(serial.same_run(&repeat), "same seed and version must reproduce the record");
    assert_eq!(serial.prng, "chacha12");
    assert_eq!(serial.schema, "paritylab/v1");
}

#[test]
fn exit_codes_follow_the_documented_contract() {
    let budget = run(
        &[
            "certify-extractor", "--matrix", "parity(8)", "--k", "1", "--l", "1",
            "--r", "1", "--mode", "exhaustive",
        ],
        &[],
    );
    assert_eq!(budget.status.code(), Some(4), "budget refusals exit 4");

    let io = run(
        &["success-prob", "--program", "/no/such/file.bp", "--matrix", "parity(3)"],
        &[],
    );
    assert_eq!(io.status.code(), Some(2), "missing files exit 2");

    let usage = run(&["frobnicate"], &[]);
    assert_eq!(usage.status.code(), Some(2), "unknown subcommands exit 2");

    let workers = run(
        &["baselines", "--n", "3", "--samples", "3", "--trials", "10"],
        &[("PARITYLAB_WORKERS", "zero")],
    );
    assert_eq!(workers.status.code(), Some(2), "malformed worker counts exit 2");
}
