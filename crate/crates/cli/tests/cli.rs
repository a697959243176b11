//! End-to-end tests of the binary: exit codes, message shape, report
//! round trips, and the documented file formats.

use std::path::Path;
use std::process::{Command, Output};

use lrtest_core::{logrank_statistic, SurvivalRecord};

fn lrtest(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lrtest"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn stdout_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn exit_code(output: &Output) -> i32 {
    output.status.code().expect("no signal")
}

fn write_file(dir: &Path, name: &str, content: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, content).expect("temp files are writable");
    path.display().to_string()
}

fn example(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("examples")
        .join(name)
        .display()
        .to_string()
}

#[test]
fn two_record_dataset_gives_statistic_one() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_file(
        dir.path(),
        "two.csv",
        "id,time,event,group\na,1,1,1\nb,2,1,0\n",
    );
    let out = dir.path().join("report.json");
    let result = lrtest(&[
        "test",
        &csv,
        "--out",
        out.to_str().unwrap(),
        "--no-timestamp",
    ]);
    assert_eq!(exit_code(&result), 0, "stderr: {}", stderr_of(&result));
    assert!(stdout_of(&result).contains("LR = 1\n"));

    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(report["statistic"].as_f64().unwrap(), 1.0);
    assert_eq!(report["command"], "test");
    assert_eq!(report["tool"], "lrtest");
    assert!(report.get("timestamp_unix").is_none());
    assert_eq!(report["input"]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn report_statistic_round_trips_at_full_precision() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("id,time,event,group\n");
    let mut records = Vec::new();
    for i in 0..40u32 {
        let time = f64::from(i % 7) / 4.0 + 0.25;
        let event = i % 3 != 0;
        let group = u8::from(i % 2 == 0);
        csv.push_str(&format!("u{i},{time},{},{group}\n", u8::from(event)));
        records.push(SurvivalRecord::new(i, time, event, group).unwrap());
    }
    let path = write_file(dir.path(), "data.csv", &csv);
    let out = dir.path().join("report.json");
    let result = lrtest(&["test", &path, "--out", out.to_str().unwrap()]);
    assert_eq!(exit_code(&result), 0, "stderr: {}", stderr_of(&result));

    let expected = logrank_statistic(&records).unwrap();
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(
        report["statistic"].as_f64().unwrap(),
        expected.statistic.unwrap(),
        "JSON must reproduce the statistic bit for bit"
    );
    assert_eq!(report["score"].as_f64().unwrap(), expected.score);
    assert_eq!(report["variance"].as_f64().unwrap(), expected.variance);
    assert_eq!(
        report["p_value"].as_f64().unwrap(),
        expected.p_value.unwrap()
    );
}

#[test]
fn malformed_rows_name_their_line() {
    let dir = tempfile::tempdir().unwrap();
    for (content, needle) in [
        ("id,time,event,group\na,1,1,1\nb,-2,1,0\n", "line 3"),
        ("id,time,event,group\na,1,2,1\n", "line 2"),
        ("id,time,event\na,1,1\n", "line 1"),
        ("id,time,event,group\na,oops,1,0\n", "line 2"),
    ] {
        let csv = write_file(dir.path(), "bad.csv", content);
        let result = lrtest(&["test", &csv]);
        assert_eq!(exit_code(&result), 2, "input: {content:?}");
        assert!(
            stderr_of(&result).contains(needle),
            "stderr {:?} must name {needle}",
            stderr_of(&result)
        );
    }
}

#[test]
fn censored_only_dataset_has_no_statistic() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_file(
        dir.path(),
        "censored.csv",
        "id,time,event,group\na,1,0,1\nb,2,0,0\n",
    );
    let result = lrtest(&["test", &csv]);
    assert_eq!(exit_code(&result), 3);
    assert!(stderr_of(&result).contains("U = 0"));
}

#[test]
fn stratified_single_stratum_matches_plain() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_file(
        dir.path(),
        "one-stratum.csv",
        "id,time,event,group,stratum\na,1,1,1,3\nb,2,1,0,3\nc,3,0,1,3\n",
    );
    let plain_out = dir.path().join("plain.json");
    let strat_out = dir.path().join("strat.json");
    let plain = lrtest(&["test", &csv, "--out", plain_out.to_str().unwrap()]);
    let strat = lrtest(&[
        "test",
        &csv,
        "--stratified",
        "--out",
        strat_out.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&plain), 0);
    assert_eq!(exit_code(&strat), 0);
    let plain: serde_json::Value =
        serde_json::from_slice(&std::fs::read(&plain_out).unwrap()).unwrap();
    let strat: serde_json::Value =
        serde_json::from_slice(&std::fs::read(&strat_out).unwrap()).unwrap();
    assert_eq!(plain["statistic"], strat["statistic"]);
    assert_eq!(plain["score"], strat["score"]);
    assert_eq!(plain["variance"], strat["variance"]);
}

#[test]
fn bundled_oracle_spec_passes() {
    let result = lrtest(&["oracle", &example("n5.pop")]);
    assert_eq!(exit_code(&result), 0, "stderr: {}", stderr_of(&result));
    let stdout = stdout_of(&result);
    assert!(stdout.contains("conditional-hypergeometric"));
    assert!(stdout.contains("pass"));
    assert!(!stdout.contains("FAIL"));
}

#[test]
fn oversized_population_is_rejected_before_enumeration() {
    let dir = tempfile::tempdir().unwrap();
    let times: Vec<String> = (1..=20).map(|i| format!("{i}")).collect();
    let spec = write_file(
        dir.path(),
        "big.pop",
        &format!("times = {}\np1 = 0.5\n", times.join(" ")),
    );
    let result = lrtest(&["oracle", &spec]);
    assert_eq!(exit_code(&result), 2);
    assert!(stderr_of(&result).contains("exceeds the cap"));
}

#[test]
fn oracle_cap_can_be_raised_within_the_hard_ceiling() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_file(
        dir.path(),
        "nine.pop",
        "times = 1 1 2 2 3 3 4 4 5\np1 = 0.5\n",
    );
    let rejected = lrtest(&["oracle", &spec]);
    assert_eq!(exit_code(&rejected), 2);
    let accepted = lrtest(&["oracle", &spec, "--cap", "9", "--checks", "martingale"]);
    assert_eq!(exit_code(&accepted), 0, "stderr: {}", stderr_of(&accepted));
}

#[test]
fn heterogeneous_mechanisms_cannot_be_oracle_checked_jointly() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_file(
        dir.path(),
        "two-strata.pop",
        "times = 1 2 2 3\nstrata = 0 0 1 1\np1 = 0.5\n[stratum 1]\np1 = 0.3\n",
    );
    let oracle = lrtest(&["oracle", &spec]);
    assert_eq!(exit_code(&oracle), 2);
    assert!(stderr_of(&oracle).contains("common"));

    let moments = lrtest(&["moments", &spec]);
    assert_eq!(exit_code(&moments), 0, "stderr: {}", stderr_of(&moments));
    assert!(stdout_of(&moments).contains("stratum 1"));
}

#[test]
fn moments_reports_exact_one_eighth_for_the_bundled_two_unit_spec() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("moments.json");
    let result = lrtest(&[
        "moments",
        &example("var-eighth.pop"),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&result), 0, "stderr: {}", stderr_of(&result));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(report["exact_variance"].as_f64().unwrap(), 0.125);
    assert_eq!(report["approximate_variance"].as_f64().unwrap(), 0.125);
    assert_eq!(report["conditions"]["max_tied_events"].as_u64().unwrap(), 1);
    assert_eq!(
        report["conditions"]["observable_fraction"]
            .as_f64()
            .unwrap(),
        1.0
    );
}

#[test]
fn simulate_requires_a_seed_and_a_known_preset() {
    let missing_seed = lrtest(&["simulate", "table3-case1", "--n", "20", "--reps", "5"]);
    assert_eq!(exit_code(&missing_seed), 2);
    assert!(stderr_of(&missing_seed).contains("seed"));

    let unknown = lrtest(&["simulate", "table9-case1", "--seed", "1"]);
    assert_eq!(exit_code(&unknown), 2);
    assert!(stderr_of(&unknown).contains("unknown preset"));
}

#[test]
fn simulate_rejects_zero_replications() {
    let result = lrtest(&[
        "simulate",
        "table3-case1",
        "--seed",
        "1",
        "--n",
        "20",
        "--reps",
        "0",
    ]);
    assert_eq!(exit_code(&result), 2);
    assert!(stderr_of(&result).contains("replications must be positive"));
}

#[test]
fn scenario_files_start_from_a_case_and_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_file(
        dir.path(),
        "scenario.conf",
        "case = table3-case2\nmode = random\nn = 20\nreps = 8\nseed = 11\n",
    );
    let out = dir.path().join("sim.json");
    let result = lrtest(&[
        "simulate",
        &scenario,
        "--out",
        out.to_str().unwrap(),
        "--no-timestamp",
    ]);
    assert_eq!(exit_code(&result), 0, "stderr: {}", stderr_of(&result));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(report["scenario"]["label"], "table3-case2");
    assert_eq!(report["scenario"]["mode"], "FullyRandom");
    assert_eq!(report["scenario"]["n"], 20);
    assert_eq!(report["scenario"]["replications"], 8);
    assert_eq!(report["seed"], 11);
    assert_eq!(report["scenario"]["rho"], 0.5);
    assert!(report.get("fixed_event_stream").is_none());
    assert_eq!(report["input"]["path"], scenario);

    let bad = write_file(dir.path(), "bad.conf", "case = table3-case1\nrho = 0.9\n");
    let rejected = lrtest(&["simulate", &bad, "--seed", "1"]);
    assert_eq!(exit_code(&rejected), 2);
    assert!(stderr_of(&rejected).contains("line 2"));
}

#[test]
fn simulate_writes_samples_and_histogram_files() {
    let dir = tempfile::tempdir().unwrap();
    let samples = dir.path().join("samples.csv");
    let hist = dir.path().join("hist.csv");
    let result = lrtest(&[
        "simulate",
        "table4-case-i",
        "--seed",
        "3",
        "--n",
        "20",
        "--reps",
        "6",
        "--samples",
        samples.to_str().unwrap(),
        "--histogram",
        hist.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&result), 0, "stderr: {}", stderr_of(&result));

    let samples = std::fs::read_to_string(&samples).unwrap();
    let mut lines = samples.lines();
    assert_eq!(
        lines.next().unwrap(),
        "replication,score,variance,statistic,slr_score,slr_variance,slr_statistic"
    );
    assert_eq!(lines.count(), 6);

    let hist = std::fs::read_to_string(&hist).unwrap();
    assert!(hist.starts_with("bin_left,bin_right,count\n"));
    assert!(hist.contains("-inf,-5,"));
    assert!(hist.lines().last().unwrap().starts_with("5,inf,"));
}

#[test]
fn relative_outputs_resolve_inside_the_output_directory_variable() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_file(
        dir.path(),
        "two.csv",
        "id,time,event,group\na,1,1,1\nb,2,1,0\n",
    );
    let result = Command::new(env!("CARGO_BIN_EXE_lrtest"))
        .args(["test", &csv, "--out", "nested.json"])
        .env("LRTEST_OUT_DIR", dir.path())
        .output()
        .expect("binary runs");
    assert_eq!(exit_code(&result), 0, "stderr: {}", stderr_of(&result));
    assert!(dir.path().join("nested.json").exists());
}

#[test]
fn oracle_subset_runs_only_the_requested_check() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("oracle.json");
    let result = lrtest(&[
        "oracle",
        &example("var-eighth.pop"),
        "--checks",
        "variance",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&result), 0, "stderr: {}", stderr_of(&result));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(report["checks"].as_array().unwrap().len(), 0);
    let identity = &report["variance_identity"];
    assert_eq!(identity["closed_form"].as_f64().unwrap(), 0.125);
    assert_eq!(
        identity["score_variance"].as_f64().unwrap(),
        identity["mean_total_variance"].as_f64().unwrap()
    );
    assert_eq!(report["all_pass"], true);
}

#[test]
fn exponential_censoring_cannot_be_enumerated_but_has_moments() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_file(
        dir.path(),
        "exp.pop",
        "times = 1 2 3\np1 = 0.5\ncensor1 = exp:2\ncensor0 = exp:1\n",
    );
    let oracle = lrtest(&["oracle", &spec]);
    assert_eq!(exit_code(&oracle), 2);

    let moments = lrtest(&["moments", &spec]);
    assert_eq!(exit_code(&moments), 0, "stderr: {}", stderr_of(&moments));
    assert!(stdout_of(&moments).contains("exact Var(L)"));
}

#[cfg(unix)]
#[test]
fn closed_stdout_pipe_never_panics() {
    use std::process::Stdio;

    let mut child = Command::new(env!("CARGO_BIN_EXE_lrtest"))
        .args(["oracle", &example("n5.pop")])
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("binary runs");
    drop(child.stdout.take());
    let output = child.wait_with_output().expect("child is reaped");
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(!stderr.contains("panicked"), "stderr: {stderr}");
    assert!(
        output.status.success() || output.status.code().is_none(),
        "expected a clean exit or death by SIGPIPE, got {:?}",
        output.status
    );
}
