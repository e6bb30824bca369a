//! End-to-end checks of the command-line interface: every subcommand is
//! driven against temporary files and its artifacts are parsed back.

use std::path::Path;
use std::process::{Command, Output};

use aalen::intensity::IntensityModel;
use aalen::processes::{CountingRecord, ModelSpec};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_aalen"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawning the CLI must succeed");
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn run_err(cmd: &mut Command) -> String {
    let out = cmd.output().expect("spawning the CLI must succeed");
    assert!(
        !out.status.success(),
        "command unexpectedly succeeded: {}",
        String::from_utf8_lossy(&out.stdout)
    );
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_json(path: &Path, value: &impl serde::Serialize) {
    std::fs::write(path, serde_json::to_string_pretty(value).unwrap()).unwrap();
}

fn constant(level: f64) -> IntensityModel {
    IntensityModel::constant(level, 0.0, 1.0).unwrap()
}

fn unit_poisson_spec(n: u64) -> ModelSpec {
    ModelSpec::Poisson {
        lambda0: constant(1.0),
        n,
        horizon: 1.0,
        lambda_max: None,
    }
}

/// Simulate a record through the CLI into `dir`, returning its path.
fn simulate_record(dir: &Path, n: u64, seed: u64) -> std::path::PathBuf {
    let spec_path = dir.join("spec.json");
    write_json(&spec_path, &unit_poisson_spec(n));
    let record_path = dir.join(format!("record_{n}_{seed}.json"));
    run_ok(bin().args([
        "simulate",
        "--model",
        "poisson",
        "--config",
        spec_path.to_str().unwrap(),
        "--seed",
        &seed.to_string(),
        "--out",
        record_path.to_str().unwrap(),
    ]));
    record_path
}

#[test]
fn simulate_is_deterministic_and_validates_the_family() {
    let dir = tempfile::tempdir().unwrap();
    let record_path = simulate_record(dir.path(), 40, 9);
    let text = std::fs::read_to_string(&record_path).unwrap();
    let record: CountingRecord = serde_json::from_str(&text).unwrap();
    record.validate().unwrap();
    assert_eq!(record.model, "poisson");
    assert_eq!(record.n, 40);

    // Same seed, same bytes.
    let again = simulate_record(dir.path(), 40, 9);
    assert_eq!(std::fs::read_to_string(&again).unwrap(), text);

    // The --model flag must agree with the spec file.
    let stderr = run_err(bin().args([
        "simulate",
        "--model",
        "censoring",
        "--config",
        dir.path().join("spec.json").to_str().unwrap(),
        "--seed",
        "1",
        "--out",
        dir.path().join("never.json").to_str().unwrap(),
    ]));
    assert!(stderr.contains("does not match"), "stderr: {stderr}");
}

#[test]
fn loglik_reports_exact_values_for_the_unit_intensity() {
    let dir = tempfile::tempdir().unwrap();
    let record_path = simulate_record(dir.path(), 40, 9);
    let intensity_path = dir.path().join("unit.json");
    write_json(&intensity_path, &constant(1.0));
    let out = run_ok(bin().args([
        "loglik",
        "--intensity",
        intensity_path.to_str().unwrap(),
        "--record",
        record_path.to_str().unwrap(),
    ]));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let field = |name: &str| -> f64 {
        stdout
            .lines()
            .find_map(|l| l.strip_prefix(&format!("{name} ")))
            .unwrap_or_else(|| panic!("missing {name} in: {stdout}"))
            .parse()
            .unwrap()
    };
    // Unit intensity: no event contribution, and the integral term is the
    // constant exposure n over the unit window.
    assert_eq!(field("event_term"), 0.0);
    assert!((field("integral_term") - 40.0).abs() < 1e-9);
    assert!((field("value") + field("integral_term")).abs() < 1e-12);
}

#[test]
fn diagnostics_match_closed_forms() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    write_json(&a, &constant(1.0));
    write_json(&b, &constant(1.4));
    let csv_path = dir.path().join("l1.csv");
    run_ok(bin().args([
        "diagnostics",
        "--metric",
        "l1",
        "--a",
        a.to_str().unwrap(),
        "--b",
        b.to_str().unwrap(),
        "--out",
        csv_path.to_str().unwrap(),
    ]));
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("metric,value,grid_size,tolerance"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "l1");
    assert!((row[1].parse::<f64>().unwrap() - 0.4).abs() < 1e-9);

    // Hellinger on the uniform-density pair, straight to stdout.
    let narrow = dir.path().join("narrow.json");
    let wide = dir.path().join("wide.json");
    write_json(&narrow, &IntensityModel::uniform_density(1.0).unwrap());
    write_json(&wide, &IntensityModel::uniform_density(2.0).unwrap());
    let out = run_ok(bin().args([
        "diagnostics",
        "--metric",
        "hellinger",
        "--a",
        narrow.to_str().unwrap(),
        "--b",
        wide.to_str().unwrap(),
    ]));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let value: f64 = stdout
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    assert!((value * value - (2.0 - 2.0_f64.sqrt())).abs() < 1e-10);

    // A non-normalized hellinger argument is rejected with context.
    let stderr = run_err(bin().args([
        "diagnostics",
        "--metric",
        "hellinger",
        "--a",
        a.to_str().unwrap(),
        "--b",
        b.to_str().unwrap(),
    ]));
    assert!(stderr.contains("probability density"), "stderr: {stderr}");
}

fn fit_and_check(dir: &Path, family: &str, prior_json: &str, record_path: &Path) {
    let prior_path = dir.join(format!("prior_{family}.json"));
    std::fs::write(&prior_path, prior_json).unwrap();
    let out_dir = dir.join(format!("out_{family}"));
    run_ok(bin().args([
        family,
        "--record",
        record_path.to_str().unwrap(),
        "--prior",
        prior_path.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--seed",
        "11",
        "--iterations",
        "300",
        "--burn-in",
        "100",
        "--stride",
        "4",
    ]));

    let chain_text = std::fs::read_to_string(out_dir.join("chain.jsonl")).unwrap();
    let draws: Vec<IntensityModel> = chain_text
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(draws.len(), 50);
    for d in &draws {
        d.validate().unwrap();
    }

    let summary = std::fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 51);
    assert_eq!(summary.lines().next(), Some("draw,mass,sup"));

    let acceptance = std::fs::read_to_string(out_dir.join("acceptance.csv")).unwrap();
    assert!(acceptance.lines().count() >= 2);

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["command"], family);
    assert_eq!(manifest["seed"], 11);
    assert_eq!(manifest["draws"], 50);
    assert_eq!(manifest["iterations"], 300);
    assert_eq!(manifest["record_digest"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["prior_digest"].as_str().unwrap().len(), 64);
    assert!(manifest["wall_s"].as_f64().unwrap() >= 0.0);
}

#[test]
fn fit_subcommands_write_complete_artifact_sets() {
    let dir = tempfile::tempdir().unwrap();
    let record_path = simulate_record(dir.path(), 30, 5);
    fit_and_check(dir.path(), "fit-dpm", "{}", &record_path);
    fit_and_check(
        dir.path(),
        "fit-logspline",
        r#"{"order":2,"box_bound":2.0}"#,
        &record_path,
    );
    fit_and_check(dir.path(), "fit-loglinear", "{}", &record_path);

    // Refitting with the same seed reproduces the chain byte for byte.
    let first = std::fs::read(dir.path().join("out_fit-dpm/chain.jsonl")).unwrap();
    let rerun_dir = dir.path().join("out_rerun");
    run_ok(bin().args([
        "fit-dpm",
        "--record",
        record_path.to_str().unwrap(),
        "--prior",
        dir.path().join("prior_fit-dpm.json").to_str().unwrap(),
        "--out",
        rerun_dir.to_str().unwrap(),
        "--seed",
        "11",
        "--iterations",
        "300",
        "--burn-in",
        "100",
        "--stride",
        "4",
    ]));
    let second = std::fs::read(rerun_dir.join("chain.jsonl")).unwrap();
    assert_eq!(first, second);
}

#[test]
fn rate_study_writes_summary_report_and_chains() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("study.toml");
    std::fs::write(
        &config_path,
        r#"
seed = 7
n_grid = [30, 60]
replicates = 5
bootstrap = 200

[template]
model = "poisson"
horizon = 1.0

[template.lambda0]
variant = "closed_form"
id = "linear_decreasing"
scale = 1.0

[template.lambda0.params]
peak = 2.0

[template.lambda0.domain]
lo = 0.0
hi = 1.0

[prior]
family = "dpm"

[mcmc]
iterations = 220
burn_in = 100
stride = 2

[formula]
id = "monotone"
"#,
    )
    .unwrap();
    let out_dir = dir.path().join("study_out");
    let out = run_ok(bin().args([
        "rate-study",
        "--config",
        config_path.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("slope"), "stdout: {stdout}");

    let summary = std::fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 11, "header plus ten cells");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap())
            .unwrap();
    assert!(report["slope"].as_f64().unwrap().is_finite());
    assert_eq!(report["rows"].as_array().unwrap().len(), 10);
    let chains: Vec<_> = std::fs::read_dir(out_dir.join("chains")).unwrap().collect();
    assert_eq!(chains.len(), 10);

    // The config echo must parse back to the same TOML-compatible config.
    let echoed: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("config.json")).unwrap())
            .unwrap();
    assert_eq!(echoed["seed"], 7);
    assert_eq!(echoed["n_grid"].as_array().unwrap().len(), 2);
}

#[test]
fn test_bounds_reports_passing_rows() {
    let dir = tempfile::tempdir().unwrap();
    let null_path = dir.path().join("null.json");
    let alt_path = dir.path().join("alt.json");
    write_json(&null_path, &constant(1.0));
    write_json(&alt_path, &constant(1.3));
    let csv_path = dir.path().join("bounds.csv");
    run_ok(bin().args([
        "test-bounds",
        "--lambda0",
        null_path.to_str().unwrap(),
        "--lambda1",
        alt_path.to_str().unwrap(),
        "--n",
        "60",
        "--u",
        "1,2",
        "--replicates",
        "300",
        "--seed",
        "3",
        "--out",
        csv_path.to_str().unwrap(),
    ]));
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "u,n,empirical_type1,bound,se,pass");
    assert_eq!(lines.len(), 3);
    for (row, u) in lines[1..].iter().zip([1.0f64, 2.0]) {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols[0].parse::<f64>().unwrap(), u);
        assert!((cols[3].parse::<f64>().unwrap() - 2.0 * (-u).exp()).abs() < 1e-12);
        assert_eq!(cols[5], "true");
    }
}

#[test]
fn malformed_inputs_fail_with_context() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{not json").unwrap();
    let stderr = run_err(bin().args([
        "simulate",
        "--model",
        "poisson",
        "--config",
        bad.to_str().unwrap(),
        "--seed",
        "1",
        "--out",
        dir.path().join("never.json").to_str().unwrap(),
    ]));
    assert!(stderr.contains("model spec"), "stderr: {stderr}");

    let bad_toml = dir.path().join("bad.toml");
    std::fs::write(&bad_toml, "n_grid = \"not a list\"").unwrap();
    let stderr = run_err(bin().args([
        "rate-study",
        "--config",
        bad_toml.to_str().unwrap(),
        "--out",
        dir.path().join("never").to_str().unwrap(),
    ]));
    assert!(stderr.contains("study config"), "stderr: {stderr}");
}
