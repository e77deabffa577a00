//! Behavior of the installed binary: exit codes, artifact layout, flag
//! handling, and byte-level determinism of re-runs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::tempdir;

fn sirv() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sirv"));
    // keep the suite independent of the caller's environment
    cmd.env_remove("SIRV_OUT");
    cmd
}

fn run(cmd: &mut Command) -> (Option<i32>, String, String) {
    let Output { status, stdout, stderr } = cmd.output().expect("binary spawns");
    (
        status.code(),
        String::from_utf8(stdout).expect("stdout is utf-8"),
        String::from_utf8(stderr).expect("stderr is utf-8"),
    )
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).expect("fixture config writes");
    path
}

/// Small epidemic that actually produces events, cheap enough for a test.
const EPIDEMIC: &str = r#"
[domain]
dimension = 2

[run]
population = 150
gamma = 0.5
horizon = 2.0
master_seed = 11
snapshot_count = 3

[kernel]
family = "gaussian_bump"
scale = 0.3
floor = 0.2

[infectivity.initial]
family = "markov"
level = 0.9
rate = 0.5

[infectivity.new]
family = "markov"
level = 0.8
rate = 0.6

[initial_condition]
frac_s = 0.9
frac_i = 0.1
frac_r = 0.0

[initial_condition.density_s]
family = "uniform"

[initial_condition.density_i]
family = "gaussian_mixture"
components = [{ center = [0.7, 0.3], scale = 0.2 }]

[initial_condition.density_r]
family = "uniform"
"#;

/// No initially infected individuals: nothing can ever happen.
const QUIESCENT: &str = r#"
[domain]
dimension = 2

[run]
population = 120
gamma = 0.5
horizon = 1.0
master_seed = 5
snapshot_count = 3

[kernel]
family = "constant"
value = 1.0

[infectivity.initial]
family = "markov"
level = 0.6
rate = 0.5

[infectivity.new]
family = "markov"
level = 0.6
rate = 0.5

[initial_condition]
frac_s = 0.75
frac_i = 0.0
frac_r = 0.25

[initial_condition.density_s]
family = "uniform"

[initial_condition.density_i]
family = "uniform"

[initial_condition.density_r]
family = "uniform"
"#;

/// Spatially homogeneous but with a non-exponential course, so the scalar
/// reference has to integrate the full memory term.
const HUMP_UNIFORM: &str = r#"
[domain]
dimension = 2

[run]
population = 200
gamma = 0.3
horizon = 3.0
master_seed = 3
snapshot_count = 4

[kernel]
family = "constant"
value = 1.0

[infectivity.initial]
family = "hump"
peak = 0.8
peak_time = 0.5
duration_min = 1.0
duration_max = 2.0

[infectivity.new]
family = "hump"
peak = 0.8
peak_time = 0.5
duration_min = 1.0
duration_max = 2.0

[initial_condition]
frac_s = 0.95
frac_i = 0.05
frac_r = 0.0

[initial_condition.density_s]
family = "uniform"

[initial_condition.density_i]
family = "uniform"

[initial_condition.density_r]
family = "uniform"
"#;

#[test]
fn validate_reports_the_resolved_counts() {
    let dir = tempdir().unwrap();
    let config = write_config(dir.path(), "epidemic.toml", EPIDEMIC);
    let (code, stdout, stderr) = run(sirv().args(["validate", "--config"]).arg(&config));
    assert_eq!(code, Some(0), "stderr: {stderr}");
    assert!(stdout.contains("ok:"), "summary line missing: {stdout}");
    assert!(stdout.contains("S 135, I 15, R 0"), "counts wrong: {stdout}");
}

#[test]
fn gamma_outside_the_unit_interval_exits_with_2() {
    let dir = tempdir().unwrap();
    let bad = EPIDEMIC.replace("gamma = 0.5", "gamma = 1.5");
    let config = write_config(dir.path(), "bad.toml", &bad);
    let (code, _, stderr) = run(sirv().args(["validate", "--config"]).arg(&config));
    assert_eq!(code, Some(2));
    assert!(
        stderr.contains("gamma = 1.5") && stderr.contains("[0, 1]"),
        "the message should name the offending value and the range: {stderr}"
    );
}

#[test]
fn unknown_config_keys_exit_with_2() {
    let dir = tempdir().unwrap();
    let bad = EPIDEMIC.replace("master_seed = 11", "master_seed = 11\ntypo_knob = 3");
    let config = write_config(dir.path(), "bad.toml", &bad);
    let (code, _, stderr) = run(sirv().args(["validate", "--config"]).arg(&config));
    assert_eq!(code, Some(2));
    assert!(stderr.contains("not a valid TOML document"), "stderr: {stderr}");
    assert!(stderr.contains("typo_knob"), "should name the unknown key: {stderr}");
}

#[test]
fn missing_config_file_is_a_runtime_error() {
    let (code, _, stderr) = run(sirv().args(["validate", "--config", "/nonexistent/x.toml"]));
    assert_eq!(code, Some(1));
    assert!(stderr.contains("cannot read"), "stderr: {stderr}");
}

#[test]
fn sim_writes_exactly_three_artifacts_with_schema_headers() {
    let dir = tempdir().unwrap();
    let config = write_config(dir.path(), "quiescent.toml", QUIESCENT);
    let out = dir.path().join("out");
    let (code, stdout, stderr) =
        run(sirv().args(["sim", "--config"]).arg(&config).arg("--out").arg(&out));
    assert_eq!(code, Some(0), "stderr: {stderr}");
    assert!(stdout.contains("0 events"), "quiescent run should be event-free: {stdout}");

    let mut names: Vec<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["events.csv", "manifest.toml", "snapshots.csv"]);

    let events = fs::read_to_string(out.join("events.csv")).unwrap();
    assert!(events.starts_with("# schema=sirv-events-v1\n"));
    assert_eq!(events.lines().count(), 2, "header only; no events happened");
    let snaps = fs::read_to_string(out.join("snapshots.csv")).unwrap();
    assert!(snaps.starts_with("# schema=sirv-snapshots-v1\n"));

    let manifest = fs::read_to_string(out.join("manifest.toml")).unwrap();
    assert!(manifest.contains("tool = \"sirv\""));
    assert!(manifest.contains("mode = \"raw\""));
    assert!(manifest.contains("omega_holds = true"));
    assert!(manifest.contains("[config.kernel]"), "full config echo expected");
}

#[test]
fn sim_reruns_are_byte_identical() {
    let dir = tempdir().unwrap();
    let config = write_config(dir.path(), "epidemic.toml", EPIDEMIC);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let (code, _, stderr) =
            run(sirv().args(["sim", "--config"]).arg(&config).arg("--out").arg(out));
        assert_eq!(code, Some(0), "stderr: {stderr}");
    }
    for name in ["events.csv", "snapshots.csv", "manifest.toml"] {
        let lhs = fs::read(a.join(name)).unwrap();
        let rhs = fs::read(b.join(name)).unwrap();
        assert_eq!(lhs, rhs, "{name} changed between identical invocations");
    }
}

#[test]
fn seed_flag_overrides_the_config_seed() {
    let dir = tempdir().unwrap();
    let config = write_config(dir.path(), "epidemic.toml", EPIDEMIC);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for (out, seed) in [(&a, "1"), (&b, "2")] {
        let (code, _, stderr) = run(sirv()
            .args(["sim", "--config"])
            .arg(&config)
            .args(["--seed", seed, "--out"])
            .arg(out));
        assert_eq!(code, Some(0), "stderr: {stderr}");
    }
    let manifest = fs::read_to_string(a.join("manifest.toml")).unwrap();
    assert!(manifest.contains("seed = 1"), "override should be echoed: {manifest}");
    assert_ne!(
        fs::read(a.join("events.csv")).unwrap(),
        fs::read(b.join("events.csv")).unwrap(),
        "different seeds should give different event logs"
    );
}

#[test]
fn truncated_mode_flag_is_echoed_in_the_manifest() {
    let dir = tempdir().unwrap();
    let config = write_config(dir.path(), "epidemic.toml", EPIDEMIC);
    let out = dir.path().join("out");
    let (code, _, stderr) = run(sirv()
        .args(["sim", "--config"])
        .arg(&config)
        .args(["--mode", "truncated", "--out"])
        .arg(&out));
    assert_eq!(code, Some(0), "stderr: {stderr}");
    let manifest = fs::read_to_string(out.join("manifest.toml")).unwrap();
    assert!(manifest.contains("mode = \"truncated\""), "manifest: {manifest}");
}

#[test]
fn sirv_out_env_var_sets_the_default_output_directory() {
    let dir = tempdir().unwrap();
    let config = write_config(dir.path(), "quiescent.toml", QUIESCENT);
    let out = dir.path().join("from_env");
    let (code, _, stderr) = run(sirv()
        .args(["sim", "--config"])
        .arg(&config)
        .env("SIRV_OUT", &out));
    assert_eq!(code, Some(0), "stderr: {stderr}");
    assert!(out.join("manifest.toml").exists(), "artifacts should land in SIRV_OUT");
}

#[test]
fn meanfield_on_a_quiescent_config_keeps_susceptible_pairings_constant() {
    let dir = tempdir().unwrap();
    let config = write_config(dir.path(), "quiescent.toml", QUIESCENT);
    let out = dir.path().join("out");
    let (code, _, stderr) = run(sirv()
        .args(["meanfield", "--config"])
        .arg(&config)
        .args(["--grid", "4", "--dt", "0.01", "--out"])
        .arg(&out));
    assert_eq!(code, Some(0), "stderr: {stderr}");

    let pairings = fs::read_to_string(out.join("pairings.csv")).unwrap();
    let mut s_one_values = Vec::new();
    for line in pairings.lines().skip(2) {
        let cols: Vec<&str> = line.split(',').collect();
        let (measure, phi, value) = (cols[1], cols[2], cols[3]);
        match measure {
            "S" if phi == "one" => s_one_values.push(value.to_string()),
            "I" | "F" => assert_eq!(value, "0", "no force without infected mass"),
            _ => {}
        }
    }
    assert_eq!(s_one_values.len(), 3, "one row per stored snapshot");
    s_one_values.dedup();
    assert_eq!(s_one_values.len(), 1, "susceptible mass must not move");
}

#[test]
fn meanfield_rejects_a_nonpositive_step_with_exit_2() {
    let dir = tempdir().unwrap();
    let config = write_config(dir.path(), "quiescent.toml", QUIESCENT);
    let (code, _, _) = run(sirv()
        .args(["meanfield", "--config"])
        .arg(&config)
        .args(["--dt", "0"])
        .arg("--out")
        .arg(dir.path().join("out")));
    assert_eq!(code, Some(2));
}

#[test]
fn the_scalar_oracle_covers_non_exponential_courses() {
    let dir = tempdir().unwrap();
    let config = write_config(dir.path(), "hump.toml", HUMP_UNIFORM);
    let out = dir.path().join("out");
    let (code, _, stderr) = run(sirv()
        .args(["meanfield", "--config"])
        .arg(&config)
        .args(["--grid", "2", "--dt", "0.005", "--oracle", "--out"])
        .arg(&out));
    assert_eq!(code, Some(0), "stderr: {stderr}");

    let oracle = fs::read_to_string(out.join("oracle.toml")).unwrap();
    let sup_err_s: f64 = oracle
        .lines()
        .find_map(|l| l.strip_prefix("sup_err_s = "))
        .expect("oracle.toml records the susceptible error")
        .parse()
        .unwrap();
    assert!(
        sup_err_s < 0.02,
        "two independent discretizations of the same dynamics disagree: {sup_err_s}"
    );
    assert!(out.join("oracle.csv").exists());
}

#[test]
fn converge_needs_at_least_three_ladder_points() {
    let dir = tempdir().unwrap();
    let config = write_config(dir.path(), "epidemic.toml", EPIDEMIC);
    let study = write_config(
        dir.path(),
        "study.toml",
        &format!(
            "config = {:?}\nn_ladder = [100, 200]\nreplicates = 3\ngrid = 3\ndt = 0.02\n",
            config
        ),
    );
    let (code, _, stderr) = run(sirv()
        .args(["converge", "--config"])
        .arg(&study)
        .arg("--out")
        .arg(dir.path().join("out")));
    assert_eq!(code, Some(2));
    assert!(
        stderr.contains("slope fit needs >= 3 ladder points, got 2"),
        "stderr: {stderr}"
    );
}

#[test]
fn converge_rejects_unknown_components() {
    let dir = tempdir().unwrap();
    let config = write_config(dir.path(), "epidemic.toml", EPIDEMIC);
    let study = write_config(
        dir.path(),
        "study.toml",
        &format!(
            "config = {:?}\nn_ladder = [100, 200, 400]\nreplicates = 3\ngrid = 3\n\
             dt = 0.02\ncomponents = [\"S\", \"X\"]\n",
            config
        ),
    );
    let (code, _, stderr) = run(sirv()
        .args(["converge", "--config"])
        .arg(&study)
        .arg("--out")
        .arg(dir.path().join("out")));
    assert_eq!(code, Some(2));
    assert!(stderr.contains("unknown component"), "stderr: {stderr}");
}

#[test]
fn converge_outputs_do_not_depend_on_the_thread_count() {
    let dir = tempdir().unwrap();
    let config = write_config(dir.path(), "epidemic.toml", EPIDEMIC);
    let study = write_config(
        dir.path(),
        "study.toml",
        &format!(
            "config = {:?}\nn_ladder = [100, 200, 400]\nreplicates = 3\ngrid = 3\ndt = 0.02\n",
            config
        ),
    );
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for (out, threads) in [(&a, "1"), (&b, "3")] {
        let (code, _, stderr) = run(sirv()
            .args(["converge", "--config"])
            .arg(&study)
            .args(["--threads", threads, "--out"])
            .arg(out));
        assert_eq!(code, Some(0), "stderr: {stderr}");
    }
    assert_eq!(
        fs::read(a.join("study.csv")).unwrap(),
        fs::read(b.join("study.csv")).unwrap(),
        "per-replicate rows must not depend on scheduling"
    );
}

#[test]
fn any_study_row_can_be_reproduced_in_isolation() {
    use sirv_cli::study::{replicate_outcome, run_study, study_context, StudySpec};

    let dir = tempdir().unwrap();
    let config = write_config(dir.path(), "epidemic.toml", EPIDEMIC);
    let spec: StudySpec = toml::from_str(&format!(
        "config = {:?}\nn_ladder = [100, 200, 400]\nreplicates = 4\ngrid = 3\ndt = 0.02\n",
        config
    ))
    .unwrap();
    let ctx = study_context(&spec, dir.path()).unwrap();
    let full = run_study(&ctx, &spec, 2).unwrap();

    let alone = replicate_outcome(&ctx, 200, 3).unwrap();
    let matching: Vec<_> = full
        .rows
        .iter()
        .filter(|r| r.n == 200 && r.replicate == 3)
        .collect();
    assert_eq!(matching.len(), alone.rows.len());
    for (row, (phi, comp, sup)) in matching.iter().zip(&alone.rows) {
        assert_eq!(&row.phi, phi);
        assert_eq!(row.component, *comp);
        assert_eq!(
            row.sup_err.to_bits(),
            sup.to_bits(),
            "reproduced row drifted for phi {phi}"
        );
    }
}
