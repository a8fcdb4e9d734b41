use std::path::Path;
use std::process::{Command, Output};

use fmpinn_cli::commands::{Summary, SweepRow};
use fmpinn_cli::config::RunConfig;

const SMALL: &str = r#"
problem = "ex1_eps0.1"

[network]
scales = [1, 4]
hidden = [8, 8]

[train]
epochs = 40
eval_every = 10
n_interior = 64
n_boundary = 8
seed = 7
"#;

fn fmpinn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fmpinn"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.toml");
    std::fs::write(&path, SMALL).unwrap();
    path.to_str().unwrap().to_string()
}

fn read_summary(dir: &Path) -> Summary {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn train_writes_every_listed_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let out = tmp.path().join("run");
    let o = fmpinn(&["train", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = read_summary(&out);
    assert_eq!(summary.status, "completed");
    assert_eq!(summary.seed, 7);
    assert_eq!(summary.epochs_completed, 40);
    assert!(summary.final_rel.unwrap().is_finite());
    for file in &summary.artifacts {
        assert!(out.join(file).is_file(), "{file} listed but missing");
    }
    let run_csv = std::fs::read_to_string(out.join("run.csv")).unwrap();
    assert_eq!(run_csv.lines().count(), 1 + 4);
    let loss_csv = std::fs::read_to_string(out.join("loss.csv")).unwrap();
    assert_eq!(loss_csv.lines().count(), 1 + 40);
}

#[test]
fn missing_problem_is_a_usage_error_naming_the_field() {
    let o = fmpinn(&["train", "--epochs", "5"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("`problem`"));
}

#[test]
fn unknown_problem_and_bad_flags_are_usage_errors() {
    assert_eq!(fmpinn(&["train", "--problem", "ex9"]).status.code(), Some(1));
    assert_eq!(fmpinn(&["train", "--bogus"]).status.code(), Some(1));
    assert_eq!(fmpinn(&["--help"]).status.code(), Some(0));
}

#[test]
fn overrides_appear_in_the_echo_and_the_echo_reproduces_the_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let out = tmp.path().join("run");
    let o = fmpinn(&["train", "--config", &cfg, "--beta", "20", "--epochs", "10", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = read_summary(&out);
    assert_eq!(summary.config.train.beta, 20.0);
    assert_eq!(summary.config.train.epochs, 10);
    let reloaded = RunConfig::from_toml_str(&summary.config.to_toml_string()).unwrap();
    assert_eq!(reloaded.resolve().unwrap().hash(), summary.config_hash);
}

#[test]
fn same_seed_gives_identical_run_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let mut files = Vec::new();
    for name in ["a", "b"] {
        let out = tmp.path().join(name);
        assert!(fmpinn(&["train", "--config", &cfg, "--out", out.to_str().unwrap()]).status.success());
        files.push(std::fs::read(out.join("run.csv")).unwrap());
    }
    assert_eq!(files[0], files[1]);
    let out = tmp.path().join("c");
    assert!(fmpinn(&["train", "--config", &cfg, "--seed", "8", "--out", out.to_str().unwrap()]).status.success());
    assert_ne!(std::fs::read(out.join("run.csv")).unwrap(), files[0]);
}

fn read_sweep(dir: &Path) -> Vec<SweepRow> {
    csv::Reader::from_path(dir.join("sweep.csv"))
        .unwrap()
        .deserialize()
        .collect::<Result<_, _>>()
        .unwrap()
}

#[test]
fn beta_sweep_writes_one_row_per_value() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let out = tmp.path().join("sweep");
    let o = fmpinn(&["sweep", "--config", &cfg, "--epochs", "10", "--axis", "beta", "--values", "1,10", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_sweep(&out);
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].beta, 1.0);
    assert_eq!(rows[1].beta, 10.0);
    assert!(rows.iter().all(|r| r.status == "completed" && r.final_rel.is_some()));
    assert!(out.join("beta_1/summary.json").is_file());
}

#[test]
fn epsilon_sweep_tags_rows_and_parallel_jobs_match_sequential() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let mut results = Vec::new();
    for jobs in ["1", "2"] {
        let out = tmp.path().join(format!("jobs{jobs}"));
        let o = fmpinn(&[
            "sweep", "--config", &cfg, "--epochs", "10", "--axis", "epsilon", "--values", "0.1,0.01", "--jobs", jobs, "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let rows = read_sweep(&out);
        assert_eq!(rows[0].problem, "ex1_eps0.1");
        assert_eq!(rows[1].problem, "ex1_eps0.01");
        results.push(rows.iter().map(|r| r.final_rel).collect::<Vec<_>>());
    }
    assert_eq!(results[0], results[1]);
}

#[test]
fn sweep_records_failures_in_row_and_continues() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let out = tmp.path().join("sweep");
    // eps = 0 is rejected by the catalog; the other value still runs
    let o = fmpinn(&["sweep", "--config", &cfg, "--epochs", "5", "--axis", "epsilon", "--values", "0,0.1", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let rows = read_sweep(&out);
    assert_eq!(rows[0].status, "failed");
    assert!(!rows[0].error.is_empty());
    assert_eq!(rows[1].status, "completed");
}

#[test]
fn sweep_needs_two_values() {
    let o = fmpinn(&["sweep", "--problem", "ex1_eps0.1", "--axis", "beta", "--values", "1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn validate_lists_named_checks_and_passes() {
    let o = fmpinn(&["validate"]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{text}");
    let checks = text.lines().filter(|l| l.starts_with("PASS") || l.starts_with("FAIL")).count();
    assert!(checks >= 10, "{text}");
}

#[test]
fn fdm_command_writes_grid_and_slice() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("ref.bin");
    let o = fmpinn(&["fdm", "--problem", "ex1_eps0.1", "--h", "0.001", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("REL against closed form"));
    let field = fmpinn::fdm::GridField::load(&out).unwrap();
    assert_eq!(field.len(), 1001);
    let csv = std::fs::read_to_string(tmp.path().join("ref.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 1001);
}

#[test]
fn fdm_refuses_coarse_grids_without_override() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("ref.bin");
    let o = fmpinn(&["fdm", "--problem", "ex1_eps0.1", "--h", "0.1", "--out", out.to_str().unwrap()]);
    assert_ne!(o.status.code(), Some(0));
    let o = fmpinn(&["fdm", "--problem", "ex1_eps0.1", "--h", "0.1", "--allow-underresolved", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
}

#[test]
fn eval_reproduces_the_final_rel_of_a_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let out = tmp.path().join("run");
    assert!(fmpinn(&["train", "--config", &cfg, "--out", out.to_str().unwrap()]).status.success());
    let summary = read_summary(&out);
    let ckpt = out.join("params.ckpt");
    let o = fmpinn(&["eval", "--config", &cfg, "--checkpoint", ckpt.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8_lossy(&o.stdout);
    let rel: f64 = text.trim().strip_prefix("REL ").unwrap().parse().unwrap();
    let expected = summary.final_rel.unwrap();
    assert!((rel - expected).abs() <= 1e-6 * expected, "{rel} vs {expected}");
}

#[test]
fn dry_run_prints_a_loadable_config() {
    let o = fmpinn(&["train", "--problem", "ex3", "--dry-run"]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    let cfg = RunConfig::from_toml_str(&text).unwrap();
    assert_eq!(cfg.problem.as_deref(), Some("ex3"));
    assert_eq!(cfg.train.n_interior, Some(5000));
}
