use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn formda(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_formda")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const BASE: &str = r#"
name = "cli"
seeds = [1, 2]
max_iters = 20
gap_eval_stride = 5
output_dir = "out"

[problem]
kind = "quadratic"
seed = 3

[problem.quadratic]
dim_x = 2
dim_y = 2
"#;

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.toml");
    std::fs::write(&path, body).unwrap();
    path
}

fn with_solver(solver: &str) -> String {
    format!("{BASE}\n{solver}")
}

const PRESET_SOLVER: &str = r#"
[[solvers]]
name = "formda"
algorithm = "formda"
schedule = { preset = "largest_admissible", batch = 4 }
"#;

const MANUAL_SOLVER: &str = r#"
[[solvers]]
name = "manual"
algorithm = "formda"

[solvers.schedule]
lipschitz = 2.0
beta = 0.05
batch = 4

[solvers.schedule.manual]
eta = { scale = 1.0, shift = 1.0, exponent = "1/2" }
alpha = { scale = 0.01, exponent = 0 }
rho = { scale = 0.1, shift = 1.0, exponent = "2/13" }
gamma = { scale = 0.5, exponent = 0 }
theta = { scale = 0.5, exponent = 0 }
"#;

#[test]
fn validate_accepts_a_good_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &with_solver(PRESET_SOLVER));
    let out = formda(&["validate", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stdout(&out));
    assert!(stdout(&out).contains("ok"));
}

#[test]
fn validate_rejects_empty_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let body = with_solver(PRESET_SOLVER).replace("seeds = [1, 2]", "seeds = []");
    let cfg = write_config(dir.path(), &body);
    let out = formda(&["validate", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("at least one seed"), "{}", stdout(&out));
}

#[test]
fn validate_cites_the_violated_beta_bound() {
    let dir = tempfile::tempdir().unwrap();
    let solver = r#"
[[solvers]]
name = "too_fast"
algorithm = "formda"

[solvers.schedule]
lipschitz = 2.0
beta = 0.5
batch = 8
a1 = 0.05
a2 = 0.05
a4 = 0.002
a5 = 1.1
a6 = 4.2
"#;
    let cfg = write_config(dir.path(), &with_solver(solver));
    let out = formda(&["validate", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let text = stdout(&out);
    assert!(text.contains("solver too_fast") && text.contains("beta <= 1/(6L)"), "{text}");
}

#[test]
fn manual_schedule_needs_the_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &with_solver(MANUAL_SOLVER));
    let out = formda(&["validate", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1), "{}", stdout(&out));

    let allowed = MANUAL_SOLVER.replace(
        "algorithm = \"formda\"\n",
        "algorithm = \"formda\"\nallow_unvalidated_schedule = true\n",
    );
    let cfg = write_config(dir.path(), &with_solver(&allowed));
    let out = formda(&["validate", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stdout(&out));
    assert!(stdout(&out).contains("warning: solver manual"), "{}", stdout(&out));
}

#[test]
fn run_writes_csvs_next_to_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &with_solver(PRESET_SOLVER));
    let out = formda(&["run", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["formda_seed1.csv", "formda_seed2.csv", "formda_aggregate.csv", "summary.json"] {
        assert!(dir.path().join("out").join(f).is_file(), "missing {f}");
    }
    assert_eq!(stdout(&out).lines().filter(|l| l.starts_with("formda")).count(), 2);
}

#[test]
fn malformed_config_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "seeds = [1,\n");
    let out = formda(&["validate", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let missing = formda(&["run", dir.path().join("absent.toml").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn list_problems_names_all_three() {
    let out = formda(&["list-problems"]);
    assert!(out.status.success());
    let text = stdout(&out);
    for name in ["quadratic", "wgan", "robust_multidomain"] {
        assert!(text.lines().any(|l| l.starts_with(name)), "{text}");
    }
}

#[test]
fn quick_props_pass_and_write_json() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("props.json");
    let out = formda(&["props", "--quick", "--seed", "3", "--json", json.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stdout(&out));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(json).unwrap()).unwrap();
    assert_eq!(report["seed"], 3);
    assert!(report["checks"].as_array().unwrap().iter().all(|c| c["passed"] == true));
}
