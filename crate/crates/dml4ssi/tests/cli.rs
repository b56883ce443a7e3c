use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL_ADE: &str = r#"
[dgp]
kind = "ade"

[scenario]
T = 100
R = 3
estimators = ["dml4ssi", "plugin", "ht-naive", "dml-naive"]
base_seed = 5

[forest]
n_trees = 10
"#;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dml4ssi"))
        .args(args)
        .env_remove("DML4SSI_SEED")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_writes_h0_row_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SMALL_ADE);
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for out in [&a, &b] {
        let o = bin(&["simulate", "--config", s(&cfg), "--out", s(out), "--seed", "9"]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().count(), 1 + 101);
    assert!(text.starts_with("t,x_1,"));
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    let c = dir.path().join("c.csv");
    bin(&["simulate", "--config", s(&cfg), "--out", s(&c), "--seed", "10"]);
    assert_ne!(text, std::fs::read_to_string(&c).unwrap());
}

#[test]
fn invalid_config_exits_2_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "[dgp]\nkind = \"ade\"\n[dgp.ade]\nzeta = 0.6\n");
    let o = bin(&["simulate", "--config", s(&cfg), "--out", s(&dir.path().join("t.csv"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("zeta"));
    let cfg = write(dir.path(), "u.toml", "[dgp]\nkind = \"ade\"\nbogus = 1\n");
    let o = bin(&["true-effect", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn usage_and_runtime_exit_codes() {
    assert_eq!(bin(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(bin(&["simulate"]).status.code(), Some(1));
    assert_eq!(bin(&["experiment", "--preset", "missing", "--out-dir", "x"]).status.code(), Some(1));
    let o = bin(&["simulate", "--config", "/nonexistent/c.toml", "--out", "/tmp/x.csv"]);
    assert_eq!(o.status.code(), Some(3));
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SMALL_ADE);
    let o = bin(&["simulate", "--config", s(&cfg), "--out", "/nonexistent/dir/t.csv"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn estimate_reports_each_estimator() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SMALL_ADE);
    let traj = dir.path().join("traj.csv");
    let aux = dir.path().join("aux.csv");
    bin(&["simulate", "--config", s(&cfg), "--out", s(&traj), "--seed", "1"]);
    bin(&["simulate", "--config", s(&cfg), "--out", s(&aux), "--seed", "2"]);
    let out = dir.path().join("est.csv");
    let o = bin(&["estimate", "--config", s(&cfg), "--traj", s(&traj), "--aux", s(&aux), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!String::from_utf8_lossy(&o.stderr).contains("warning"));
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "estimator,variance,psi_hat,sigma2_hat,degenerate,ci_low,ci_high,alpha,T");
    let names: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(names, ["dml4ssi", "plugin", "ht-naive", "dml-naive"]);

    let o = bin(&["estimate", "--config", s(&cfg), "--traj", s(&traj), "--aux", s(&traj), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
}

#[test]
fn estimate_rejects_missing_column() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SMALL_ADE);
    let traj = dir.path().join("traj.csv");
    bin(&["simulate", "--config", s(&cfg), "--out", s(&traj)]);
    let text = std::fs::read_to_string(&traj).unwrap();
    let stripped: String = text
        .lines()
        .map(|l| {
            let mut f: Vec<&str> = l.split(',').collect();
            f.pop();
            f.join(",") + "\n"
        })
        .collect();
    let bad = write(dir.path(), "bad.csv", &stripped);
    let out = dir.path().join("est.csv");
    let o = bin(&["estimate", "--config", s(&cfg), "--traj", s(&bad), "--aux", s(&traj), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains('y'));
}

#[test]
fn experiment_is_schedule_independent_and_seed_overridable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SMALL_ADE);
    let read = |d: &str, f: &str| std::fs::read_to_string(dir.path().join(d).join(f)).unwrap();
    for (name, jobs) in [("j1", "1"), ("j4", "4")] {
        let out = dir.path().join(name);
        let o = bin(&["experiment", "--config", s(&cfg), "--out-dir", s(&out), "--jobs", jobs]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["replications.csv", "summary.csv"] {
        assert_eq!(read("j1", f), read("j4", f));
    }
    let summary = read("j1", "summary.csv");
    assert_eq!(summary.lines().count(), 1 + 4);
    assert!(std::fs::read_to_string(dir.path().join("j1").join("metadata.toml")).unwrap().contains("wall_clock"));

    let out = dir.path().join("env");
    let o = Command::new(env!("CARGO_BIN_EXE_dml4ssi"))
        .args(["experiment", "--config", s(&cfg), "--out-dir", s(&out)])
        .env("DML4SSI_SEED", "77")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert_ne!(read("env", "replications.csv"), read("j1", "replications.csv"));
    let out = dir.path().join("flag");
    bin(&["experiment", "--config", s(&cfg), "--out-dir", s(&out), "--seed", "77"]);
    assert_eq!(read("env", "replications.csv"), read("flag", "replications.csv"));
}

#[test]
fn sweep_writes_one_directory_per_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL_ADE.replace("T = 100", "T = 100\nT_grid = [60, 80, 100]").replace("R = 3", "R = 2");
    let cfg = write(dir.path(), "c.toml", &text);
    let out = dir.path().join("sweep");
    let o = bin(&["experiment", "--config", s(&cfg), "--out-dir", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for t in [60, 80, 100] {
        assert!(out.join(format!("T{t}")).join("summary.csv").exists());
    }
    let sweep = std::fs::read_to_string(out.join("sweep_summary.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 1 + 3 * 4);
}

#[test]
fn true_effect_prints_analytic_and_oracle_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "a.toml", "[dgp]\nkind = \"ade\"\n");
    let o = bin(&["true-effect", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "psi_star = 4");
    let cfg = write(dir.path(), "s.toml", "[dgp]\nkind = \"switchback\"\n[scenario]\nT = 200\n");
    let o = bin(&["true-effect", "--config", s(&cfg), "--oracle", "2000"]);
    assert_eq!(o.status.code(), Some(0));
    let out = String::from_utf8_lossy(&o.stdout).to_string();
    let first = out.lines().next().unwrap();
    let psi: f64 = first.trim_start_matches("psi_star = ").parse().unwrap();
    assert!((psi - 1.433062).abs() < 1e-6);
    let oracle_line = out.lines().nth(1).unwrap();
    let oracle: f64 = oracle_line.split_whitespace().nth(2).unwrap().parse().unwrap();
    let se: f64 = oracle_line.split("se ").nth(1).unwrap().split(',').next().unwrap().parse().unwrap();
    assert!((oracle - psi).abs() <= 3.0 * se + 1e-12, "{out}");
}

#[test]
fn presets_are_listed() {
    let o = bin(&["presets"]);
    let text = String::from_utf8_lossy(&o.stdout).to_string();
    for name in ["ade-bias", "ade-coverage-sweep", "sb-bias", "sb-coverage-sweep"] {
        assert!(text.contains(name));
    }
    let o = bin(&["presets", "sb-bias"]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("kind = \"switchback\""));
}
