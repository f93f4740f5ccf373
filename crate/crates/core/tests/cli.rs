use std::path::{Path, PathBuf};
use std::process::Command;

use refcond::cli::{run, EXIT_NUMERICAL, EXIT_OK, EXIT_PROPERTY, EXIT_USAGE};
use tempfile::TempDir;

const BASE: &str = r#"
horizon = 50
[system]
A = [[1.0, 0.1], [0.0, 1.0]]
B = [[0.005], [0.1]]
C = [[1.0, 0.0]]
Ts = 0.1
[weights]
Q = 1.0
R = 1.0
[constraints]
u_min = [-1.0]
u_max = [1.0]
"#;

const STEP: &str = "[signal]\nkind = \"step\"\nt_step = 5.0\nafter = [1.0]\n";

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn cli(args: &[&str]) -> Run {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run(std::iter::once("refcond").chain(args.iter().copied()), &mut out, &mut err);
    Run {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn write_config(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn read_matrix(path: &Path) -> Vec<Vec<f64>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split_whitespace().map(|t| t.parse().unwrap()).collect())
        .collect()
}

fn metric(path: &Path, key: &str) -> String {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key} ")).map(str::to_string))
        .unwrap_or_else(|| panic!("{key} missing"))
}

#[test]
fn gains_writes_one_by_fifty_condensation_row() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "di.toml", BASE);
    let out = dir.path().join("gains");
    let r = cli(&["gains", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    let s = read_matrix(&out.join("s.txt"));
    assert_eq!((s.len(), s[0].len()), (1, 50));
    assert!((s[0].iter().sum::<f64>() - 1.0).abs() < 1e-9);
    assert_eq!(read_matrix(&out.join("fr.txt")).len(), 50);
    assert_eq!(read_matrix(&out.join("fx.txt"))[0].len(), 2);
    assert_eq!(read_matrix(&out.join("s_w.txt"))[0].len(), 50);
    let sums: f64 = metric(&out.join("summary.txt"), "s_row_sums").parse().unwrap();
    assert!((sums - 1.0).abs() < 1e-9);
    assert_eq!(metric(&out.join("summary.txt"), "rank_ok"), "true");
}

#[test]
fn gains_with_one_step_horizon_writes_identity() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "n1.toml", &BASE.replace("horizon = 50", "horizon = 1"));
    let out = dir.path().join("g");
    assert_eq!(cli(&["gains", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]).code, EXIT_OK);
    let s = read_matrix(&out.join("s.txt"));
    assert_eq!(s.len(), 1);
    assert!((s[0][0] - 1.0).abs() < 1e-12);
}

#[test]
fn zero_tracking_weight_warns_but_succeeds() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "q0.toml", &BASE.replace("Q = 1.0", "Q = 0.0"));
    let out = dir.path().join("g");
    let r = cli(&["gains", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(r.code, EXIT_OK);
    assert!(r.stderr.contains("warning"), "{}", r.stderr);
    assert_eq!(metric(&out.join("summary.txt"), "rank_ok"), "false");
    assert_eq!(metric(&out.join("summary.txt"), "warning"), "rank_deficient");
    assert!(read_matrix(&out.join("s.txt"))[0].iter().all(|&v| v == 0.0));
}

#[test]
fn simulate_step_with_condensation() {
    let dir = TempDir::new().unwrap();
    let mut ise = Vec::new();
    for kind in ["ref_cond", "preview"] {
        let text = format!("{BASE}{STEP}[controller]\nkind = \"{kind}\"\n");
        let cfg = write_config(&dir, &format!("{kind}.toml"), &text);
        let out = dir.path().join(kind);
        let r = cli(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
        ise.push(metric(&out.join("metrics.txt"), "ise").parse::<f64>().unwrap());
        let rows = std::fs::read_to_string(out.join("trajectory.dat")).unwrap().lines().count();
        assert_eq!(rows, 1 + 201);
    }
    assert!((ise[0] - 0.259).abs() / 0.259 < 0.02, "{ise:?}");
    assert!((ise[0] - ise[1]).abs() <= 1e-3);
}

#[test]
fn simulate_zero_reference_has_zero_ise() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "zero.toml", &format!("{BASE}[signal]\nkind = \"constant\"\nvalue = [0.0]\n"));
    let out = dir.path().join("z");
    assert_eq!(cli(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]).code, EXIT_OK);
    assert_eq!(metric(&out.join("metrics.txt"), "ise").parse::<f64>().unwrap(), 0.0);
}

#[test]
fn infeasible_state_constraint_is_a_numerical_failure() {
    let dir = TempDir::new().unwrap();
    let text = BASE.replace("u_max = [1.0]", "u_max = [1.0]\nstate_rows = [[1.0, 0.0]]\nstate_rhs = [-1.0]") + STEP;
    let cfg = write_config(&dir, "bad.toml", &text);
    let r = cli(&["simulate", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(r.code, EXIT_NUMERICAL);
    assert!(r.stderr.contains("step 0"), "{}", r.stderr);
}

#[test]
fn parse_and_usage_errors() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "broken.toml", "horizon = \n");
    let r = cli(&["gains", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(r.code, EXIT_USAGE);
    assert!(r.stderr.contains("line"), "{}", r.stderr);

    assert_eq!(cli(&["frobnicate"]).code, EXIT_USAGE);
    assert_eq!(cli(&["study", "--selector", "tables", "--out", "x"]).code, EXIT_USAGE);
    assert_eq!(cli(&["study", "--selector", "custom", "--out", "x"]).code, EXIT_USAGE);
    assert_eq!(cli(&["--help"]).code, EXIT_OK);
}

#[test]
fn weighted_study_is_deterministic_per_seed() {
    let dir = TempDir::new().unwrap();
    let outputs: Vec<(String, String)> = (0..2)
        .map(|i| {
            let out = dir.path().join(format!("w{i}"));
            let r = cli(&["study", "--selector", "weighted", "--seed", "1", "--out", out.to_str().unwrap()]);
            assert_eq!(r.code, EXIT_OK);
            (r.stdout, std::fs::read_to_string(out.join("weighted.kv")).unwrap())
        })
        .collect();
    assert_eq!(outputs[0], outputs[1]);
    assert!(outputs[0].1.lines().all(|l| l.split_whitespace().count() == 5 && l.ends_with(" 1")));
}

#[test]
fn horizon_study_has_twenty_four_cells() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("h");
    assert_eq!(cli(&["study", "--selector", "horizon", "--out", out.to_str().unwrap()]).code, EXIT_OK);
    let kv = std::fs::read_to_string(out.join("horizon.kv")).unwrap();
    assert_eq!(kv.lines().filter(|l| l.split_whitespace().nth(2) == Some("ise")).count(), 24);
}

#[test]
fn custom_study_reads_config() {
    let dir = TempDir::new().unwrap();
    let text = format!("{}{STEP}[simulation]\nT_final = 10.0\n", BASE.replace("horizon = 50", "horizon = 20"));
    let cfg = write_config(&dir, "c.toml", &text);
    let out = dir.path().join("c");
    let r = cli(&["study", "--selector", "custom", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    assert!(r.stdout.contains("Preview"));
    assert!(out.join("custom_preview.dat").exists());
}

#[test]
fn verify_passes_repeats_and_detects_fault() {
    let a = cli(&["verify"]);
    let b = cli(&["verify"]);
    assert_eq!(a.code, EXIT_OK, "{}", a.stdout);
    assert_eq!(a.stdout, b.stdout);
    let f = cli(&["verify", "--inject-fault", "row-sum"]);
    assert_eq!(f.code, EXIT_PROPERTY);
    assert!(f.stdout.contains("FAIL row_sums"), "{}", f.stdout);
}

#[test]
fn binary_reports_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_refcond");
    let status = Command::new(bin).args(["verify", "--inject-fault", "row-sum"]).output().unwrap().status;
    assert_eq!(status.code(), Some(EXIT_PROPERTY));
    let status = Command::new(bin).args(["gains"]).output().unwrap().status;
    assert_eq!(status.code(), Some(EXIT_USAGE));
}
