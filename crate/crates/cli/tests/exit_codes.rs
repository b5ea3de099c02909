use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn saa(dir: &Path, command: &str, config: &str, extra: &[&str]) -> Output {
    let path = dir.join("config.toml");
    std::fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_saa"))
        .arg(command)
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(dir.join("out"))
        .args(extra)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join("out").join(name)).unwrap()
}

#[test]
fn nonpositive_alpha_is_rejected() {
    let d = TempDir::new().unwrap();
    let o = saa(d.path(), "gradcheck", "[problem]\ntag = \"burgers\"\nalpha = 0.0\n", &[]);
    assert_eq!(code(&o), 3);
    assert!(!d.path().join("out").exists());
}

#[test]
fn unknown_key_is_rejected() {
    let d = TempDir::new().unwrap();
    let o = saa(d.path(), "solve", "[problem]\ntag = \"burgers\"\nn_cells = 4\n", &[]);
    assert_eq!(code(&o), 3);
}

#[test]
fn burgers_gradcheck_passes() {
    let d = TempDir::new().unwrap();
    let o = saa(d.path(), "gradcheck", "[problem]\ntag = \"burgers\"\n", &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(d.path(), "gradcheck.csv");
    assert!(csv.starts_with("direction,fd_value,adjoint_value,rel_error\n"));
    assert_eq!(csv.lines().count(), 31);
}

#[test]
fn gradcheck_tolerance_breach_fails() {
    let d = TempDir::new().unwrap();
    let cfg = "[problem]\ntag = \"burgers\"\nn = 15\n[experiment]\npoints = 1\ndirections = 2\nfd_step = 0.5\ngradcheck_tol = 1e-14\n";
    assert_eq!(code(&saa(d.path(), "gradcheck", cfg, &[])), 1);
}

#[test]
fn misset_kappa_min_is_detected() {
    let d = TempDir::new().unwrap();
    let cfg = "[problem]\ntag = \"burgers\"\nn = 15\nkappa_min = 50.0\n[experiment]\ncases = 20\n";
    let o = saa(d.path(), "bounds", cfg, &[]);
    assert_eq!(code(&o), 1);
    assert!(read(d.path(), "bounds_summary.json").contains("\"pass\": false"));
}

#[test]
fn zero_control_and_load_give_zero_state_margins() {
    let d = TempDir::new().unwrap();
    let cfg = "[problem]\ntag = \"boundary_semilinear\"\nn = 4\nload_amplitude = 0.0\n[experiment]\ncases = 5\ncontrol_radius = 0.0\n";
    let o = saa(d.path(), "bounds", cfg, &[]);
    assert_eq!(code(&o), 0);
    let csv = read(d.path(), "bounds.csv");
    let mut rows = csv.lines();
    assert_eq!(rows.next(), Some("case,sample,u_norm,margin,value"));
    let state: Vec<&str> = rows.filter(|r| r.contains(",gleq_h1_state,")).collect();
    assert_eq!(state.len(), 5);
    assert!(state.iter().all(|r| r.ends_with(",0e0")));
}

#[test]
fn bounds_replay_with_seed_override() {
    let d1 = TempDir::new().unwrap();
    let d2 = TempDir::new().unwrap();
    let cfg = "[problem]\ntag = \"burgers\"\nn = 15\n[experiment]\ncases = 10\n";
    assert_eq!(code(&saa(d1.path(), "bounds", cfg, &["--seed", "42"])), 0);
    assert_eq!(code(&saa(d2.path(), "bounds", cfg, &["--seed", "42", "--threads", "1"])), 0);
    assert_eq!(read(d1.path(), "bounds.csv"), read(d2.path(), "bounds.csv"));
}

#[test]
fn single_atom_consistency_passes() {
    let d = TempDir::new().unwrap();
    let cfg = "[problem]\ntag = \"burgers\"\nn = 15\n[model]\natoms = 1\n[experiment]\nn_list = [1, 10]\nseeds = [1, 2]\n";
    let o = saa(d.path(), "consistency", cfg, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(d.path(), "consistency.csv");
    assert!(csv.starts_with(
        "n,seed,value,value_error,solution_error,fixpoint_residual,iterations,converged,in_vad,wall_time,failure\n"
    ));
    for row in csv.lines().skip(1) {
        let f: Vec<&str> = row.split(',').collect();
        assert!(f[3].parse::<f64>().unwrap() <= 1e-10);
        assert_eq!(f[7], "true");
    }
    assert!(read(d.path(), "consistency_summary.json").contains("\"pass\": true"));
}

#[test]
fn single_sample_size_skips_trend_with_warning() {
    let d = TempDir::new().unwrap();
    let cfg = "[problem]\ntag = \"burgers\"\nn = 15\n[model]\natoms = 1\n[experiment]\nn_list = [5]\nseeds = [1, 2]\n";
    let o = saa(d.path(), "consistency", cfg, &[]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
    assert!(read(d.path(), "consistency_summary.json").contains("\"pass\": null"));
}

#[test]
fn consistency_needs_finite_support() {
    let d = TempDir::new().unwrap();
    let o = saa(d.path(), "consistency", "[problem]\ntag = \"burgers\"\nn = 15\n", &[]);
    assert_eq!(code(&o), 3);
}

#[test]
fn appendix_at_eps_max() {
    let d = TempDir::new().unwrap();
    let cfg = "[problem]\ntag = \"appendix_infcompact\"\nn = 8\n[experiment]\nappendix_n = 10\n";
    let o = saa(d.path(), "appendix", cfg, &[]);
    assert_eq!(code(&o), 0);
    let s: serde_json::Value = serde_json::from_str(&read(d.path(), "appendix_summary.json")).unwrap();
    assert!((s["radius"].as_f64().unwrap() - 2f64.sqrt()).abs() < 1e-12);
    assert!(s["max_value"].as_f64().unwrap() <= s["eps"].as_f64().unwrap());
}

#[test]
fn appendix_eps_above_max_is_rejected() {
    let d = TempDir::new().unwrap();
    let cfg = "[problem]\ntag = \"appendix_infcompact\"\nn = 8\n[experiment]\neps = 5.0\n";
    assert_eq!(code(&saa(d.path(), "appendix", cfg, &[])), 3);
    assert_eq!(code(&saa(d.path(), "appendix", "[problem]\ntag = \"burgers\"\n", &[])), 3);
}

#[test]
fn solve_writes_snapshot_and_trace() {
    let d = TempDir::new().unwrap();
    let cfg = "[problem]\ntag = \"burgers\"\nn = 15\n[experiment]\nsolve_n = 8\n";
    let o = saa(d.path(), "solve", cfg, &[]);
    assert_eq!(code(&o), 0);
    let snap = read(d.path(), "solve_snapshot.csv");
    assert!(snap.starts_with("node,x,y,u,state,adjoint\n"));
    assert_eq!(snap.lines().count(), 1 + 17);
    assert!(read(d.path(), "solve_trace.csv").starts_with("iteration,value,residual,step\n"));
}

#[test]
fn json_configs_are_accepted() {
    let d = TempDir::new().unwrap();
    let path = d.path().join("c.json");
    std::fs::write(&path, r#"{"problem": {"tag": "burgers", "n": 15}, "experiment": {"points": 1, "directions": 2}}"#).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_saa"))
        .args(["gradcheck", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(d.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
}
