use std::path::Path;
use std::process::{Command, Output};

use kspoa::game::GameFile;
use serde_json::Value;

fn kspoa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kspoa"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = kspoa(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn data_lines(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

#[test]
fn spoa_bound_rows() {
    let text = ok(&["spoa-bound", "--n", "2", "--all-k", "--exact"]);
    assert!(text.starts_with("# kspoa bounds schema v1\n"));
    let rows = data_lines(&text);
    assert_eq!(rows.len(), 2);
    assert_eq!((rows[0][3].as_str(), rows[1][3].as_str()), ("0.5", "1"));
    let single = data_lines(&ok(&["spoa-bound", "--n", "1", "--welfare", "exp5"]));
    assert_eq!(single.len(), 1);
    assert_eq!(single[0][3], "1");
}

#[test]
fn spoa_bound_sweep_is_monotone_and_truncates() {
    let rows = data_lines(&ok(&["spoa-bound", "--n", "6", "--welfare", "covering"]));
    let spoa: Vec<f64> = rows.iter().map(|r| r[3].parse().unwrap()).collect();
    assert!(spoa.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    assert!((spoa[5] - 1.0).abs() < 1e-9);
    let cut = data_lines(&ok(&["spoa-bound", "--n", "6", "--max-k", "2"]));
    assert_eq!(cut.len(), 2);
}

#[test]
fn welfare_table_file_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let table = path(dir.path(), "w.json");
    std::fs::write(&table, r#"{"table": [0, 1, 1, 1]}"#).unwrap();
    let from_file = ok(&["spoa-bound", "--n", "3", "--welfare", &table]);
    let named = ok(&["spoa-bound", "--n", "3", "--welfare", "covering"]);
    assert_eq!(from_file, named);

    let cfg = path(dir.path(), "cfg.json");
    let out = path(dir.path(), "b.csv");
    std::fs::write(&cfg, format!(r#"{{"n": 3, "welfare": "covering", "all-k": true, "out": "{out}"}}"#)).unwrap();
    ok(&["--config", &cfg, "spoa-bound"]);
    assert_eq!(std::fs::read_to_string(&out).unwrap(), named);
    // Flags override the file.
    let two = ok(&["--config", &cfg, "spoa-bound", "--n", "2", "--out", &path(dir.path(), "c.csv")]);
    assert!(two.is_empty());
    assert_eq!(data_lines(&std::fs::read_to_string(dir.path().join("c.csv")).unwrap()).len(), 2);

    std::fs::write(&cfg, r#"{"n": 3, "bogus": 1}"#).unwrap();
    assert!(!kspoa(&["--config", &cfg, "spoa-bound"]).status.success());
}

#[test]
fn utility_design_writes_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path(), "design.csv");
    ok(&["utility-design", "--n", "4", "--welfare", "exp5", "--out", &out]);
    let rows = data_lines(&std::fs::read_to_string(&out).unwrap());
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0][8], "true");
    assert_eq!(rows[3][8], "true");
    let sidecar: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("design.rules.json")).unwrap()).unwrap();
    let table = &sidecar["designs"][0]["result"]["Ok"]["u_tilde"];
    assert_eq!(table.as_array().unwrap().len(), 5);
}

#[test]
fn worst_case_then_verify() {
    let dir = tempfile::tempdir().unwrap();
    let game = path(dir.path(), "ring.json");
    let out = kspoa(&["worst-case", "--n", "3", "--k", "2", "--welfare", "exp5", "--verify", "--out", &game]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(report["passed"], Value::Bool(true));
    let file = GameFile::load(Path::new(&game)).unwrap();
    assert_eq!(file.designated_equilibrium, Some(vec![0, 0, 0]));
    let eq: Value = serde_json::from_str(&ok(&["verify", "--game", &game, "--joint-action", "0,0,0", "--k", "2"])).unwrap();
    assert_eq!(eq["is_equilibrium"], Value::Bool(true));
    let full: Value = serde_json::from_str(&ok(&["verify", "--game", &game, "--joint-action", "0,0,0", "--k", "3"])).unwrap();
    assert_eq!(full["is_equilibrium"], Value::Bool(false));
    assert_eq!(full["witness"]["coalition"], serde_json::json!([0, 1, 2]));
}

#[test]
fn simulate_is_reproducible_across_threads() {
    let dir = tempfile::tempdir().unwrap();
    let rand_cfg = path(dir.path(), "random.json");
    std::fs::write(
        &rand_cfg,
        r#"{"resources": 10, "agents": 5, "max_actions": 3, "inclusion_probability": 0.3}"#,
    )
    .unwrap();
    let run = |threads: &str, name: &str| {
        let out = path(dir.path(), name);
        ok(&[
            "simulate", "--random", &rand_cfg, "--k", "1,2,3", "--T", "30", "--trials", "8", "--seed", "11",
            "--threads", threads, "--out", &out,
        ]);
        (
            std::fs::read(&out).unwrap(),
            std::fs::read(dir.path().join(format!("{}.summary.csv", name.trim_end_matches(".csv")))).unwrap(),
        )
    };
    let (t1, s1) = run("1", "a.csv");
    let (t3, s3) = run("3", "b.csv");
    assert_eq!(t1, t3);
    assert_eq!(s1, s3);
    let text = String::from_utf8(t1).unwrap();
    assert!(text.starts_with("# kspoa trace schema v1\nk,trial,t,group_size,changed,welfare,cum_welfare_evals\n"));
    assert_eq!(data_lines(&text).len(), 3 * 8 * 31);
    assert!(dir.path().join("a.final.csv").exists());
}

#[test]
fn simulate_zero_horizon_and_cor1() {
    let dir = tempfile::tempdir().unwrap();
    let game = path(dir.path(), "ring.json");
    ok(&["worst-case", "--n", "2", "--k", "1", "--out", &game]);
    let summary = ok(&["simulate", "--game", &game, "--k", "1", "--T", "0", "--seed", "2"]);
    let rows = data_lines(&summary);
    assert_eq!(rows.len(), 1);
    let cor = ok(&["simulate", "--game", &game, "--k", "2", "--cor1", "--T", "5", "--trials", "3"]);
    assert_eq!(data_lines(&cor).len(), 6);
    let lit = ok(&["simulate", "--game", &game, "--k", "2", "--cor1", "--literal", "--T", "5"]);
    assert_eq!(data_lines(&lit).len(), 6);
    let until = ok(&["simulate", "--game", &game, "--p", "0,1", "--T", "1000", "--stop", "until-equilibrium"]);
    assert!(data_lines(&until).len() < 1001);
}

#[test]
fn errors_exit_nonzero() {
    for args in [
        vec!["spoa-bound", "--n", "3", "--welfare", "nope"],
        vec!["spoa-bound", "--n", "3", "--k", "4"],
        vec!["spoa-bound"],
        vec!["simulate", "--random", "numerical-study", "--k", "1"],
        vec!["simulate", "--random", "numerical-study", "--p", "0.5,0.4", "--T", "3"],
        vec!["worst-case", "--n", "2", "--k", "1", "--exact"],
    ] {
        let out = kspoa(&args);
        assert!(!out.status.success(), "{args:?} should fail");
        assert!(String::from_utf8_lossy(&out.stderr).contains("error"), "{args:?}");
    }
}
