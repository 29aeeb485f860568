use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_evo-ldp"));
    c.env_remove("EVO_LDP_WORKERS");
    c
}

fn config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/congestion.json")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "failed: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Data rows of a CSV with `#` metadata and one header line.
fn rows(csv: &str) -> Vec<Vec<f64>> {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn rest_point_of_congestion_config() {
    let cfg = config();
    let out = stdout(&run(&["rest-point", "--config", cfg.to_str().unwrap()]));
    assert!(out.starts_with("# config_hash="));
    assert!(out.contains("\n# seed=7\n"));
    let x = &rows(&out)[0];
    for (a, b) in x.iter().zip([0.3563, 0.4482, 0.1956]) {
        assert!((a - b).abs() < 5e-4, "{x:?}");
    }
}

#[test]
fn levelset_span() {
    let out = stdout(&run(&["levelsets", "--eta", "0.25", "--mesh", "200"]));
    let f: Vec<f64> = rows(&out).iter().map(|r| r[3]).collect();
    let span = f.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - f.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!((span - 9.27).abs() <= 0.02, "span {span}");
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for (p, workers) in [(&a, "1"), (&b, "3")] {
        let o = bin()
            .args(["simulate", "--pop-size", "40", "--horizon", "2", "--seed", "9", "--out"])
            .arg(p)
            .env("EVO_LDP_WORKERS", workers)
            .output()
            .unwrap();
        assert!(o.status.success());
    }
    let (a, b) = (std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    assert_eq!(a, b);
    assert!(String::from_utf8(a).unwrap().contains("# seed=9\n"));
}

#[test]
fn hash_tracks_parameters() {
    let hash = |seed: &str| {
        let out = stdout(&run(&["simulate", "--pop-size", "10", "--horizon", "0.5", "--seed", seed]));
        out.lines().next().unwrap().to_string()
    };
    assert_eq!(hash("1"), hash("1"));
    assert_ne!(hash("1"), hash("2"));
}

#[test]
fn config_flags_override_file() {
    let cfg = config();
    let out = stdout(&run(&["simulate", "--config", cfg.to_str().unwrap(), "--seed", "3", "--horizon", "0.5"]));
    assert!(out.contains("\n# seed=3\n"));
}

#[test]
fn json_outputs_carry_hash_and_seed() {
    let out = stdout(&run(&["cramer", "--start", "0.6,0.3,0.1", "--direction", "0.1,-0.2,0.1"]));
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(v["seed"], 0);
    assert!(v["result"]["cramer"]["value"].as_f64().unwrap() > 0.0);
}

#[test]
fn path_cost_of_mean_dynamic_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("path.csv");
    let o = run(&["mean-dynamic", "--horizon", "1", "--dt", "0.01", "--out", p.to_str().unwrap()]);
    assert!(o.status.success());
    let out = stdout(&run(&["path-cost", "--path", p.to_str().unwrap()]));
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    let cost = v["result"]["value"].as_f64().unwrap();
    assert!(cost.abs() < 1e-3, "cost {cost}");
}

#[test]
fn relative_game_path_resolves_against_config() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("game.json"),
        r#"{"variant":"congestion","facilities":[[0,2],[1,1]],"usage":[[1,0],[0,1]]}"#,
    )
    .unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"schema_version":1,"game":"game.json","protocol":"logit:0.25","pop_size":30}"#).unwrap();
    let out = stdout(&run(&["stationary", "--config", cfg.to_str().unwrap()]));
    let mass: f64 = rows(&out).iter().map(|r| r[2]).sum();
    assert!((mass - 1.0).abs() < 1e-12);
}

#[test]
fn bad_inputs_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        r#"{"schema_version":2}"#,
        r#"{"schema_version":1,"colour":"red"}"#,
        r#"{"schema_version":1,"game":"missing.json"}"#,
        r#"{"schema_version":1,"horizon":-1}"#,
        "not json",
    ];
    for (i, text) in cases.iter().enumerate() {
        let cfg = dir.path().join(format!("c{i}.json"));
        std::fs::write(&cfg, text).unwrap();
        let o = run(&["simulate", "--config", cfg.to_str().unwrap()]);
        assert!(!o.status.success(), "accepted {text}");
        assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
    }
    assert!(!run(&["no-such-command"]).status.success());
    assert!(!run(&["rest-point", "--protocol", "logit:-1"]).status.success());
    assert!(!run(&["cramer"]).status.success());
}

#[test]
fn bad_worker_env_is_rejected() {
    let o = bin().arg("verify").env("EVO_LDP_WORKERS", "many").output().unwrap();
    assert!(!o.status.success());
}

#[test]
fn verify_passes() {
    let out = stdout(&run(&["verify"]));
    assert!(out.lines().all(|l| l.starts_with("PASS")), "{out}");
}

#[test]
fn laplace_dp_rows() {
    let out = stdout(&run(&[
        "laplace-dp",
        "--game",
        "two-links",
        "--start",
        "0.6,0.4",
        "--target",
        "0.2,0.8",
        "--pop-sizes",
        "10,20",
        "--knots",
        "4",
        "--restarts",
        "1",
    ]));
    for r in rows(&out) {
        assert!((r[1] - r[2]).abs() < 1e-10);
    }
}
