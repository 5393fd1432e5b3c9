use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn gapkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gapkit")).args(args).env_remove("GAPKIT_CONFIG").output().unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("gapkit-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn json_of(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stderr)))
}

#[test]
fn gen_writes_one_point_per_line() {
    let path = scratch("seq.txt");
    let out = gapkit(&["gen", "--spec", "lattice:1", "--window", "-100,100", "-o", path.to_str().unwrap()]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 201);
    assert_eq!(text.lines().next(), Some("-100"));
}

#[test]
fn gap_certificate_on_unit_lattice() {
    let csv = scratch("gap.csv");
    let out = gapkit(&["gap", "--seq", "lattice:1", "--window", "-1e4,1e4", "--csv", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let doc = json_of(&out);
    let g = doc["result"]["g_estimate"].as_f64().unwrap();
    assert!((5.65..=6.29).contains(&g), "{g}");
    let table = std::fs::read_to_string(&csv).unwrap();
    assert!(table.starts_with("a,sigma_min\n"));
    assert_eq!(table.lines().count(), 49);
}

#[test]
fn fekete_matches_jacobi() {
    let out = gapkit(&["fekete", "-k", "5", "--interval", "-1,1"]);
    assert!(out.status.success());
    let doc = json_of(&out);
    assert!(doc["result"]["max_deviation"].as_f64().unwrap() <= 1e-6);
    assert_eq!(doc["result"]["points"].as_array().unwrap().len(), 5);
}

#[test]
fn reports_embed_invocation_and_config() {
    let out = gapkit(&["density", "--seq", "lattice:2", "--window", "-500,500", "--method", "d1"]);
    let doc = json_of(&out);
    assert_eq!(doc["command"], "density");
    assert_eq!(doc["invocation"][1], "density");
    assert_eq!(doc["config"]["resolution"], "0.001");
    assert!(doc["timestamp"].is_u64());
    let v = doc["result"]["estimates"][0]["value"].as_f64().unwrap();
    assert!((v - 0.5).abs() <= 0.01);
}

#[test]
fn identical_invocations_are_identical() {
    let args = ["density", "--seq", "perturbed:1,0.3", "--window", "-300,300", "--seed", "7"];
    let mut a = json_of(&gapkit(&args));
    let mut b = json_of(&gapkit(&args));
    a["timestamp"] = Value::Null;
    b["timestamp"] = Value::Null;
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn config_file_and_overrides() {
    let cfg = scratch("gapkit.conf");
    std::fs::write(&cfg, "# coarse grid\nresolution = 0.01\nclark.radius = 40\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_gapkit"))
        .args(["clark", "--seq", "lattice:1", "--window", "-60,60", "--targets", "-1,1", "--set", "seed=3"])
        .env("GAPKIT_CONFIG", &cfg)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = json_of(&out);
    assert_eq!(doc["config"]["resolution"], "0.01");
    assert_eq!(doc["config"]["clark.radius"], "40");
    assert_eq!(doc["config"]["seed"], "3");
    assert_eq!(doc["result"]["weights"].as_array().unwrap().len(), 2);

    std::fs::write(&cfg, "no_such_key = 1\n").unwrap();
    let out = gapkit(&["--config", cfg.to_str().unwrap(), "fekete", "-k", "3"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn clark_tables() {
    let w = scratch("clark.csv");
    let p = scratch("profile.csv");
    let out = gapkit(&[
        "clark", "--seq", "lattice:1", "--window", "-500,500", "--R", "400", "--targets", "-3,3",
        "--grid", "0.1,0.9,5", "--csv", w.to_str().unwrap(), "--profile-csv", p.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let weights = std::fs::read_to_string(&w).unwrap();
    assert!(weights.starts_with("n,a_n,delta_n,beta_n,tail_bound\n"));
    assert_eq!(weights.lines().count(), 7);
    let profile = std::fs::read_to_string(&p).unwrap();
    assert!(profile.starts_with("x,beta_branch,exact\n"));
    assert_eq!(profile.lines().count(), 6);
}

#[test]
fn exit_codes() {
    assert_eq!(gapkit(&["nonsense"]).status.code(), Some(2));
    assert_eq!(gapkit(&["density", "--seq", "lattice:1", "--bogus"]).status.code(), Some(2));
    assert_eq!(gapkit(&["density", "--seq", "lattice:-1", "--window", "0,1"]).status.code(), Some(2));
    assert_eq!(gapkit(&["density", "--seq", "lattice:1"]).status.code(), Some(2));

    let out = gapkit(&["partition", "--seq", "lacunary:2", "--window", "-1e4,1e4", "--density", "1"]);
    assert_eq!(out.status.code(), Some(3));
    let doc = json_of(&out);
    assert_eq!(doc["status"], "infeasible");
    assert!(doc["error"].as_str().unwrap().contains("exhausted"));
}

#[test]
fn regularize_and_spread() {
    let out = gapkit(&["regularize", "--seq", "lacunary:2", "--window", "-1e3,1e3", "-c", "4"]);
    assert!(out.status.success());
    let doc = json_of(&out);
    assert!(doc["result"]["outcome"]["max_gap"].as_f64().unwrap() <= 8.0);
    assert!(doc["result"]["added_bm_density"]["value"].as_f64().unwrap() <= 0.25 + 0.05);

    let out = gapkit(&["spread", "--seq", "lattice:0.5", "--window", "0,3", "--interval", "0,20", "-c", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = json_of(&out);
    assert!(doc["result"]["margin"].as_f64().unwrap() >= 0.0);
}
