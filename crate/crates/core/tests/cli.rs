mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use petc_core::config::ProjectConfig;
use petc_core::sdp::{oracle_seed, sampling_oracle};
use petc_core::traffic::TrafficModel;

const SCALAR: &str = r#"
[network]
delta = 1

[earliness]
r = 2
e_ref = 1
bound = 2

[simulation]
duration = 2.0

[[loops]]
a = [[-1.0]]
b = [[1.0]]
k = [[-1.0]]
rho = 0.5
h = "1/10"
k_bar = 10
initial_state = [1.0]
"#;

fn petc(config: &Path, out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_petc"))
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("run petc")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write_config(dir: &Path, cfg: &ProjectConfig) -> std::path::PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, cfg.to_toml().unwrap()).unwrap();
    path
}

#[test]
fn reactor_pipeline_and_reruns_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::reactor_config_path();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = petc(&cfg, out, &["abstract"]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in ["loop1_relation.csv", "loop2_relation.csv", "loop1_model.json", "loop2_model.json", "abstraction_report.json"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name} differs");
    }

    assert_eq!(code(&petc(&cfg, &a, &["synthesize"])), 0);
    assert_eq!(code(&petc(&cfg, &a, &["simulate"])), 0);
    assert_eq!(code(&petc(&cfg, &b, &["synthesize"])), 0);
    assert_eq!(code(&petc(&cfg, &b, &["simulate"])), 0);
    for name in ["strategy.txt", "synthesis_report.json", "trace.csv", "events.csv", "sim_stats.json"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name} differs");
    }

    assert_eq!(code(&petc(&cfg, &a, &["export-uppaal"])), 0);
    let xml = fs::read_to_string(a.join("network.xml")).unwrap();
    assert_eq!(xml.matches("<location ").count(), 14 + 13 + 3);
    assert!(xml.contains("system Loop1, Loop2, Network;"));

    let rel = fs::read_to_string(a.join("loop1_relation.csv")).unwrap();
    assert!(rel.starts_with("loop_id,"));
}

#[test]
fn scalar_loop_has_one_region() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("scalar.toml");
    fs::write(&cfg, SCALAR).unwrap();
    assert_eq!(code(&petc(&cfg, dir.path(), &["abstract"])), 0);
    let m = TrafficModel::from_json(&fs::read_to_string(dir.path().join("loop1_model.json")).unwrap()).unwrap();
    assert_eq!(m.regions().len(), 1);
    assert_eq!(code(&petc(&cfg, dir.path(), &["synthesize"])), 0);
    assert_eq!(code(&petc(&cfg, dir.path(), &["simulate"])), 0);
    assert_eq!(code(&petc(&cfg, dir.path(), &["validate"])), 0);
}

#[test]
fn phase_locked_loops_cannot_be_scheduled() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ProjectConfig::from_toml(SCALAR).unwrap();
    cfg.abstraction.allow_sub_miet_early = false;
    cfg.loops.push(cfg.loops[0].clone());
    let path = write_config(dir.path(), &cfg);
    assert_eq!(code(&petc(&path, dir.path(), &["abstract"])), 0);
    let o = petc(&path, dir.path(), &["synthesize"]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(dir.path().join("strategy.txt").exists());
}

#[test]
fn validate_catches_a_missing_edge() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = common::reactor_config();
    cfg.abstraction.oracle_samples = 2000;
    cfg.abstraction.conformance_states = 50;
    let path = write_config(dir.path(), &cfg);
    assert_eq!(code(&petc(&path, dir.path(), &["abstract"])), 0);

    let l = &common::reactor_loops()[0];
    let (tables, spec) = (&l.prepared.tables, &l.prepared.spec);
    let model_path = dir.path().join("loop1_model.json");
    let mut model = TrafficModel::from_json(&fs::read_to_string(&model_path).unwrap()).unwrap();
    // drop a trigger edge the oracle is known to observe
    let i = spec.k_min + 3;
    let seen = sampling_oracle(tables, spec, i, i, 2000, oracle_seed(cfg.abstraction.oracle_seed, 1, i, i)).unwrap();
    let victim = *seen.iter().next().unwrap();
    assert!(model.trigger_successors(i).len() > 1);
    assert!(model.trigger_edges.remove(&(i, victim)));
    fs::write(&model_path, model.to_json().unwrap()).unwrap();

    let o = petc(&path, dir.path(), &["validate"]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stdout));
    let sweep = fs::read_to_string(dir.path().join("oracle_sweep.csv")).unwrap();
    assert!(sweep.lines().any(|line| line.starts_with(&format!("1,{i},{i},")) && line.ends_with(&victim.to_string())));
}

#[test]
fn bad_inputs_exit_with_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("broken.toml");
    fs::write(&cfg, SCALAR.replace("bound = 2", "bound = 0")).unwrap();
    assert_eq!(code(&petc(&cfg, dir.path(), &["abstract"])), 1);
    fs::write(&cfg, SCALAR).unwrap();
    // synthesize before abstract: models are missing
    assert_eq!(code(&petc(&cfg, dir.path(), &["synthesize"])), 1);
    assert_eq!(code(&petc(&dir.path().join("missing.toml"), dir.path(), &["abstract"])), 1);
}
