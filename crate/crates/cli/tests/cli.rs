//! End-to-end runs of the `effrank` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use effrank::experiments::BestCircuit;
use effrank::formats::{CircuitJson, DatasetJson, TokensJson};
use effrank_core::ansatz::chain_blocks;
use effrank_core::data::make_dataset;

fn effrank(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_effrank"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(path: &Path, text: &str) {
    fs::write(path, text).unwrap();
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn error_json(out: &Output) -> serde_json::Value {
    assert!(!out.status.success());
    serde_json::from_slice(&out.stderr).expect("stderr is one JSON document")
}

const TINY_AGENT: &str = r#""agent": {"length": 4, "max_rounds": 6, "threshold": 1000,
    "embed_dim": 8, "layers": 1, "heads": 2, "ff_dim": 8, "batch_size": 16, "checkpoint_every": 3}"#;

#[test]
fn invalid_configs_exit_nonzero_with_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    for text in [
        r#"{"n": 7}"#,
        r#"{"protocol": "Q"}"#,
        r#"{"agent": {"heads": 3}}"#,
        r#"{"unknown_field": true}"#,
        "not json",
    ] {
        write(&cfg, text);
        let out = effrank(&["rl-search", "--config", cfg.to_str().unwrap()]);
        let err = error_json(&out);
        assert_eq!(err["error"]["kind"], "invalid_config", "{text}");
        assert_eq!(out.status.code(), Some(2));
        assert!(err["error"]["message"].as_str().unwrap().len() > 3);
    }
    let out = effrank(&["sweep-depth", "--method", "bogus"]);
    assert_eq!(error_json(&out)["error"]["kind"], "invalid_config");
    let out = effrank(&["sweep-depth", "--draws", "0"]);
    assert_eq!(error_json(&out)["error"]["kind"], "invalid_config");
}

#[test]
fn rank_reads_circuit_and_dataset_files() {
    let dir = tempfile::tempdir().unwrap();
    let circuit = dir.path().join("c.json");
    let tokens = dir.path().join("t.json");
    let data = dir.path().join("d.json");
    let c = chain_blocks(2, 1).unwrap();
    fs::write(&circuit, serde_json::to_string(&CircuitJson::from_circuit(&c)).unwrap()).unwrap();
    fs::write(&tokens, serde_json::to_string(&TokensJson { n: 2, tokens: vec![0, 3, 1] }).unwrap()).unwrap();
    let d = make_dataset(2, 4, 3).unwrap();
    fs::write(&data, serde_json::to_string(&DatasetJson::from_dataset(&d)).unwrap()).unwrap();

    let a = stdout_json(&effrank(&[
        "rank",
        "--circuit",
        circuit.to_str().unwrap(),
        "--dataset",
        data.to_str().unwrap(),
        "--protocol",
        "XYZ",
    ]));
    let b = stdout_json(&effrank(&[
        "rank",
        "--circuit",
        tokens.to_str().unwrap(),
        "--dataset",
        data.to_str().unwrap(),
        "--protocol",
        "XYZ",
    ]));
    assert_eq!(a, b);
    assert_eq!(a["p"], 6);
    assert_eq!(a["d_n"], 15);
    assert!(a["kappa"].as_u64().unwrap() <= 6);

    let fd = stdout_json(&effrank(&[
        "rank",
        "--circuit",
        tokens.to_str().unwrap(),
        "--dataset",
        data.to_str().unwrap(),
        "--protocol",
        "XYZ",
        "--method",
        "fd",
    ]));
    assert_eq!(fd["kappa"], a["kappa"]);

    // A state that is not PSD is rejected on load.
    let mut broken = DatasetJson::from_dataset(&d);
    broken.states[0][0] = [-1.0, 0.0];
    fs::write(&data, serde_json::to_string(&broken).unwrap()).unwrap();
    let out = effrank(&["rank", "--circuit", tokens.to_str().unwrap(), "--dataset", data.to_str().unwrap()]);
    assert_eq!(error_json(&out)["error"]["kind"], "invalid_file");
}

#[test]
fn sweeps_write_deterministic_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    write(&cfg, r#"{"n": 2, "m_max": 3}"#);
    let run = |sub: &str, out: &Path| {
        stdout_json(&effrank(&[sub, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]));
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run("sweep-depth", &a);
    run("sweep-depth", &b);
    let csv_a = fs::read_to_string(a.join("sweep_depth.csv")).unwrap();
    assert_eq!(csv_a, fs::read_to_string(b.join("sweep_depth.csv")).unwrap());
    let lines: Vec<&str> = csv_a.lines().collect();
    assert_eq!(lines[0], "n,m,p,kappa,kappa_over_dn,eta");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("2,1,6,"));

    write(&cfg, r#"{"n": 1, "num_states": [1, 2, 4]}"#);
    run("sweep-data", &a);
    let csv = fs::read_to_string(a.join("sweep_data.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "n,protocol,num_states,kappa,d_n");
    assert_eq!(lines.len(), 1 + 9);
    assert_eq!(lines[9], "1,XYZ,4,3,3");
}

#[test]
fn searches_share_the_round_log_schema() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    write(&cfg, &format!(r#"{{"n": 2, "dataset": {{"size": 3}}, {TINY_AGENT}}}"#));
    let out = dir.path().join("out");
    let args = |sub: &'static str| [sub, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "4"];

    let best: BestCircuit = serde_json::from_value(stdout_json(&effrank(&args("rl-search")))).unwrap();
    let rl = fs::read_to_string(out.join("rl_rounds.csv")).unwrap();
    let header = "round,mean_kappa,max_kappa_round,kappa_max_running,score_sbar,loss";
    assert_eq!(rl.lines().next().unwrap(), header);
    assert_eq!(rl.lines().count(), 7);
    assert!(best.budget_exhausted);

    // The emitted circuit re-decodes and re-scores to the logged κ.
    let file = out.join("rl_best.json");
    let rescored = stdout_json(&effrank(&[
        "rank",
        "--circuit",
        file.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--protocol",
        "X",
    ]));
    assert_eq!(rescored["kappa"].as_u64().unwrap() as usize, best.kappa);
    assert_eq!(best.circuit.to_circuit().unwrap(), effrank_core::ansatz::decode_tokens(
        &effrank_core::ansatz::TokenSequence::new(2, best.tokens.clone()).unwrap()).unwrap());

    stdout_json(&effrank(&args("random-search")));
    let rnd = fs::read_to_string(out.join("random_rounds.csv")).unwrap();
    assert_eq!(rnd.lines().next().unwrap(), header);
    assert!(rnd.lines().nth(1).unwrap().ends_with(','));
}

#[test]
fn rl_search_is_byte_identical_and_resumable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    let body = format!(r#""n": 2, "dataset": {{"size": 3}}, {TINY_AGENT}"#);
    write(&cfg, &format!("{{{body}}}"));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        stdout_json(&effrank(&["rl-search", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]));
    }
    let full = fs::read(a.join("rl_rounds.csv")).unwrap();
    assert_eq!(full, fs::read(b.join("rl_rounds.csv")).unwrap());
    assert_eq!(fs::read(a.join("rl_best.json")).unwrap(), fs::read(b.join("rl_best.json")).unwrap());

    // Stop after 3 rounds, then resume from the checkpoint.
    let c = dir.path().join("c");
    let short = body.replace(r#""max_rounds": 6"#, r#""max_rounds": 3"#);
    write(&cfg, &format!("{{{short}}}"));
    stdout_json(&effrank(&["rl-search", "--config", cfg.to_str().unwrap(), "--out", c.to_str().unwrap()]));
    let ck = c.join("rl_checkpoint.json");
    let resumed = body.replace(
        r#""checkpoint_every": 3"#,
        &format!(r#""checkpoint_every": 3, "resume": {}"#, serde_json::to_string(&ck).unwrap()),
    );
    write(&cfg, &format!("{{{resumed}}}"));
    stdout_json(&effrank(&["rl-search", "--config", cfg.to_str().unwrap(), "--out", c.to_str().unwrap()]));
    assert_eq!(fs::read(c.join("rl_rounds.csv")).unwrap(), full);
    assert_eq!(fs::read(c.join("rl_best.json")).unwrap(), fs::read(a.join("rl_best.json")).unwrap());
}
