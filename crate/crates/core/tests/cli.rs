use std::fs;
use std::path::Path;

use rhino::cli::{run, EXIT_DATA, EXIT_OK, EXIT_USAGE};

fn call(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut argv = vec!["rhino"];
    argv.extend_from_slice(args);
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

#[test]
fn pipeline_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("gen.json"),
        r#"{"num_nodes": 3, "max_lag": 1, "length": 30, "burn_in": 10, "num_series": 3}"#,
    )
    .unwrap();
    fs::write(
        d.join("train.json"),
        r#"{"max_lag": 1, "hidden": 8, "inner_steps": 20, "stages": 2, "batch_size": 16}"#,
    )
    .unwrap();
    let out = p(d, "gen");
    let (code, _, err) = call(&["generate", "--config", &p(d, "gen.json"), "--out", &out, "--seed", "3"]);
    assert_eq!(code, EXIT_OK, "{err}");
    let data = p(d, "gen/data.csv");
    let model = p(d, "m.model");
    let (code, _, err) = call(&["train", "--data", &data, "--config", &p(d, "train.json"), "--out", &model, "--seed", "1"]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(d.join("m.model.log.jsonl").exists());
    let graph = p(d, "graph.csv");
    let probs = p(d, "probs.csv");
    assert_eq!(call(&["discover", "--model", &model, "--out", &graph]).0, EXIT_OK);
    assert_eq!(call(&["discover", "--model", &model, "--out", &probs, "--probabilities"]).0, EXIT_OK);
    assert_eq!(call(&["discover", "--model", &model, "--out", &p(d, "s.csv"), "--summary"]).0, EXIT_OK);
    let (code, report, _) = call(&["evaluate", "--pred", &graph, "--truth", &p(d, "gen/truth.csv"), "--scores", &probs]);
    assert_eq!(code, EXIT_OK);
    let v: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert!(v["temporal"]["tp"].is_u64());
    fs::write(
        d.join("q.json"),
        r#"{"history": [[0.0, 0.1, 0.2], [0.3, 0.2, 0.1]], "intervention": 0, "treatment": 1.0,
            "reference": -1.0, "target": 2, "horizon": 1, "graphs": 2, "rollouts": 10}"#,
    )
    .unwrap();
    let (code, text, err) = call(&["cate", "--model", &model, "--query", &p(d, "q.json")]);
    assert_eq!(code, EXIT_OK, "{err}");
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!(v["estimate"].is_f64() && v["query"]["target"] == 2);
}

#[test]
fn unknown_flag_is_usage_error() {
    let (code, _, err) = call(&["train", "--bogus"]);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("Usage"));
}

#[test]
fn mismatched_graphs_are_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("a.csv"), "# temporal nodes=2 max_lag=1\ntau,src,dst,value\n1,0,1,1\n").unwrap();
    fs::write(d.join("b.csv"), "# temporal nodes=3 max_lag=1\ntau,src,dst,value\n1,0,1,1\n").unwrap();
    let (code, _, _) = call(&["evaluate", "--pred", &p(d, "a.csv"), "--truth", &p(d, "b.csv")]);
    assert_eq!(code, EXIT_DATA);
    assert_eq!(call(&["train", "--data", &p(d, "missing.csv"), "--out", &p(d, "m")]).0, EXIT_DATA);
}
