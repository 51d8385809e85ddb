use std::path::{Path, PathBuf};
use std::process::Command;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

use evac_core::envgraph::{EnvironmentGraph, FlowEdge, RoomNode};
use evac_core::estimator::EstimatorConfig;
use evac_core::mlp::{Activation, MlpModel};
use evac_service::{router, AppState, ServiceConfig};

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn evac(args: &[&str], model: Option<&Path>) -> Run {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_evac"));
    cmd.args(args).env("RUST_LOG", "warn").env_remove("EVAC_MODEL");
    if let Some(m) = model {
        cmd.env("EVAC_MODEL", m);
    }
    let out = cmd.output().expect("evac runs");
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

fn write_model(dir: &Path) -> PathBuf {
    let path = dir.join("model.json");
    MlpModel::new(&[16], Activation::Sigmoid, true, 3).save(&path).unwrap();
    path
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn office() -> EnvironmentGraph {
    let rooms = vec![
        RoomNode::new("desk_a", 8.0, 6.0, 1.0, 14),
        RoomNode::new("desk_b", 8.0, 6.0, 1.0, 9),
        RoomNode::new("corridor", 3.0, 16.0, 2.0, 0),
    ];
    let edges = vec![
        FlowEdge { from: "desk_a".into(), to: "corridor".into(), fraction: 1.0 },
        FlowEdge { from: "desk_b".into(), to: "corridor".into(), fraction: 1.0 },
    ];
    EnvironmentGraph::new(rooms, edges)
}

fn envelope(r: &Run) -> Value {
    serde_json::from_str(&r.stdout).unwrap_or_else(|e| panic!("not JSON ({e}): {}", r.stdout))
}

fn without_clock(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("wall_clock_ms");
    v
}

#[test]
fn no_arguments_is_usage_error() {
    let r = evac(&[], None);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("Usage"));
}

#[test]
fn unknown_subcommand_is_usage_error() {
    assert_eq!(evac(&["fly"], None).code, 2);
    assert_eq!(evac(&["simulate"], None).code, 2);
    assert_eq!(evac(&["simulate", "--room", "1,2,3"], None).code, 2);
}

#[test]
fn missing_graph_reports_envelope() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(dir.path());
    let r = evac(&["--json", "estimate", "--graph", "/nonexistent/g.json"], Some(&model));
    assert_eq!(r.code, 1);
    let v = envelope(&r);
    assert_eq!(v["ok"], false);
    assert_eq!(v["command"], "estimate");
    assert_eq!(v["version"], 1);
}

#[test]
fn invalid_graph_lists_violations() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(dir.path());
    let g = EnvironmentGraph::new(
        vec![RoomNode::new("a", 5.0, 5.0, 1.0, 2)],
        vec![FlowEdge { from: "a".into(), to: "nowhere".into(), fraction: 1.0 }],
    );
    let path = write(dir.path(), "bad.json", &g.to_json());
    let r = evac(&["--json", "estimate", "--graph", path.to_str().unwrap()], Some(&model));
    assert_eq!(r.code, 1);
    let v = envelope(&r);
    assert_eq!(v["details"]["violations"][0]["kind"], "dangling_edge");
    let text = evac(&["estimate", "--graph", path.to_str().unwrap()], Some(&model));
    assert!(text.stderr.contains("nowhere"), "{}", text.stderr);
}

#[test]
fn estimate_matches_service() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(dir.path());
    let doc = office().to_json();
    let path = write(dir.path(), "office.json", &doc);
    let r = evac(&["--json", "estimate", "--graph", path.to_str().unwrap()], Some(&model));
    assert_eq!(r.code, 0, "{}", r.stderr);
    let cli = without_clock(envelope(&r)["data"].take());

    let state = AppState::new(ServiceConfig {
        model: Some(MlpModel::load(&model).unwrap()),
        graphs_dir: dir.path().join("graphs"),
        workers: 1,
        estimator: EstimatorConfig::default(),
    });
    let rt = tokio::runtime::Runtime::new().unwrap();
    let body = rt.block_on(async {
        let req = Request::builder().method(Method::POST).uri("/estimate").body(Body::from(doc)).unwrap();
        let resp = router(state).oneshot(req).await.unwrap();
        assert_eq!(resp.status(), StatusCode::OK);
        resp.into_body().collect().await.unwrap().to_bytes()
    });
    let service = without_clock(serde_json::from_slice(&body).unwrap());
    assert_eq!(cli, service);
}

#[test]
fn estimate_table_lists_rooms() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(dir.path());
    let path = write(dir.path(), "office.json", &office().to_json());
    let r = evac(&["estimate", "--graph", path.to_str().unwrap(), "--table"], Some(&model));
    assert_eq!(r.code, 0, "{}", r.stderr);
    for id in ["desk_a", "desk_b", "corridor"] {
        assert!(r.stdout.contains(id), "{}", r.stdout);
    }
}

#[test]
fn simulate_single_room() {
    let r = evac(&["--json", "--seed", "4", "simulate", "--room", "6,6,1.5,1,2,10"], None);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let v = envelope(&r);
    assert!(v["data"]["metrics"]["tt"].as_f64().unwrap() > 0.0);
    let again = evac(&["--json", "--seed", "4", "simulate", "--room", "6,6,1.5,1,2,10"], None);
    assert_eq!(r.stdout, again.stdout);
}

#[test]
fn validate_walk_passes() {
    let r = evac(&["validate", "--only", "walk"], None);
    assert_eq!(r.code, 0, "{}{}", r.stdout, r.stderr);
    assert!(r.stdout.contains("PASS"));
}

#[test]
fn corpus_train_score_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("rooms.csv");
    let model = dir.path().join("m.json");
    let d = data.to_str().unwrap();
    let m = model.to_str().unwrap();
    assert_eq!(evac(&["gen-dataset", "--count", "12", "--out", d, "--desk-scale"], None).code, 0);
    let r = evac(&["train", "--data", d, "--hidden", "8", "--epochs", "3", "--normalize", "--out", m], None);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let r = evac(&["--json", "score", "--data", d, "--holdout", "4"], Some(&model));
    assert_eq!(r.code, 0, "{}", r.stderr);
    let v = envelope(&r);
    let scored = v["data"]["scored"].as_u64().unwrap();
    assert!(scored > 0 && scored <= 4);
    let f = v["data"]["fraction"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&f));
}

#[test]
fn small_demo_is_repeatable() {
    let args = ["--json", "--seed", "9", "demo", "--count", "40", "--holdout", "10", "--epochs", "3", "--skip-suite"];
    let a = evac(&args, None);
    assert_eq!(a.code, 0, "{}", a.stderr);
    let b = evac(&args, None);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(evac(&["demo", "--count", "10", "--holdout", "10"], None).code, 2);
}
