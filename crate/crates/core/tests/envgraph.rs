use evac_core::envgraph::{topo_order, validate, EnvironmentGraph, FlowEdge, RoomNode, Violation};
use evac_core::harness::compare::nightclub_graph;
use evac_core::SimError;

fn room(id: &str, pop: u32) -> RoomNode {
    RoomNode::new(id, 10.0, 10.0, 2.0, pop)
}

fn edge(from: &str, to: &str, fraction: f64) -> FlowEdge {
    FlowEdge { from: from.into(), to: to.into(), fraction }
}

#[test]
fn cycle_is_reported() {
    let g = EnvironmentGraph::new(
        vec![room("a", 5), room("b", 0), room("c", 0), room("out", 0)],
        vec![edge("a", "b", 1.0), edge("b", "c", 0.5), edge("b", "out", 0.5), edge("c", "a", 1.0)],
    );
    let v = validate(&g);
    assert!(v.iter().any(|x| matches!(x, Violation::Cycle { rooms } if ["a", "b", "c"].iter().all(|id| rooms.iter().any(|r| r == id)))), "{v:?}");
    assert!(topo_order(&g).is_err());
}

#[test]
fn dangling_edge_names_missing_room() {
    let g = EnvironmentGraph::new(vec![room("a", 5)], vec![edge("a", "ghost", 1.0)]);
    let v = validate(&g);
    assert!(
        v.contains(&Violation::DanglingEdge { from: "a".into(), to: "ghost".into(), missing: "ghost".into() }),
        "{v:?}"
    );
}

#[test]
fn fractions_must_sum_to_one() {
    let g = EnvironmentGraph::new(
        vec![room("a", 5), room("b", 0), room("c", 0)],
        vec![edge("a", "b", 0.5), edge("a", "c", 0.3)],
    );
    let v = validate(&g);
    assert!(v
        .iter()
        .any(|x| matches!(x, Violation::FractionSum { id, sum } if id == "a" && (sum - 0.8).abs() < 1e-12)));
}

#[test]
fn split_flow_is_valid() {
    let g = EnvironmentGraph::new(
        vec![room("a", 5), room("b", 0), room("c", 0)],
        vec![edge("a", "b", 0.25), edge("a", "c", 0.75)],
    );
    assert!(validate(&g).is_empty());
    let order = topo_order(&g).unwrap();
    assert_eq!(order[0], "a");
}

#[test]
fn graph_without_exit_room() {
    let g = EnvironmentGraph::new(vec![room("a", 1), room("b", 1)], vec![edge("a", "b", 1.0), edge("b", "a", 1.0)]);
    assert!(validate(&g).contains(&Violation::NoExitRoom));
}

#[test]
fn empty_and_duplicate() {
    assert_eq!(validate(&EnvironmentGraph::new(vec![], vec![])), vec![Violation::NoRooms]);
    let g = EnvironmentGraph::new(vec![room("a", 1), room("a", 2)], vec![]);
    assert!(validate(&g).contains(&Violation::DuplicateId { id: "a".into() }));
}

#[test]
fn syntax_error_has_position() {
    let text = "{\n  \"version\": 1,\n  \"rooms\": [ oops ]\n}";
    match EnvironmentGraph::from_json(text) {
        Err(SimError::Format(m)) => assert!(m.contains("line 3"), "{m}"),
        other => panic!("expected a format error, got {other:?}"),
    }
}

#[test]
fn missing_field_names_room() {
    let text = r#"{"version": 1, "rooms": [{"id": "hall", "width": 5, "length": 5, "initial_population": 3}]}"#;
    let err = EnvironmentGraph::from_json(text).unwrap_err().to_string();
    assert!(err.contains("hall") && err.contains("exit_size"), "{err}");
}

#[test]
fn wrong_version_rejected() {
    let text = r#"{"version": 9, "rooms": []}"#;
    assert!(EnvironmentGraph::from_json(text).unwrap_err().to_string().contains("version"));
}

#[test]
fn json_round_trip() {
    let g = EnvironmentGraph::new(vec![room("a", 5), room("b", 0)], vec![edge("a", "b", 1.0)]);
    assert_eq!(EnvironmentGraph::from_json(&g.to_json()).unwrap(), g);
}

#[test]
fn nightclub_validates() {
    let g = nightclub_graph().unwrap();
    assert!(validate(&g).is_empty());
    assert_eq!(g.total_population(), 296);
    assert!(!g.exit_rooms().is_empty());
}
