//! Room-connectivity graph: rooms with their geometry and initial
//! population, and directed edges carrying the share of a room's
//! population that moves on to the next room.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::SimError;
use crate::params::RoomSpec;

pub const GRAPH_VERSION: u32 = 1;
/// Allowed deviation of a room's outgoing fractions from 1.
pub const FRACTION_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Pos {
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoomNode {
    pub id: String,
    pub width: f64,
    pub length: f64,
    /// Total door width; several doors are summed.
    pub exit_size: f64,
    pub initial_population: u32,
    /// Editor placement only.
    #[serde(default)]
    pub pos: Pos,
}

impl RoomNode {
    pub fn new(id: impl Into<String>, width: f64, length: f64, exit_size: f64, initial_population: u32) -> Self {
        RoomNode { id: id.into(), width, length, exit_size, initial_population, pos: Pos::default() }
    }

    pub fn spec(&self, input_flow: f64, flow_duration: f64) -> RoomSpec {
        RoomSpec::new(self.width, self.length, self.exit_size, input_flow, flow_duration, self.initial_population)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowEdge {
    pub from: String,
    pub to: String,
    /// Share of `from`'s population that moves to `to`, in (0, 1].
    pub fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentGraph {
    pub version: u32,
    pub rooms: Vec<RoomNode>,
    #[serde(default)]
    pub edges: Vec<FlowEdge>,
}

/// One problem found by [`validate`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    NoRooms,
    DuplicateId { id: String },
    InvalidRoom { id: String, reason: String },
    DanglingEdge { from: String, to: String, missing: String },
    SelfLoop { id: String },
    BadFraction { from: String, to: String, fraction: f64 },
    FractionSum { id: String, sum: f64 },
    Cycle { rooms: Vec<String> },
    NoExitRoom,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoRooms => write!(f, "graph has no rooms"),
            Violation::DuplicateId { id } => write!(f, "room id '{id}' is used more than once"),
            Violation::InvalidRoom { id, reason } => write!(f, "room '{id}': {reason}"),
            Violation::DanglingEdge { from, to, missing } => {
                write!(f, "edge {from} -> {to} refers to unknown room '{missing}'")
            }
            Violation::SelfLoop { id } => write!(f, "room '{id}' has an edge to itself"),
            Violation::BadFraction { from, to, fraction } => {
                write!(f, "edge {from} -> {to} has fraction {fraction}, expected a value in (0, 1]")
            }
            Violation::FractionSum { id, sum } => write!(f, "outgoing fractions of room '{id}' sum to {sum}, not 1"),
            Violation::Cycle { rooms } => write!(f, "rooms {} form a cycle", rooms.join(", ")),
            Violation::NoExitRoom => write!(f, "graph has no exit room (every room leads somewhere)"),
        }
    }
}

const ROOM_FIELDS: [&str; 5] = ["id", "width", "length", "exit_size", "initial_population"];
const EDGE_FIELDS: [&str; 3] = ["from", "to", "fraction"];

impl EnvironmentGraph {
    pub fn new(rooms: Vec<RoomNode>, edges: Vec<FlowEdge>) -> Self {
        EnvironmentGraph { version: GRAPH_VERSION, rooms, edges }
    }

    /// Parses a graph document. Syntax errors carry line and column;
    /// missing or mistyped fields name the room or edge they belong to.
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let doc: Value = serde_json::from_str(text).map_err(|e| {
            SimError::Format(format!("graph JSON syntax error at line {}, column {}: {e}", e.line(), e.column()))
        })?;
        let obj = doc.as_object().ok_or_else(|| SimError::Format("graph document must be a JSON object".into()))?;
        match obj.get("version") {
            Some(v) if v.as_u64() == Some(GRAPH_VERSION as u64) => {}
            Some(v) => {
                return Err(SimError::Format(format!("unsupported graph version {v} (expected {GRAPH_VERSION})")))
            }
            None => return Err(SimError::Format("graph document is missing field `version`".into())),
        }
        let rooms = obj
            .get("rooms")
            .and_then(Value::as_array)
            .ok_or_else(|| SimError::Format("graph document needs a `rooms` array".into()))?;
        for (i, room) in rooms.iter().enumerate() {
            let name =
                room.get("id").and_then(Value::as_str).map(|s| format!("room '{s}'")).unwrap_or(format!("room #{i}"));
            check_fields(room, &ROOM_FIELDS, &name)?;
        }
        if let Some(edges) = obj.get("edges") {
            let edges = edges.as_array().ok_or_else(|| SimError::Format("`edges` must be an array".into()))?;
            for (i, edge) in edges.iter().enumerate() {
                check_fields(edge, &EDGE_FIELDS, &format!("edge #{i}"))?;
            }
        }
        serde_json::from_value(doc).map_err(|e| SimError::Format(format!("graph schema error: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serializes")
    }

    pub fn room(&self, id: &str) -> Option<&RoomNode> {
        self.rooms.iter().find(|r| r.id == id)
    }

    /// Edges leading into `id`.
    pub fn incoming<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a FlowEdge> + 'a {
        self.edges.iter().filter(move |e| e.to == id)
    }

    pub fn outgoing<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a FlowEdge> + 'a {
        self.edges.iter().filter(move |e| e.from == id)
    }

    /// Rooms with no outgoing edge: the ones agents leave the building from.
    pub fn exit_rooms(&self) -> Vec<&RoomNode> {
        self.rooms.iter().filter(|r| self.outgoing(&r.id).next().is_none()).collect()
    }

    pub fn total_population(&self) -> u64 {
        self.rooms.iter().map(|r| r.initial_population as u64).sum()
    }

    /// All violations, or `Ok` for a valid graph.
    pub fn validated(&self) -> Result<(), SimError> {
        let v = validate(self);
        if v.is_empty() {
            Ok(())
        } else {
            Err(SimError::InvalidInput(v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")))
        }
    }
}

fn check_fields(item: &Value, fields: &[&str], name: &str) -> Result<(), SimError> {
    let obj = item.as_object().ok_or_else(|| SimError::Format(format!("{name} must be a JSON object")))?;
    for f in fields {
        if !obj.contains_key(*f) {
            return Err(SimError::Format(format!("{name} is missing field `{f}`")));
        }
    }
    for f in fields {
        let v = &obj[*f];
        let ok = match *f {
            "id" | "from" | "to" => v.is_string(),
            "initial_population" => v.as_u64().is_some_and(|n| n <= u32::MAX as u64),
            _ => v.is_number(),
        };
        if !ok {
            let want = match *f {
                "id" | "from" | "to" => "a string",
                "initial_population" => "a non-negative integer",
                _ => "a number",
            };
            return Err(SimError::Format(format!("{name}: field `{f}` must be {want}, got {v}")));
        }
    }
    Ok(())
}

/// Every structural problem of the graph. An empty list means valid.
pub fn validate(g: &EnvironmentGraph) -> Vec<Violation> {
    let mut out = Vec::new();
    if g.rooms.is_empty() {
        out.push(Violation::NoRooms);
        return out;
    }
    let mut seen = BTreeSet::new();
    let mut dup = BTreeSet::new();
    for r in &g.rooms {
        if !seen.insert(r.id.as_str()) {
            dup.insert(r.id.clone());
        }
        if let Err(e) = r.spec(0.0, 0.0).validate_physical() {
            let reason = match e {
                SimError::InvalidInput(m) => m,
                other => other.to_string(),
            };
            out.push(Violation::InvalidRoom { id: r.id.clone(), reason });
        }
    }
    out.extend(dup.into_iter().map(|id| Violation::DuplicateId { id }));

    let mut sums: BTreeMap<&str, f64> = BTreeMap::new();
    for e in &g.edges {
        for end in [&e.from, &e.to] {
            if !seen.contains(end.as_str()) {
                out.push(Violation::DanglingEdge { from: e.from.clone(), to: e.to.clone(), missing: end.clone() });
            }
        }
        if e.from == e.to {
            out.push(Violation::SelfLoop { id: e.from.clone() });
        }
        if !(e.fraction > 0.0 && e.fraction <= 1.0) {
            out.push(Violation::BadFraction { from: e.from.clone(), to: e.to.clone(), fraction: e.fraction });
        }
        *sums.entry(e.from.as_str()).or_default() += e.fraction;
    }
    for (id, sum) in sums {
        if (sum - 1.0).abs() > FRACTION_TOLERANCE {
            out.push(Violation::FractionSum { id: id.to_string(), sum });
        }
    }

    let (_, rest) = kahn(g);
    if !rest.is_empty() {
        out.push(Violation::Cycle { rooms: rest });
    }
    if g.exit_rooms().is_empty() {
        out.push(Violation::NoExitRoom);
    }
    out
}

/// Kahn's algorithm over distinct room ids, always taking the smallest
/// ready id. Returns the order and the ids left over (those on or behind
/// a cycle).
fn kahn(g: &EnvironmentGraph) -> (Vec<String>, Vec<String>) {
    let ids: BTreeSet<&str> = g.rooms.iter().map(|r| r.id.as_str()).collect();
    let mut indegree: BTreeMap<&str, usize> = ids.iter().map(|&id| (id, 0)).collect();
    let mut succ: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for e in &g.edges {
        if ids.contains(e.from.as_str()) && ids.contains(e.to.as_str()) {
            *indegree.get_mut(e.to.as_str()).unwrap() += 1;
            succ.entry(e.from.as_str()).or_default().push(e.to.as_str());
        }
    }
    let mut ready: BTreeSet<&str> = indegree.iter().filter(|(_, &d)| d == 0).map(|(&id, _)| id).collect();
    let mut order = Vec::with_capacity(ids.len());
    while let Some(id) = ready.pop_first() {
        order.push(id.to_string());
        for &next in succ.get(id).map(Vec::as_slice).unwrap_or(&[]) {
            let d = indegree.get_mut(next).unwrap();
            *d -= 1;
            if *d == 0 {
                ready.insert(next);
            }
        }
        indegree.remove(id);
    }
    (order, indegree.into_keys().map(str::to_string).collect())
}

/// Rooms ordered so that each comes after every room feeding it; ties go
/// to the smaller id.
pub fn topo_order(g: &EnvironmentGraph) -> Result<Vec<String>, SimError> {
    let (order, rest) = kahn(g);
    if rest.is_empty() {
        Ok(order)
    } else {
        Err(SimError::InvalidInput(format!("graph has a cycle through {}", rest.join(", "))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn room(id: &str) -> RoomNode {
        RoomNode::new(id, 10.0, 10.0, 2.0, 10)
    }

    fn edge(from: &str, to: &str, fraction: f64) -> FlowEdge {
        FlowEdge { from: from.into(), to: to.into(), fraction }
    }

    #[test]
    fn single_room_is_valid() {
        let g = EnvironmentGraph::new(vec![room("a")], vec![]);
        assert!(validate(&g).is_empty());
        assert_eq!(topo_order(&g).unwrap(), vec!["a"]);
    }

    #[test]
    fn two_cycle_is_reported() {
        let g = EnvironmentGraph::new(vec![room("a"), room("b")], vec![edge("a", "b", 1.0), edge("b", "a", 1.0)]);
        let v = validate(&g);
        assert!(v.contains(&Violation::Cycle { rooms: vec!["a".into(), "b".into()] }));
        assert!(v.contains(&Violation::NoExitRoom));
        assert!(topo_order(&g).is_err());
    }

    #[test]
    fn short_fraction_sum_is_reported() {
        let g = EnvironmentGraph::new(
            vec![room("a"), room("b"), room("c")],
            vec![edge("a", "b", 0.6), edge("a", "c", 0.3)],
        );
        match validate(&g).as_slice() {
            [Violation::FractionSum { id, sum }] => {
                assert_eq!(id, "a");
                assert!((sum - 0.9).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn diamond_order_breaks_ties_by_id() {
        let g = EnvironmentGraph::new(
            vec![room("d"), room("c"), room("b"), room("a")],
            vec![edge("a", "c", 0.5), edge("a", "b", 0.5), edge("b", "d", 1.0), edge("c", "d", 1.0)],
        );
        assert_eq!(topo_order(&g).unwrap(), vec!["a", "b", "c", "d"]);
    }

    #[test]
    fn missing_field_names_room() {
        let text = r#"{"version":1,"rooms":[{"id":"hall","width":5,"length":4,"initial_population":3}],"edges":[]}"#;
        let msg = EnvironmentGraph::from_json(text).unwrap_err().to_string();
        assert!(msg.contains("exit_size") && msg.contains("hall"), "{msg}");
    }

    #[test]
    fn syntax_error_has_position() {
        let msg = EnvironmentGraph::from_json("{\"version\": 1,\n \"rooms\": [}").unwrap_err().to_string();
        assert!(msg.contains("line 2"), "{msg}");
    }
}
