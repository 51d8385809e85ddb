//! Estimation against simulation for whole environments.
//!
//! A graph has no floor plan, so each room is built as its own rectangle,
//! exactly like a training room: the exit is centered on the far wall and
//! arrivals appear along the opposite wall. Leaving through the exit moves
//! an agent to the entrance of the next room, picked by edge fraction, or
//! out of the building for exit rooms.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envgraph::{EnvironmentGraph, FlowEdge, RoomNode};
use crate::error::SimError;
use crate::estimator::{estimate_environment, EstimatorConfig, RoomModel};
use crate::fixtures;
use crate::params::RoomSpec;
use crate::sim::environment::{bottom_band, GroupDef, Placement, PortalDef, RoomDef, RouteWeight};
use crate::sim::{run_environment, EnvironmentMetrics, EnvironmentScenario, RoomRect, SimConfig, Vec2, DEFAULT_RADIUS};

/// Gap between neighboring rooms in the generated floor plan (m).
const ROOM_GAP: f64 = 2.0;

/// Simulable floor plan for a graph. Rooms are laid out left to right in
/// graph order.
pub fn graph_scenario(graph: &EnvironmentGraph) -> Result<EnvironmentScenario, SimError> {
    graph.validated()?;
    let mut rooms = Vec::with_capacity(graph.rooms.len());
    let mut x = 0.0;
    for r in &graph.rooms {
        rooms.push(RoomDef { id: r.id.clone(), x, y: 0.0, width: r.width, length: r.length });
        x += r.width + ROOM_GAP;
    }
    let rect = |id: &str| {
        let d = rooms.iter().find(|d| d.id == id).expect("validated graph");
        RoomRect::new(id.to_string(), Vec2::new(d.x, d.y), Vec2::new(d.x + d.width, d.y + d.length))
    };
    let exit_of = |r: &RoomNode| {
        let d = rect(&r.id);
        let cx = (d.min.x + d.max.x) / 2.0;
        (Vec2::new(cx - r.exit_size / 2.0, d.max.y), Vec2::new(cx + r.exit_size / 2.0, d.max.y))
    };

    let mut portals = Vec::new();
    let mut choices = Vec::new();
    for r in &graph.rooms {
        let (a, b) = exit_of(r);
        let out: Vec<&FlowEdge> = graph.outgoing(&r.id).collect();
        if out.is_empty() {
            portals.push(PortalDef { id: format!("{}:exit", r.id), from: r.id.clone(), to: None, a, b, entry: None });
            continue;
        }
        for e in out {
            let id = format!("{}->{}", e.from, e.to);
            let entry = bottom_band(&rect(&e.to), DEFAULT_RADIUS);
            portals.push(PortalDef {
                id: id.clone(),
                from: r.id.clone(),
                to: Some(e.to.clone()),
                a,
                b,
                entry: Some(entry),
            });
            choices.push(RouteWeight { room: r.id.clone(), portal: id, fraction: e.fraction });
        }
    }
    let groups = graph
        .rooms
        .iter()
        .filter(|r| r.initial_population > 0)
        .map(|r| GroupDef {
            label: r.id.clone(),
            room: r.id.clone(),
            count: r.initial_population as usize,
            placement: Placement::Spiral,
            route: None,
            max_speed: None,
        })
        .collect();
    Ok(EnvironmentScenario {
        name: "graph".into(),
        rooms,
        portals,
        walls: Vec::new(),
        choices,
        groups,
        flows: Vec::new(),
        routing: Default::default(),
    })
}

/// Simulates a graph through its generated floor plan.
pub fn simulate_graph(graph: &EnvironmentGraph, cfg: &SimConfig) -> Result<EnvironmentMetrics, SimError> {
    run_environment(&graph_scenario(graph)?, cfg)
}

/// Cumulative departures from one room, sampled once per second.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExitTimeline {
    pub room: String,
    /// `counts[k]` agents had left the room by time `k` seconds.
    pub counts: Vec<usize>,
}

/// Full simulation of a graph, optionally next to its estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub metrics: EnvironmentMetrics,
    pub timelines: Vec<ExitTimeline>,
    pub estimated_tt: Option<f64>,
    pub err: Option<f64>,
}

pub fn simulation_report(
    graph: &EnvironmentGraph,
    cfg: &SimConfig,
    model: Option<&dyn RoomModel>,
    est_cfg: &EstimatorConfig,
) -> Result<SimulationReport, SimError> {
    let estimated_tt = model.map(|m| estimate_environment(graph, m, None, est_cfg).map(|e| e.tt_e)).transpose()?;
    let metrics = simulate_graph(graph, cfg)?;
    let seconds = metrics.tt.ceil().max(0.0) as usize;
    let timelines = metrics
        .rooms
        .iter()
        .map(|r| ExitTimeline {
            room: r.id.clone(),
            counts: (0..=seconds).map(|k| r.departures.iter().filter(|&&t| t <= k as f64).count()).collect(),
        })
        .collect();
    let err = estimated_tt.filter(|_| !metrics.censored && metrics.tt > 0.0).map(|e| relative_error(e, metrics.tt));
    Ok(SimulationReport { metrics, timelines, estimated_tt, err })
}

/// `(estimate - simulated) / simulated`.
pub fn relative_error(estimated: f64, simulated: f64) -> f64 {
    (estimated - simulated) / simulated
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonCase {
    pub name: String,
    /// Population layout label, e.g. `front_loaded` or `distributed`.
    #[serde(default)]
    pub variant: String,
    pub graph: EnvironmentGraph,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub name: String,
    pub variant: String,
    pub rooms: usize,
    pub agents: u64,
    pub simulated_tt: f64,
    pub estimated_tt: f64,
    /// Absent when the simulation hit the time limit.
    pub err: Option<f64>,
    pub censored: bool,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub cases: Vec<CaseResult>,
    /// Mean and standard deviation of |Err| over uncensored cases.
    pub mean_abs_err: f64,
    pub std_abs_err: f64,
    /// Mean |Err| per variant label.
    pub by_variant: Vec<(String, f64)>,
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn run_case(
    case: &ComparisonCase,
    model: &(dyn RoomModel + Sync),
    cfg: &SimConfig,
    est_cfg: &EstimatorConfig,
) -> Result<CaseResult, SimError> {
    let est = estimate_environment(&case.graph, model, None, est_cfg)?;
    let sim = simulate_graph(&case.graph, cfg)?;
    let err = (!sim.censored && sim.tt > 0.0).then(|| relative_error(est.tt_e, sim.tt));
    Ok(CaseResult {
        name: case.name.clone(),
        variant: case.variant.clone(),
        rooms: case.graph.rooms.len(),
        agents: case.graph.total_population(),
        simulated_tt: sim.tt,
        estimated_tt: est.tt_e,
        err,
        censored: sim.censored,
        warnings: est.warnings,
    })
}

/// Estimates and simulates every case (in parallel) and aggregates the
/// relative errors.
pub fn compare_environments(
    cases: &[ComparisonCase],
    model: &(dyn RoomModel + Sync),
    cfg: &SimConfig,
    est_cfg: &EstimatorConfig,
) -> Result<ComparisonReport, SimError> {
    let results = cases.par_iter().map(|c| run_case(c, model, cfg, est_cfg)).collect::<Result<Vec<_>, _>>()?;
    let abs: Vec<f64> = results.iter().filter_map(|r| r.err.map(f64::abs)).collect();
    let (mean_abs_err, std_abs_err) = mean_std(&abs);
    let mut variants: Vec<String> = results.iter().map(|r| r.variant.clone()).collect();
    variants.sort();
    variants.dedup();
    let by_variant = variants
        .into_iter()
        .map(|v| {
            let errs: Vec<f64> =
                results.iter().filter(|r| r.variant == v).filter_map(|r| r.err.map(f64::abs)).collect();
            let m = mean_std(&errs).0;
            (v, m)
        })
        .collect();
    Ok(ComparisonReport { cases: results, mean_abs_err, std_abs_err, by_variant })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Suite {
    pub cases: Vec<ComparisonCase>,
}

impl Suite {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let doc: serde_json::Value =
            serde_json::from_str(text).map_err(|e| SimError::Format(format!("suite file: {e}")))?;
        let cases = doc
            .get("cases")
            .and_then(|c| c.as_array())
            .ok_or_else(|| SimError::Format("suite file needs a `cases` array".into()))?;
        let mut out = Vec::with_capacity(cases.len());
        for (i, c) in cases.iter().enumerate() {
            let name = c.get("name").and_then(|n| n.as_str()).unwrap_or("").to_string();
            let variant = c.get("variant").and_then(|n| n.as_str()).unwrap_or("").to_string();
            let graph = c.get("graph").ok_or_else(|| SimError::Format(format!("suite case #{i} has no graph")))?;
            let graph = EnvironmentGraph::from_json(&graph.to_string())
                .map_err(|e| SimError::Format(format!("suite case '{name}': {e}")))?;
            out.push(ComparisonCase { name, variant, graph });
        }
        Ok(Suite { cases: out })
    }

    /// The bundled ten-environment suite, both population variants.
    pub fn bundled() -> Result<Self, SimError> {
        let text = fixtures::load("suite/suite.json")
            .ok_or_else(|| SimError::Format("missing fixture suite/suite.json".into()))?;
        Suite::from_json(&text)
    }
}

/// The bundled multi-floor venue graph.
pub fn nightclub_graph() -> Result<EnvironmentGraph, SimError> {
    let text = fixtures::load("graphs/nightclub.json")
        .ok_or_else(|| SimError::Format("missing fixture graphs/nightclub.json".into()))?;
    EnvironmentGraph::from_json(&text)
}

/// Timings of the venue drill (s): real drill, this method, and two
/// comparison simulators, with their errors against the drill.
pub const NIGHTCLUB_REFERENCE: [(&str, f64); 4] =
    [("drill", 175.0), ("estimate", 142.0), ("simulator_a", 183.0), ("simulator_b", 176.0)];
pub const NIGHTCLUB_REFERENCE_ERRORS: [(&str, f64); 3] =
    [("estimate", -0.1885), ("simulator_a", 0.0457), ("simulator_b", 0.0057)];

/// `n` copies of `room` in a line, all population in the first.
pub fn replicate_chain(room: &RoomSpec, n: usize) -> Result<EnvironmentGraph, SimError> {
    if n < 3 || n.is_multiple_of(2) {
        return Err(SimError::InvalidInput(format!("chain length must be odd and at least 3, got {n}")));
    }
    let rooms = (0..n)
        .map(|k| {
            RoomNode::new(
                format!("r{k:02}"),
                room.width,
                room.length,
                room.exit_size,
                if k == 0 { room.initial_population } else { 0 },
            )
        })
        .collect();
    let edges =
        (1..n).map(|k| FlowEdge { from: format!("r{:02}", k - 1), to: format!("r{k:02}"), fraction: 1.0 }).collect();
    Ok(EnvironmentGraph::new(rooms, edges))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainRow {
    pub rooms: usize,
    pub simulated_tt: f64,
    pub estimated_tt: f64,
    pub err: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    pub room: RoomSpec,
    pub rows: Vec<ChainRow>,
    pub mean_abs_err: f64,
    pub std_abs_err: f64,
    /// Rank correlation between chain length and |Err|.
    pub spearman: f64,
}

/// Chains of every odd length in `3..=max_rooms`.
pub fn chain_experiment(
    room: &RoomSpec,
    max_rooms: usize,
    model: &(dyn RoomModel + Sync),
    cfg: &SimConfig,
    est_cfg: &EstimatorConfig,
) -> Result<ChainReport, SimError> {
    let lengths: Vec<usize> = (3..=max_rooms).step_by(2).collect();
    if lengths.is_empty() {
        return Err(SimError::InvalidInput(format!("no odd chain length between 3 and {max_rooms}")));
    }
    let rows = lengths
        .par_iter()
        .map(|&n| {
            let graph = replicate_chain(room, n)?;
            let est = estimate_environment(&graph, model, None, est_cfg)?;
            let sim = simulate_graph(&graph, cfg)?;
            let err = (!sim.censored && sim.tt > 0.0).then(|| relative_error(est.tt_e, sim.tt));
            Ok(ChainRow { rooms: n, simulated_tt: sim.tt, estimated_tt: est.tt_e, err })
        })
        .collect::<Result<Vec<_>, SimError>>()?;
    let pairs: Vec<(f64, f64)> = rows.iter().filter_map(|r| r.err.map(|e| (r.rooms as f64, e.abs()))).collect();
    let abs: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let (mean_abs_err, std_abs_err) = mean_std(&abs);
    let (xs, ys): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    Ok(ChainReport { room: *room, rows, mean_abs_err, std_abs_err, spearman: spearman(&xs, &ys) })
}

/// Ranks starting at 1, ties sharing their average rank.
fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation; NaN with fewer than two points or a
/// constant input.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    if xs.len() < 2 {
        return f64::NAN;
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let (mx, my) = (mean_std(&rx).0, mean_std(&ry).0);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my) * (b - my)).sum();
    cov / (vx * vy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_examples() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        assert_eq!(ranks(&[5.0, 1.0, 5.0]), vec![2.5, 1.0, 2.5]);
    }

    #[test]
    fn chain_shape() {
        let g = replicate_chain(&RoomSpec::closed(10.0, 6.0, 2.0, 20), 5).unwrap();
        assert_eq!(g.rooms.len(), 5);
        assert_eq!(g.edges.len(), 4);
        assert_eq!(g.total_population(), 20);
        assert!(replicate_chain(&RoomSpec::closed(10.0, 6.0, 2.0, 20), 4).is_err());
    }

    #[test]
    fn one_room_plan_matches_training_room() {
        let g = EnvironmentGraph::new(vec![RoomNode::new("solo", 8.0, 6.0, 1.5, 30)], vec![]);
        let cfg = SimConfig::default();
        let env = simulate_graph(&g, &cfg).unwrap();
        let room = crate::sim::run_room(&RoomSpec::closed(8.0, 6.0, 1.5, 30), &cfg).unwrap();
        assert_eq!(env.tt, room.tt);
    }
}
