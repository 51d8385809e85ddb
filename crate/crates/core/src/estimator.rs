//! Environment-level evacuation estimates from per-room predictions.
//!
//! Rooms are evaluated in dependence order. A room with no incoming edge
//! starts evacuating at time zero with its own population. Any other room
//! receives agents from the rooms feeding it: arrivals start when the
//! first of those rooms releases its first agent (`git`) and end when the
//! last one empties (`ift`), and are spread evenly over that window. The
//! per-room model turns the resulting room parameters into a total time.

use std::collections::{BTreeMap, HashMap};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::envgraph::{topo_order, EnvironmentGraph, RoomNode};
use crate::error::SimError;
use crate::mlp::MlpModel;
use crate::params::{bounds, Interval, RoomSpec, FEATURE_NAMES};
use crate::sim::{DEFAULT_MAX_SPEED, DEFAULT_RADIUS};

/// Flow window used when arrivals would otherwise be instantaneous (s).
pub const DEGENERATE_WINDOW: f64 = 0.1;

/// Anything that maps room parameters to a time in seconds.
pub trait RoomModel {
    fn predict(&self, spec: &RoomSpec) -> Result<f64, SimError>;

    /// Input ranges the model can be trusted on, in feature order.
    fn domain(&self) -> [Interval; 6] {
        bounds::ALL
    }
}

impl RoomModel for MlpModel {
    fn predict(&self, spec: &RoomSpec) -> Result<f64, SimError> {
        self.forward(&spec.features())
    }

    fn domain(&self) -> [Interval; 6] {
        match &self.domain {
            Some(d) if d.len() == 6 => std::array::from_fn(|i| Interval::new(d[i][0], d[i][1])),
            _ => bounds::ALL,
        }
    }
}

/// Returns the same value for every room.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstantModel(pub f64);

impl RoomModel for ConstantModel {
    fn predict(&self, _: &RoomSpec) -> Result<f64, SimError> {
        Ok(self.0)
    }
}

impl<F: Fn(&RoomSpec) -> f64> RoomModel for F {
    fn predict(&self, spec: &RoomSpec) -> Result<f64, SimError> {
        Ok(self(spec))
    }
}

/// How the time until a room's first agent leaves is estimated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FetVariant {
    /// Half the room length at full speed, zero for an empty room.
    #[default]
    Simple,
    /// Subtracts the radius of the packed crowd in front of the exit, and
    /// uses the full length when the room starts empty.
    Diamond,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    pub max_speed: f64,
    pub fet_variant: FetVariant,
    /// Clamp model inputs to the training ranges.
    pub clamp_inputs: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig { max_speed: DEFAULT_MAX_SPEED, fet_variant: FetVariant::Simple, clamp_inputs: true }
    }
}

/// First exit time of a room holding `pop` agents.
pub fn fet(length: f64, pop: f64, max_speed: f64) -> f64 {
    if pop <= 0.0 {
        0.0
    } else {
        (length / 2.0) / max_speed
    }
}

pub fn fet_diamond(length: f64, pop: f64, max_speed: f64) -> f64 {
    if pop <= 0.0 {
        return length / max_speed;
    }
    // Radius of the packed crowd: agents of diameter 2r in a square block.
    let crowd = 2.0 * DEFAULT_RADIUS * pop.sqrt() / 2.0;
    ((length / 2.0 - crowd) / max_speed).max(0.0)
}

fn first_exit(cfg: &EstimatorConfig, length: f64, pop: f64) -> f64 {
    match cfg.fet_variant {
        FetVariant::Simple => fet(length, pop, cfg.max_speed),
        FetVariant::Diamond => fet_diamond(length, pop, cfg.max_speed),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoomEstimate {
    pub id: String,
    pub fet: f64,
    pub gfet: f64,
    pub git: f64,
    pub ift: f64,
    pub flow_duration: f64,
    pub input_flow: f64,
    pub pop: f64,
    pub tt: f64,
    pub avg_exit_time: Option<f64>,
    /// Model inputs that were clamped into the training ranges.
    pub clamped: Vec<String>,
    /// Arrivals were squeezed into [`DEGENERATE_WINDOW`].
    pub degenerate_window: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentEstimate {
    pub tt_e: f64,
    pub avg_exit_time_e: Option<f64>,
    pub per_room: BTreeMap<String, RoomEstimate>,
    /// Evaluation order.
    pub order: Vec<String>,
    pub exit_rooms: Vec<String>,
    pub warnings: Vec<String>,
    pub wall_clock_ms: f64,
}

/// Moves a room into the model's input ranges.
///
/// Geometry and initial population are clamped feature by feature. The
/// inflow keeps its total `input_flow * flow_duration` where the ranges
/// allow, trading rate against duration. A room without inflow is shown
/// the weakest inflow in range and is not reported as clamped.
pub fn clamp_to_domain(spec: &RoomSpec, domain: &[Interval; 6]) -> (RoomSpec, Vec<String>) {
    let x = spec.features();
    let mut changed = Vec::new();
    let mut c = |i: usize, v: f64| {
        let y = domain[i].clamp(v);
        if y != v {
            changed.push(FEATURE_NAMES[i].to_string());
        }
        y
    };
    let width = c(0, x[0]);
    let length = c(1, x[1]);
    let exit_size = c(2, x[2]).min(width);
    let initial_population = c(5, x[5]);
    let (flow, duration) = if x[3] <= 0.0 || x[4] <= 0.0 {
        (domain[3].min, domain[4].min)
    } else {
        let total = x[3] * x[4];
        let d = domain[4].clamp(x[4]);
        let f = domain[3].clamp(total / d);
        let d = domain[4].clamp(total / f);
        for (i, v) in [(3, f), (4, d)] {
            if (v - x[i]).abs() > 1e-12 * x[i].abs().max(1.0) {
                changed.push(FEATURE_NAMES[i].to_string());
            }
        }
        (f, d)
    };
    let clamped = RoomSpec {
        width,
        length,
        exit_size,
        input_flow: flow,
        flow_duration: duration,
        initial_population: initial_population.round() as u32,
    };
    (clamped, changed)
}

fn run_models(
    spec: &RoomSpec,
    model: &dyn RoomModel,
    avg_model: Option<&dyn RoomModel>,
    cfg: &EstimatorConfig,
) -> Result<(f64, Option<f64>, Vec<String>), SimError> {
    let (input, clamped) = if cfg.clamp_inputs { clamp_to_domain(spec, &model.domain()) } else { (*spec, Vec::new()) };
    let tt = model.predict(&input)?;
    let avg = avg_model.map(|m| m.predict(&input)).transpose()?;
    Ok((tt, avg, clamped))
}

/// Room with no incoming edge: no inflow, starts at time zero.
pub fn estimate_source_room(
    node: &RoomNode,
    model: &dyn RoomModel,
    avg_model: Option<&dyn RoomModel>,
    cfg: &EstimatorConfig,
) -> Result<RoomEstimate, SimError> {
    let spec = node.spec(0.0, 0.0);
    let (tt, avg_exit_time, clamped) = run_models(&spec, model, avg_model, cfg)?;
    let pop = node.initial_population as f64;
    let fet = first_exit(cfg, node.length, pop);
    Ok(RoomEstimate {
        id: node.id.clone(),
        fet,
        gfet: fet,
        git: 0.0,
        ift: 0.0,
        flow_duration: 0.0,
        input_flow: 0.0,
        pop,
        tt,
        avg_exit_time,
        clamped,
        degenerate_window: false,
    })
}

/// Room fed by already estimated rooms; each feeder comes with the share
/// of its population sent here.
pub fn estimate_dependent_room(
    node: &RoomNode,
    feeders: &[(&RoomEstimate, f64)],
    model: &dyn RoomModel,
    avg_model: Option<&dyn RoomModel>,
    cfg: &EstimatorConfig,
) -> Result<RoomEstimate, SimError> {
    if feeders.is_empty() {
        return estimate_source_room(node, model, avg_model, cfg);
    }
    let git = feeders.iter().map(|(d, _)| d.gfet).fold(f64::INFINITY, f64::min);
    let ift = feeders.iter().map(|(d, _)| d.gfet - d.fet + d.tt).fold(f64::NEG_INFINITY, f64::max);
    let incoming: f64 = feeders.iter().map(|(d, frac)| d.pop * frac).sum();
    let mut window = ift - git;
    let mut degenerate_window = false;
    let input_flow = if incoming <= 0.0 {
        0.0
    } else {
        if window <= 0.0 {
            window = DEGENERATE_WINDOW;
            degenerate_window = true;
        }
        incoming / window
    };
    let flow_duration = window.max(0.0);
    let pop = node.initial_population as f64 + input_flow * flow_duration;
    // Nobody arrives: the model sees a room without inflow.
    let spec = if input_flow > 0.0 { node.spec(input_flow, flow_duration) } else { node.spec(0.0, 0.0) };
    let (tt, avg_exit_time, clamped) = run_models(&spec, model, avg_model, cfg)?;
    let fet = first_exit(cfg, node.length, pop);
    Ok(RoomEstimate {
        id: node.id.clone(),
        fet,
        gfet: fet + git,
        git,
        ift,
        flow_duration,
        input_flow,
        pop,
        tt,
        avg_exit_time,
        clamped,
        degenerate_window,
    })
}

/// Evaluates every room and combines the exit rooms: the environment time
/// is the latest `git + tt` over exit rooms; the average exit time is the
/// mean over exit rooms of `avg_exit_time + (git + ift) / 2`.
pub fn estimate_environment(
    graph: &EnvironmentGraph,
    model: &dyn RoomModel,
    avg_model: Option<&dyn RoomModel>,
    cfg: &EstimatorConfig,
) -> Result<EnvironmentEstimate, SimError> {
    let start = Instant::now();
    graph.validated()?;
    let order = topo_order(graph)?;
    let nodes: HashMap<&str, &RoomNode> = graph.rooms.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut per_room: BTreeMap<String, RoomEstimate> = BTreeMap::new();
    let mut warnings = Vec::new();

    for id in &order {
        let node = nodes[id.as_str()];
        let feeders: Vec<(&RoomEstimate, f64)> = graph.incoming(id).map(|e| (&per_room[&e.from], e.fraction)).collect();
        let est = estimate_dependent_room(node, &feeders, model, avg_model, cfg)?;
        if !est.clamped.is_empty() {
            let msg = format!("room '{id}': clamped {} into the training range", est.clamped.join(", "));
            log::debug!("{msg}");
            warnings.push(msg);
        }
        if est.degenerate_window {
            let msg = format!("room '{id}': arrivals have no time window; spread over {DEGENERATE_WINDOW} s");
            log::debug!("{msg}");
            warnings.push(msg);
        }
        per_room.insert(id.clone(), est);
    }

    let exit_rooms: Vec<String> = graph.exit_rooms().iter().map(|r| r.id.clone()).collect();
    let exits: Vec<&RoomEstimate> = exit_rooms.iter().map(|id| &per_room[id]).collect();
    let tt_e = exits.iter().map(|e| e.git + e.tt).fold(f64::NEG_INFINITY, f64::max);
    let avg_exit_time_e = if avg_model.is_some() {
        let sum: f64 = exits.iter().map(|e| e.avg_exit_time.unwrap_or(0.0) + (e.git + e.ift) / 2.0).sum();
        Some(sum / exits.len() as f64)
    } else {
        None
    };
    Ok(EnvironmentEstimate {
        tt_e,
        avg_exit_time_e,
        per_room,
        order,
        exit_rooms,
        warnings,
        wall_clock_ms: start.elapsed().as_secs_f64() * 1000.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envgraph::FlowEdge;

    #[test]
    fn first_exit_examples() {
        assert_eq!(fet(7.0, 0.0, 1.2), 0.0);
        assert!((fet(12.0, 5.0, 1.2) - 5.0).abs() < 1e-12);
        assert!((fet(2.0, 1.0, 1.2) - 0.833_333_333_333).abs() < 1e-9);
        assert_eq!(fet_diamond(12.0, 0.0, 1.2), 10.0);
    }

    #[test]
    fn two_room_chain_by_hand() {
        let g = EnvironmentGraph::new(
            vec![RoomNode::new("up", 12.0, 12.0, 2.0, 24), RoomNode::new("down", 12.0, 12.0, 2.0, 0)],
            vec![FlowEdge { from: "up".into(), to: "down".into(), fraction: 1.0 }],
        );
        let e = estimate_environment(&g, &ConstantModel(10.0), None, &EstimatorConfig::default()).unwrap();
        let down = &e.per_room["down"];
        assert_eq!((down.git, down.ift, down.flow_duration), (5.0, 10.0, 5.0));
        assert!((down.input_flow - 4.8).abs() < 1e-12);
        assert!((down.pop - 24.0).abs() < 1e-12);
        assert_eq!((down.fet, down.gfet), (5.0, 10.0));
        assert_eq!(e.tt_e, 15.0);
        assert_eq!(e.exit_rooms, vec!["down"]);
    }

    #[test]
    fn two_feeders_combine() {
        let a = RoomEstimate {
            id: "a".into(),
            fet: 5.0,
            gfet: 5.0,
            git: 0.0,
            ift: 0.0,
            flow_duration: 0.0,
            input_flow: 0.0,
            pop: 60.0,
            tt: 20.0,
            avg_exit_time: None,
            clamped: vec![],
            degenerate_window: false,
        };
        let b = RoomEstimate { id: "b".into(), fet: 3.0, gfet: 8.0, tt: 30.0, pop: 40.0, ..a.clone() };
        let node = RoomNode::new("c", 10.0, 10.0, 2.0, 5);
        let e = estimate_dependent_room(
            &node,
            &[(&a, 0.5), (&b, 1.0)],
            &ConstantModel(1.0),
            None,
            &EstimatorConfig::default(),
        )
        .unwrap();
        assert_eq!((e.git, e.ift, e.flow_duration), (5.0, 35.0, 30.0));
        assert!((e.input_flow - 70.0 / 30.0).abs() < 1e-12);
        assert!((e.pop - 75.0).abs() < 1e-9);
    }

    #[test]
    fn empty_feeder_gives_no_flow() {
        let node = RoomNode::new("src", 10.0, 10.0, 2.0, 0);
        let cfg = EstimatorConfig::default();
        let src = estimate_source_room(&node, &ConstantModel(0.0), None, &cfg).unwrap();
        let next = RoomNode::new("next", 10.0, 10.0, 2.0, 7);
        let e = estimate_dependent_room(&next, &[(&src, 1.0)], &ConstantModel(3.0), None, &cfg).unwrap();
        assert_eq!(e.input_flow, 0.0);
        assert_eq!(e.pop, 7.0);
        assert!(!e.degenerate_window);
    }

    #[test]
    fn clamping_reports_fields() {
        let (c, names) = clamp_to_domain(&RoomSpec::new(28.0, 6.0, 5.6, 3.3, 24.7, 99), &bounds::ALL);
        assert_eq!(names, vec!["width", "exit_size"]);
        assert_eq!((c.width, c.exit_size), (20.0, 5.0));
        let (c, none) = clamp_to_domain(&RoomSpec::closed(10.0, 10.0, 2.0, 5), &bounds::ALL);
        assert!(none.is_empty());
        assert_eq!((c.input_flow, c.flow_duration), (1.0, 0.2));
    }

    #[test]
    fn clamping_keeps_arrivals() {
        let mut d = bounds::ALL;
        d[4] = Interval::new(0.2, 20.0);
        // 40 agents over 40 s: the window shrinks to 20 s at twice the rate.
        let (c, names) = clamp_to_domain(&RoomSpec::new(6.0, 6.0, 1.2, 1.0, 40.0, 0), &d);
        assert_eq!(names, vec!["input_flow".to_string(), "flow_duration".to_string()]);
        assert!((c.input_flow - 2.0).abs() < 1e-12 && (c.flow_duration - 20.0).abs() < 1e-12);
        // 0.5 agents/s for 1 s: neither range can hold the total exactly.
        let (c, _) = clamp_to_domain(&RoomSpec::new(6.0, 6.0, 1.2, 0.5, 1.0, 0), &d);
        assert_eq!((c.input_flow, c.flow_duration), (1.0, 0.5));
    }
}
