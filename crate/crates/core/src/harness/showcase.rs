//! Letter-formation swap: three groups spelling one word walk down to
//! spell another, crossing paths on the way.

use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::fixtures;
use crate::sim::environment::RoomDef;
use crate::sim::{AgentTemplate, Layout, RoomRect, SimConfig, Simulation, Vec2};

use super::imo::HARD_OVERLAP_SLACK;

/// Distance to target counted as arrived.
pub const TARGET_TOLERANCE: f64 = 0.3;
/// Seconds allowed for the formation to complete.
pub const SHOWCASE_TIME_LIMIT: f64 = 120.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LetterGroup {
    pub label: String,
    pub starts: Vec<Vec2>,
    pub targets: Vec<Vec2>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShowcaseFixture {
    pub room: RoomDef,
    pub groups: Vec<LetterGroup>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub time: f64,
    pub positions: Vec<Vec2>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShowcaseReport {
    pub agents: usize,
    pub converged_at: Option<f64>,
    pub max_target_error: f64,
    pub hard_overlaps: usize,
    /// Positions once per simulated second, plus the final state.
    pub frames: Vec<Frame>,
    pub passed: bool,
}

pub fn load_fixture() -> Result<ShowcaseFixture, SimError> {
    let text = fixtures::load("scenarios/showcase.json")
        .ok_or_else(|| SimError::Scenario("missing fixture scenarios/showcase.json".into()))?;
    serde_json::from_str(&text).map_err(|e| SimError::Scenario(format!("showcase fixture: {e}")))
}

/// Runs the bundled letter swap.
pub fn orca_showcase(cfg: &SimConfig) -> Result<ShowcaseReport, SimError> {
    run_formation(&load_fixture()?, cfg)
}

/// Moves every agent from its start to its target in an open room and
/// reports arrival accuracy and overlaps.
pub fn run_formation(fixture: &ShowcaseFixture, cfg: &SimConfig) -> Result<ShowcaseReport, SimError> {
    let r = &fixture.room;
    let rect = RoomRect::new(r.id.clone(), Vec2::new(r.x, r.y), Vec2::new(r.x + r.width, r.y + r.length));
    let layout = Layout::new(vec![rect], Vec::new(), Vec::new())?;
    let mut sim = Simulation::new(layout, cfg.clone())?;
    let mut targets = Vec::new();
    for (g, group) in fixture.groups.iter().enumerate() {
        if group.starts.len() != group.targets.len() {
            return Err(SimError::Scenario(format!(
                "letter group '{}' has {} starts and {} targets",
                group.label,
                group.starts.len(),
                group.targets.len()
            )));
        }
        let template = AgentTemplate { group: g, ..Default::default() };
        for (s, t) in group.starts.iter().zip(&group.targets) {
            sim.add_point_agent(0, *s, *t, &template);
            targets.push(*t);
        }
    }

    let ticks_per_frame = (1.0 / cfg.dt).round().max(1.0) as u64;
    let mut frames = vec![Frame { time: 0.0, positions: sim.agents.iter().map(|a| a.position).collect() }];
    let mut hard_overlaps = 0;
    let limit = SHOWCASE_TIME_LIMIT.min(cfg.max_sim_time);
    let arrived =
        |sim: &Simulation| sim.agents.iter().zip(&targets).all(|(a, t)| a.position.distance(*t) <= TARGET_TOLERANCE);
    let mut converged_at = None;
    let mut tick = 0u64;
    while sim.time() < limit - 1e-9 {
        sim.step();
        tick += 1;
        for (i, a) in sim.agents.iter().enumerate() {
            for b in &sim.agents[i + 1..] {
                if a.position.distance(b.position) < a.radius + b.radius - HARD_OVERLAP_SLACK {
                    hard_overlaps += 1;
                }
            }
        }
        if tick.is_multiple_of(ticks_per_frame) {
            frames.push(Frame { time: sim.time(), positions: sim.agents.iter().map(|a| a.position).collect() });
        }
        if arrived(&sim) {
            converged_at = Some(sim.time());
            break;
        }
    }
    frames.push(Frame { time: sim.time(), positions: sim.agents.iter().map(|a| a.position).collect() });
    let max_target_error = sim.agents.iter().zip(&targets).map(|(a, t)| a.position.distance(*t)).fold(0.0, f64::max);
    Ok(ShowcaseReport {
        agents: targets.len(),
        converged_at,
        max_target_error,
        hard_overlaps,
        frames,
        passed: converged_at.is_some() && hard_overlaps == 0,
    })
}
