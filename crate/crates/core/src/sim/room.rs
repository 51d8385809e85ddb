//! Single-room runs: the unit of the training corpus.

use serde::{Deserialize, Serialize};

use super::engine::SimConfig;
use super::environment::{run_environment, EnvironmentScenario, FlowDef, GroupDef, Placement, PortalDef, RoomDef};
use super::vec2::Vec2;
use crate::error::SimError;
use crate::params::RoomSpec;

/// Lattice pitch for initial placement: one agent diameter.
pub const SPIRAL_SPACING: f64 = 0.6;

/// Measured outputs of one room simulation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoomMetrics {
    /// Exit time of the last agent (s).
    pub tt: f64,
    /// Mean exit time over agents (s).
    pub avg_exit_time: f64,
    /// Realized speed averaged over agents and ticks (m/s).
    pub avg_speed: f64,
    /// Agents per square meter, averaged over ticks with someone inside.
    pub avg_density: f64,
    /// True when the time limit stopped the run.
    pub censored: bool,
}

/// Scenario for one rectangular room: `x` in `[0, width]`, `y` in
/// `[0, length]`, the exit centered on the far wall `y = length`, and
/// arrivals spawning along the near wall `y = 0`.
pub fn room_layout(spec: &RoomSpec) -> Result<EnvironmentScenario, SimError> {
    spec.validate_physical()?;
    let (w, l, e) = (spec.width, spec.length, spec.exit_size);
    let mut scenario = EnvironmentScenario {
        name: "room".into(),
        rooms: vec![RoomDef { id: "room".into(), x: 0.0, y: 0.0, width: w, length: l }],
        portals: vec![PortalDef {
            id: "exit".into(),
            from: "room".into(),
            to: None,
            a: Vec2::new((w - e) / 2.0, l),
            b: Vec2::new((w + e) / 2.0, l),
            entry: None,
        }],
        walls: Vec::new(),
        choices: Vec::new(),
        groups: vec![GroupDef {
            label: "initial".into(),
            room: "room".into(),
            count: spec.initial_population as usize,
            placement: Placement::Spiral,
            route: None,
            max_speed: None,
        }],
        flows: Vec::new(),
        routing: Default::default(),
    };
    if spec.input_flow > 0.0 && spec.flow_duration > 0.0 {
        scenario.flows.push(FlowDef {
            label: "inflow".into(),
            room: "room".into(),
            flow: spec.input_flow,
            duration: spec.flow_duration,
            band: None,
            route: None,
            max_speed: None,
        });
    }
    Ok(scenario)
}

/// Simulates one room until it is empty (or the time limit).
pub fn run_room(spec: &RoomSpec, cfg: &SimConfig) -> Result<RoomMetrics, SimError> {
    let scenario = room_layout(spec)?;
    let env = run_environment(&scenario, cfg)?;
    let room = &env.rooms[0];
    Ok(RoomMetrics {
        tt: env.tt,
        avg_exit_time: env.avg_exit_time,
        avg_speed: room.avg_speed,
        avg_density: room.avg_density,
        censored: env.censored,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_room_finishes_immediately() {
        let m = run_room(&RoomSpec::closed(10.0, 10.0, 2.0, 0), &SimConfig::default()).unwrap();
        assert_eq!(m.tt, 0.0);
        assert!(!m.censored);
    }

    #[test]
    fn single_agent_walks_at_full_speed() {
        // Agent starts at the center (5, 5); the exit is 5 m away and it
        // exits once its disc touches the exit line.
        let m = run_room(&RoomSpec::closed(10.0, 10.0, 5.0, 1), &SimConfig::default()).unwrap();
        let expected = (5.0 - 0.3) / 1.2;
        assert!((m.tt - expected).abs() < 0.1, "tt {}", m.tt);
        assert!((m.avg_speed - 1.2).abs() < 0.05);
    }
}
