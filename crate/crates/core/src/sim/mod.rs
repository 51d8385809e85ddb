//! Planar crowd simulator with reciprocal collision avoidance.

pub mod engine;
pub mod environment;
pub mod lp;
pub mod orca;
pub mod placement;
pub mod room;
pub mod vec2;
pub mod world;

pub use engine::{
    preferred_velocity_to_segment, Agent, AgentTemplate, Finished, FlowSource, Goal, PortalEvent, Routing, SimConfig,
    Simulation, StepStats, DEFAULT_MAX_SPEED, DEFAULT_RADIUS,
};
pub use environment::{run_environment, EnvironmentMetrics, EnvironmentScenario};
pub use lp::{solve_velocity, solve_velocity_detailed, HalfPlaneConstraint, LpOutcome};
pub use orca::{agent_constraint, wall_constraint, Body};
pub use placement::{flow_spawn_count, spiral_positions};
pub use room::{room_layout, run_room, RoomMetrics, SPIRAL_SPACING};
pub use vec2::Vec2;
pub use world::{GoalSegment, Layout, Portal, RoomRect, Segment, WallSegment};
