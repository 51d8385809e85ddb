//! Crowd evacuation estimation: a planar agent simulator, a surrogate
//! network for per-room evacuation time, and heuristics that combine
//! per-room estimates over a room-connectivity graph.

pub mod dataset;
pub mod envgraph;
pub mod error;
pub mod estimator;
pub mod fixtures;
pub mod harness;
pub mod mlp;
pub mod params;
pub mod sim;

pub use error::SimError;
pub use params::{bounds, Interval, RoomSpec};
