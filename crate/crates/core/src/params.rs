//! Per-room input parameters and their training-domain bounds.

use serde::{Deserialize, Serialize};

use crate::error::SimError;

/// Closed interval `[min, max]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub min: f64,
    pub max: f64,
}

impl Interval {
    pub const fn new(min: f64, max: f64) -> Self {
        Interval { min, max }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.min && x <= self.max
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.min, self.max)
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.min + self.max)
    }
}

/// Sampling ranges of the training corpus.
pub mod bounds {
    use super::Interval;

    pub const WIDTH: Interval = Interval::new(2.0, 20.0);
    pub const LENGTH: Interval = Interval::new(2.0, 20.0);
    pub const EXIT_SIZE: Interval = Interval::new(0.9, 5.0);
    pub const INPUT_FLOW: Interval = Interval::new(1.0, 10.0);
    pub const FLOW_DURATION: Interval = Interval::new(0.2, 100.0);
    pub const INITIAL_POPULATION: Interval = Interval::new(0.0, 99.0);

    /// Bounds in feature order.
    pub const ALL: [Interval; 6] = [WIDTH, LENGTH, EXIT_SIZE, INPUT_FLOW, FLOW_DURATION, INITIAL_POPULATION];
}

/// Feature names in the order used by [`RoomSpec::features`].
pub const FEATURE_NAMES: [&str; 6] =
    ["width", "length", "exit_size", "input_flow", "flow_duration", "initial_population"];

/// The six parameters describing one rectangular room with a single exit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec {
    /// Length of the wall holding the exit (m).
    pub width: f64,
    /// Distance from the entrance wall to the exit wall (m).
    pub length: f64,
    pub exit_size: f64,
    /// Agents per second entering during the flow window.
    pub input_flow: f64,
    /// Length of the flow window (s).
    pub flow_duration: f64,
    pub initial_population: u32,
}

impl RoomSpec {
    pub fn new(
        width: f64,
        length: f64,
        exit_size: f64,
        input_flow: f64,
        flow_duration: f64,
        initial_population: u32,
    ) -> Self {
        RoomSpec { width, length, exit_size, input_flow, flow_duration, initial_population }
    }

    /// Room with no incoming flow.
    pub fn closed(width: f64, length: f64, exit_size: f64, initial_population: u32) -> Self {
        RoomSpec::new(width, length, exit_size, 0.0, 0.0, initial_population)
    }

    pub fn features(&self) -> [f64; 6] {
        [self.width, self.length, self.exit_size, self.input_flow, self.flow_duration, self.initial_population as f64]
    }

    /// Checks that the room can be built and simulated.
    pub fn validate_physical(&self) -> Result<(), SimError> {
        let finite = self.features().iter().all(|x| x.is_finite());
        if !finite {
            return Err(SimError::InvalidInput("room parameters must be finite".into()));
        }
        if !(self.width > 0.0 && self.length > 0.0) {
            return Err(SimError::InvalidInput(format!(
                "room dimensions must be positive, got {} x {}",
                self.width, self.length
            )));
        }
        if !(self.exit_size > 0.0 && self.exit_size <= self.width) {
            return Err(SimError::InvalidInput(format!(
                "exit size {} must be positive and at most the width {}",
                self.exit_size, self.width
            )));
        }
        if self.input_flow < 0.0 || self.flow_duration < 0.0 {
            return Err(SimError::InvalidInput("flow and flow duration must be non-negative".into()));
        }
        Ok(())
    }

    /// Names of the features outside the training ranges. A zero flow with
    /// zero duration counts as "no flow" and is in range.
    pub fn out_of_domain(&self) -> Vec<&'static str> {
        let no_flow = self.input_flow == 0.0 && self.flow_duration == 0.0;
        self.features()
            .iter()
            .zip(bounds::ALL.iter())
            .zip(FEATURE_NAMES.iter())
            .enumerate()
            .filter(|(i, ((x, b), _))| !(b.contains(**x) || (no_flow && (*i == 3 || *i == 4))))
            .map(|(_, (_, name))| *name)
            .collect()
    }

    /// Expected total number of agents: initial plus inflow.
    pub fn expected_agents(&self) -> f64 {
        self.initial_population as f64 + self.input_flow * self.flow_duration
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn domain_check_names_fields() {
        let s = RoomSpec::new(28.0, 6.0, 5.6, 3.3, 24.7, 99);
        assert_eq!(s.out_of_domain(), vec!["width", "exit_size"]);
        assert!(RoomSpec::closed(10.0, 10.0, 2.0, 10).out_of_domain().is_empty());
    }

    #[test]
    fn exit_wider_than_room_is_rejected() {
        assert!(RoomSpec::closed(2.0, 10.0, 3.0, 1).validate_physical().is_err());
        assert!(RoomSpec::closed(2.0, 10.0, 2.0, 1).validate_physical().is_ok());
    }
}
