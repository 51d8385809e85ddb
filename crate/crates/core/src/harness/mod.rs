//! Validation scenarios and estimation-versus-simulation experiments.

pub mod compare;
pub mod imo;
pub mod pipeline;
pub mod showcase;
