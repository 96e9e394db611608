//! Command-line harness tying the simulator, controller, and learners into
//! reproducible experiments.

pub mod commands;
pub mod plot;
