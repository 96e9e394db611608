pub mod baselines;
pub mod config;
pub mod control;
pub mod env;
pub mod error;
pub mod kinematics;
pub mod learn;
pub mod math;
pub mod metrics;
pub mod object;
pub mod sim;
pub mod subspace;

pub use error::{Error, Result};
