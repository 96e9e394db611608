//! Training machinery: function approximators, optimizers, replay, and the
//! learners behind the kinematic-force and redundant-motion policies.

pub mod bc;
pub mod checkpoint;
pub mod dataset;
pub mod dqn;
pub mod features;
pub mod grad_check;
pub mod net;
pub mod optim;
pub mod policy;
pub mod replay;
pub mod sac;
pub mod driver;
pub mod vanilla;

pub use features::ObsScaler;
pub use grad_check::gradient_check;
pub use replay::{ReplayBuffer, SampleRef, Transition};
