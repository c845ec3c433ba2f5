//! Offline RL learners: FactoredCQL over the restricted discrete action
//! space, and HybridIQL / HybridEDAC over (mode, continuous settings).

mod config;
pub mod cql;
pub mod edac;
pub mod iql;
mod policy;
mod train;

pub use config::{Algo, Preset, TrainConfig};
pub use cql::FactoredCql;
pub use edac::HybridEdac;
pub use iql::HybridIql;
pub use policy::{
    load_policy, mode_one_hot, FactoredPolicy, HybridPolicy, Policy, PolicyActions, PolicyHead,
    UniformPolicy,
};
pub use train::{critic_input, train, Batch, TrainLog, TrainOutput};
