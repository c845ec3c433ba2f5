pub mod action_space;
pub mod data;
pub mod error;
pub mod experiment;
pub mod kv;
pub mod learners;
pub mod nn;
pub mod pipeline;
pub mod plot;
pub mod ope;
pub mod rewards;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
