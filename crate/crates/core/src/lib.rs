//! Multi-agent emergent communication on a partially observed
//! image-caption reference game.

pub mod agent;
pub mod community;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod game;
pub mod nn;
pub mod report;
pub mod scalar;
pub mod worldgen;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision agent.
pub type Agent = agent::AgentParams<f64>;
/// Single-precision agent.
pub type Agent32 = agent::AgentParams<f32>;
