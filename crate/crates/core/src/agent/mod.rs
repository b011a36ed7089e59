//! Agent architecture: sensory frontend, message receiver, fusion,
//! caption embedder, predictor, message sender and value estimator.

pub mod forward;
pub mod frontend;
pub mod params;
pub mod snapshot;

pub use forward::{
    compose_message, embed_caption, emit_message, estimate_value, fuse, perceive, predict, receive, Episode, Message,
    Mode, OutputGrads, SendRecord, Turn,
};
pub use frontend::{FeatureTable, Frontend, FrontendConfig, FrontendKind, SeededProjection};
pub use params::{AgentConfig, AgentParams, SenderWeights};
pub use snapshot::{load_agent, load_snapshot, read_agent, save_agent, save_snapshot, write_agent, ProtocolSnapshot};
