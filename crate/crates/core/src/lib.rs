//! Room environment, bounded knowledge-graph memories, and a deep Q-learning
//! agent that learns which memory system each observation should go to.

pub mod config;
pub mod des;
pub mod dqn;
pub mod env;
pub mod error;
pub mod harness;
pub mod kb;
pub mod memory;
pub mod nn;
pub mod policy;
pub mod qnet;
pub mod seed;
pub mod util;

pub use config::{AgentKind, ExperimentConfig};
pub use dqn::{train, TrainConfig, TrainOutcome, Transition};
pub use env::{EnvConfig, RoomEnv};
pub use error::{Error, Result};
pub use kb::KnowledgeBase;
pub use memory::{Action, AgentMemory, Quadruple, Question};
pub use policy::{AgentVariant, Capacities, Policy};
pub use qnet::{Checkpoint, QNetDims, QNetworkParams, Vocabulary};
