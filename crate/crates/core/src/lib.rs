//! Navigation games over a directed hyperlink graph: graph storage and
//! distance oracles, task generation, the step-budgeted episode engine,
//! agents, and trajectory metrics.

pub mod agents;
pub mod game;
pub mod graph;
pub mod ingest;
pub mod metrics;
pub mod session;
pub mod synth;
pub mod tasks;

pub use agents::{Agent, AgentDescriptor, AgentError, AgentReply, Observation};
pub use game::{run_episode, Game, GameConfig, GameTrajectory, Outcome};
pub use graph::{DistanceCache, DistanceField, PageGraph, PageId};
pub use tasks::{Split, SplitSpec, TaskInstance};
pub use metrics::{GroupField, MetricsReport};
pub use session::{SessionManager, SessionState};
