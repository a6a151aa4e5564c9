//! Agents that pick links: the decision contract, baselines and the remote
//! chat-completions client.

mod baseline;
mod llm;

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{DistanceField, PageGraph, PageId};

pub use baseline::{
    make_baseline, BaselineKind, FirstLinkAgent, HubGreedyAgent, OracleGreedyAgent, ProbeResponder,
    RandomAgent, ScriptedAgent,
};
pub use llm::{ChatClient, LlmAgent, LlmAgentConfig, PriceTable, RateLimiter, API_BASE_ENV, API_KEY_ENV};

/// What an unprivileged agent is allowed to see: the rendered prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    pub system_text: String,
    pub user_text: String,
    pub max_index: usize,
    /// Titles of the presented links, in prompt order. Same information as
    /// the numbered list inside `user_text`.
    pub links: Vec<String>,
}

/// Engine-side information handed only to privileged baselines.
#[derive(Debug, Clone, Copy)]
pub struct PrivilegedView<'a> {
    pub graph: &'a PageGraph,
    pub field: &'a DistanceField,
    pub presented: &'a [PageId],
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AgentReply {
    pub raw_text: String,
    pub tokens_in: u64,
    pub tokens_out: u64,
    #[serde(with = "duration_us")]
    pub latency: Duration,
    pub provider_cost: Option<f64>,
}

impl AgentReply {
    pub fn text(raw: impl Into<String>) -> Self {
        Self {
            raw_text: raw.into(),
            ..Self::default()
        }
    }
}

mod duration_us {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_micros() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_micros(u64::deserialize(d)?))
    }
}

/// Identifies the agent in every trajectory it produces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentDescriptor {
    pub name: String,
    /// True for baselines that read oracle distances or degrees.
    pub privileged: bool,
    #[serde(default)]
    pub params: BTreeMap<String, String>,
}

impl AgentDescriptor {
    pub fn new(name: impl Into<String>, privileged: bool) -> Self {
        Self {
            name: name.into(),
            privileged,
            params: BTreeMap::new(),
        }
    }

    pub fn with_param(mut self, key: &str, value: impl ToString) -> Self {
        self.params.insert(key.to_owned(), value.to_string());
        self
    }
}

#[derive(Debug, Error)]
pub enum AgentError {
    /// Transient failure that survived every retry; the episode fails with
    /// `agent_error`.
    #[error("agent transport failed: {0}")]
    Transport(String),
    /// Misconfiguration (bad credentials, unknown agent kind); aborts the run.
    #[error("agent configuration error: {0}")]
    Config(String),
}

/// The decision contract. Implementations must be safe to share across
/// concurrently running episodes and keep no memory between calls beyond
/// what the observation carries.
pub trait Agent: Send + Sync {
    fn descriptor(&self) -> AgentDescriptor;

    /// `view` is `Some` only when the descriptor is privileged.
    fn decide(&self, obs: &Observation, view: Option<&PrivilegedView<'_>>) -> Result<AgentReply, AgentError>;
}

impl<A: Agent + ?Sized> Agent for Box<A> {
    fn descriptor(&self) -> AgentDescriptor {
        (**self).descriptor()
    }

    fn decide(&self, obs: &Observation, view: Option<&PrivilegedView<'_>>) -> Result<AgentReply, AgentError> {
        (**self).decide(obs, view)
    }
}

impl<A: Agent + ?Sized> Agent for std::sync::Arc<A> {
    fn descriptor(&self) -> AgentDescriptor {
        (**self).descriptor()
    }

    fn decide(&self, obs: &Observation, view: Option<&PrivilegedView<'_>>) -> Result<AgentReply, AgentError> {
        (**self).decide(obs, view)
    }
}
