use std::collections::VecDeque;
use std::str::FromStr;
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Agent, AgentDescriptor, AgentError, AgentReply, Observation, PrivilegedView};
use crate::game::mix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    Random,
    OracleGreedy,
    FirstLink,
    HubGreedy,
}

impl FromStr for BaselineKind {
    type Err = AgentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(Self::Random),
            "oracle_greedy" => Ok(Self::OracleGreedy),
            "first_link" => Ok(Self::FirstLink),
            "hub_greedy" => Ok(Self::HubGreedy),
            other => Err(AgentError::Config(format!("unknown baseline {other:?}"))),
        }
    }
}

pub fn make_baseline(kind: BaselineKind, seed: u64) -> Box<dyn Agent> {
    match kind {
        BaselineKind::Random => Box::new(RandomAgent::new(seed)),
        BaselineKind::OracleGreedy => Box::new(OracleGreedyAgent),
        BaselineKind::FirstLink => Box::new(FirstLinkAgent),
        BaselineKind::HubGreedy => Box::new(HubGreedyAgent),
    }
}

fn fnv1a(text: &str) -> u64 {
    text.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Uniform choice. The draw is a function of the seed and the prompt text,
/// so replays are exact and concurrent episodes do not interfere.
#[derive(Debug, Clone)]
pub struct RandomAgent {
    seed: u64,
}

impl RandomAgent {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }
}

impl Agent for RandomAgent {
    fn descriptor(&self) -> AgentDescriptor {
        AgentDescriptor::new("random", false).with_param("seed", self.seed)
    }

    fn decide(&self, obs: &Observation, _: Option<&PrivilegedView<'_>>) -> Result<AgentReply, AgentError> {
        let mut rng = ChaCha8Rng::seed_from_u64(mix64(self.seed ^ fnv1a(&obs.user_text)));
        Ok(AgentReply::text(rng.random_range(0..=obs.max_index).to_string()))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct FirstLinkAgent;

impl Agent for FirstLinkAgent {
    fn descriptor(&self) -> AgentDescriptor {
        AgentDescriptor::new("first_link", false)
    }

    fn decide(&self, _: &Observation, _: Option<&PrivilegedView<'_>>) -> Result<AgentReply, AgentError> {
        Ok(AgentReply::text("0"))
    }
}

fn require_view<'v, 'a>(name: &str, view: Option<&'v PrivilegedView<'a>>) -> Result<&'v PrivilegedView<'a>, AgentError> {
    view.ok_or_else(|| AgentError::Config(format!("{name} needs the privileged engine view")))
}

/// Moves to the presented link closest to the target (lowest index on ties).
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleGreedyAgent;

impl Agent for OracleGreedyAgent {
    fn descriptor(&self) -> AgentDescriptor {
        AgentDescriptor::new("oracle_greedy", true)
    }

    fn decide(&self, _: &Observation, view: Option<&PrivilegedView<'_>>) -> Result<AgentReply, AgentError> {
        let view = require_view("oracle_greedy", view)?;
        let best = view
            .presented
            .iter()
            .enumerate()
            .min_by_key(|&(i, &v)| (view.field.get(v), i))
            .map_or(0, |(i, _)| i);
        Ok(AgentReply::text(best.to_string()))
    }
}

/// Moves to the presented link with the most outgoing links.
#[derive(Debug, Clone, Copy, Default)]
pub struct HubGreedyAgent;

impl Agent for HubGreedyAgent {
    fn descriptor(&self) -> AgentDescriptor {
        AgentDescriptor::new("hub_greedy", true)
    }

    fn decide(&self, _: &Observation, view: Option<&PrivilegedView<'_>>) -> Result<AgentReply, AgentError> {
        let view = require_view("hub_greedy", view)?;
        let best = view
            .presented
            .iter()
            .enumerate()
            .max_by_key(|&(i, &v)| (view.graph.out_degree(v), std::cmp::Reverse(i)))
            .map_or(0, |(i, _)| i);
        Ok(AgentReply::text(best.to_string()))
    }
}

enum Script {
    Replies(VecDeque<String>),
    Path(VecDeque<String>),
}

/// Plays back a fixed script: either raw replies, or a sequence of page
/// titles to click (each resolved against the presented links). An
/// exhausted script or a title that is not presented yields an
/// unparseable reply.
pub struct ScriptedAgent {
    script: Mutex<Script>,
}

impl ScriptedAgent {
    pub fn replies<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            script: Mutex::new(Script::Replies(replies.into_iter().map(Into::into).collect())),
        }
    }

    pub fn choices(choices: impl IntoIterator<Item = usize>) -> Self {
        Self::replies(choices.into_iter().map(|c| c.to_string()))
    }

    /// Clicks through `titles` in order (the start page excluded).
    pub fn path<I, S>(titles: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            script: Mutex::new(Script::Path(titles.into_iter().map(Into::into).collect())),
        }
    }
}

impl Agent for ScriptedAgent {
    fn descriptor(&self) -> AgentDescriptor {
        AgentDescriptor::new("scripted", false)
    }

    fn decide(&self, obs: &Observation, _: Option<&PrivilegedView<'_>>) -> Result<AgentReply, AgentError> {
        let mut script = self.script.lock().expect("script poisoned");
        let reply = match &mut *script {
            Script::Replies(q) => q.pop_front().unwrap_or_default(),
            Script::Path(q) => match q.pop_front() {
                Some(title) => obs
                    .links
                    .iter()
                    .position(|l| *l == title)
                    .map_or_else(|| format!("cannot find {title}"), |i| i.to_string()),
                None => String::new(),
            },
        };
        Ok(AgentReply::text(reply))
    }
}

/// Constant boxed answer for the link-existence probe.
#[derive(Debug, Clone, Copy)]
pub struct ProbeResponder {
    pub answer: bool,
}

impl Agent for ProbeResponder {
    fn descriptor(&self) -> AgentDescriptor {
        AgentDescriptor::new(if self.answer { "always_yes" } else { "always_no" }, false)
    }

    fn decide(&self, _: &Observation, _: Option<&PrivilegedView<'_>>) -> Result<AgentReply, AgentError> {
        Ok(AgentReply::text(if self.answer { "\\boxed{yes}" } else { "\\boxed{no}" }))
    }
}
