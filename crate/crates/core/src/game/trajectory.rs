use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::GameConfig;
use crate::agents::AgentDescriptor;
use crate::tasks::TaskRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    StepBudget,
    ParseError,
    AgentError,
    Abandoned,
}

impl FailureReason {
    pub fn as_str(self) -> &'static str {
        match self {
            FailureReason::StepBudget => "step_budget",
            FailureReason::ParseError => "parse_error",
            FailureReason::AgentError => "agent_error",
            FailureReason::Abandoned => "abandoned",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Failure(FailureReason),
}

impl Outcome {
    pub fn is_success(self) -> bool {
        self == Outcome::Success
    }

    pub fn failure_reason(self) -> Option<FailureReason> {
        match self {
            Outcome::Success => None,
            Outcome::Failure(r) => Some(r),
        }
    }
}

/// One prompt/answer exchange. Titles rather than ids so logs survive a
/// re-ingest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step_index: usize,
    pub page_before: String,
    pub presented: Vec<String>,
    /// Reply to the final attempt.
    pub raw_response: String,
    /// Prompts sent for this step (1 + format retries).
    pub attempts: u32,
    /// `None` when no valid choice was obtained.
    pub chosen_index: Option<usize>,
    pub page_after: Option<String>,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub latency_us: u64,
    pub cost: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub cost: Option<f64>,
    pub wall_time_us: u64,
}

impl Totals {
    pub fn from_steps(steps: &[StepRecord]) -> Self {
        let mut t = Totals::default();
        for s in steps {
            t.tokens_in += s.tokens_in;
            t.tokens_out += s.tokens_out;
            t.wall_time_us += s.latency_us;
            if let Some(c) = s.cost {
                *t.cost.get_or_insert(0.0) += c;
            }
        }
        t
    }
}

/// A complete game as written to the trajectory log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameTrajectory {
    pub snapshot: String,
    /// `"human"` for interactive sessions, otherwise the agent name.
    pub player: String,
    pub agent: AgentDescriptor,
    pub task: TaskRecord,
    pub config: GameConfig,
    pub steps: Vec<StepRecord>,
    /// Visit order, starting page first.
    pub history: Vec<String>,
    pub outcome: Outcome,
    pub steps_taken: u32,
    pub totals: Totals,
}

impl GameTrajectory {
    pub fn is_success(&self) -> bool {
        self.outcome.is_success()
    }

    /// Highest number of visits to any single page.
    pub fn max_visitation(&self) -> usize {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for p in &self.history {
            *counts.entry(p.as_str()).or_default() += 1;
        }
        counts.into_values().max().unwrap_or(0)
    }

    pub fn has_loop(&self) -> bool {
        self.max_visitation() >= 2
    }

    pub fn to_json_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("trajectory serializes");
        s.push('\n');
        s
    }
}

/// Appends whole trajectories, one line each, in a single write call.
pub fn write_trajectory<W: Write>(w: &mut W, t: &GameTrajectory) -> io::Result<()> {
    w.write_all(t.to_json_line().as_bytes())?;
    w.flush()
}

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("{path}: line {line}: {source}")]
    Parse {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

pub fn read_trajectories<R: Read>(r: R, name: &str) -> Result<Vec<GameTrajectory>, LogError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let line = line.map_err(|source| LogError::Io {
            path: name.to_owned(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| LogError::Parse {
            path: name.to_owned(),
            line: i + 1,
            source,
        })?);
    }
    Ok(out)
}

pub fn load_trajectories(path: impl AsRef<Path>) -> Result<Vec<GameTrajectory>, LogError> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let f = File::open(path).map_err(|source| LogError::Io {
        path: name.clone(),
        source,
    })?;
    read_trajectories(f, &name)
}

/// Loads every `*.jsonl` file under `dir` (non-recursive), in file-name
/// order. A missing directory yields no trajectories.
pub fn load_log_dir(dir: impl AsRef<Path>) -> Result<Vec<GameTrajectory>, LogError> {
    let dir = dir.as_ref();
    if !dir.exists() {
        return Ok(Vec::new());
    }
    let io_err = |source| LogError::Io {
        path: dir.display().to_string(),
        source,
    };
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .map_err(io_err)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    files.sort();
    let mut out = Vec::new();
    for f in files {
        out.extend(load_trajectories(&f)?);
    }
    Ok(out)
}
