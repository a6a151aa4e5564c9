//! Interactive game sessions driven one click at a time, as used by the
//! web front end. Finished sessions are appended to the same trajectory log
//! format the batch engine writes.

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{info, warn};

use crate::agents::AgentDescriptor;
use crate::game::{
    load_log_dir, mix64, write_trajectory, EngineError, Game, GameConfig, GameStatus, GameTrajectory, LogError,
    MoveError, StepUsage,
};
use crate::graph::{DistanceCache, DistanceCacheError, DistanceField, PageGraph};
use crate::tasks::{Split, TaskInstance, TaskRecord};

pub const HUMAN_PLAYER: &str = "human";
pub const DEFAULT_IDLE_TIMEOUT: Duration = Duration::from_secs(24 * 3600);

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("task not found: {0}")]
    TaskNotFound(String),
    #[error("session not found: {0}")]
    SessionNotFound(String),
    #[error("{0}")]
    InvalidMove(MoveError),
    #[error("{0}")]
    BadRequest(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Distance(#[from] DistanceCacheError),
    #[error("trajectory log: {0}")]
    Log(#[from] io::Error),
    #[error(transparent)]
    LogRead(#[from] LogError),
}

impl SessionError {
    /// Stable machine-readable code for API payloads.
    pub fn code(&self) -> &'static str {
        match self {
            SessionError::TaskNotFound(_) => "task_not_found",
            SessionError::SessionNotFound(_) => "session_not_found",
            SessionError::InvalidMove(MoveError::NotRunning) => "game_over",
            SessionError::InvalidMove(MoveError::OutOfRange { .. }) => "invalid_choice",
            SessionError::BadRequest(_) => "bad_request",
            SessionError::Engine(_) | SessionError::Distance(_) | SessionError::Log(_) | SessionError::LogRead(_) => {
                "internal"
            }
        }
    }
}

/// How to pick the task for a new session: a split entry or two titles.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreateSession {
    #[serde(default)]
    pub split: Option<Split>,
    #[serde(default)]
    pub index: Option<usize>,
    #[serde(default)]
    pub source: Option<String>,
    #[serde(default)]
    pub target: Option<String>,
    /// Step-RNG seed; derived from the session id when absent.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub player: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionDescriptor {
    pub session_id: String,
    pub source: String,
    pub target: String,
    pub step_budget: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkView {
    pub index: usize,
    pub title: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub current: String,
    pub target: String,
    pub history: Vec<String>,
    pub links: Vec<LinkView>,
    pub steps_taken: u32,
    pub steps_remaining: u32,
    pub step_budget: u32,
    pub status: GameStatus,
    pub optimal_length: u32,
    /// Set once the game is won.
    pub suboptimal_steps: Option<u32>,
}

/// Trajectory listing filter; `None` fields match anything.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultsFilter {
    #[serde(default)]
    pub player: Option<String>,
    #[serde(default)]
    pub agent: Option<String>,
    #[serde(default)]
    pub split: Option<Split>,
}

impl ResultsFilter {
    pub fn matches(&self, t: &GameTrajectory) -> bool {
        self.player.as_ref().is_none_or(|p| *p == t.player)
            && self.agent.as_ref().is_none_or(|a| *a == t.agent.name)
            && self.split.is_none_or(|s| s == t.task.split)
    }
}

/// Appends trajectories to `trajectories-YYYY-MM-DD.jsonl` (UTC) under one
/// directory. Writes are serialized so lines never interleave.
#[derive(Debug)]
pub struct DailyLog {
    dir: PathBuf,
    lock: Mutex<()>,
}

impl DailyLog {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: dir.into(),
            lock: Mutex::new(()),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, day: DateTime<Utc>) -> PathBuf {
        self.dir.join(format!("trajectories-{}.jsonl", day.format("%Y-%m-%d")))
    }

    pub fn append(&self, t: &GameTrajectory) -> io::Result<PathBuf> {
        let _guard = self.lock.lock().expect("log lock poisoned");
        fs::create_dir_all(&self.dir)?;
        let path = self.path_for(Utc::now());
        let mut f = OpenOptions::new().create(true).append(true).open(&path)?;
        write_trajectory(&mut f, t)?;
        Ok(path)
    }
}

#[derive(Debug)]
struct Session {
    id: String,
    player: String,
    game: Game,
    field: Arc<DistanceField>,
    #[allow(dead_code)]
    created_at: DateTime<Utc>,
    last_active: Instant,
    persisted: bool,
}

pub struct SessionManager {
    graph: Arc<PageGraph>,
    cache: Arc<DistanceCache>,
    config: GameConfig,
    snapshot: String,
    tasks: HashMap<Split, Vec<TaskInstance>>,
    log: Option<DailyLog>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
    counter: AtomicU64,
    nonce: u64,
}

impl SessionManager {
    /// `config.rng_seed` is ignored; each session gets its own seed.
    pub fn new(graph: Arc<PageGraph>, cache: Arc<DistanceCache>, config: GameConfig, snapshot: impl Into<String>) -> Self {
        Self {
            graph,
            cache,
            config,
            snapshot: snapshot.into(),
            tasks: HashMap::new(),
            log: None,
            sessions: RwLock::new(HashMap::new()),
            counter: AtomicU64::new(0),
            nonce: rand::random(),
        }
    }

    pub fn with_log_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.log = Some(DailyLog::new(dir));
        self
    }

    pub fn with_tasks(mut self, split: Split, tasks: Vec<TaskInstance>) -> Self {
        self.tasks.insert(split, tasks);
        self
    }

    pub fn graph(&self) -> &PageGraph {
        &self.graph
    }

    pub fn config(&self) -> &GameConfig {
        &self.config
    }

    pub fn log_dir(&self) -> Option<&Path> {
        self.log.as_ref().map(DailyLog::dir)
    }

    pub fn session_count(&self) -> usize {
        self.sessions.read().expect("session map poisoned").len()
    }

    fn fresh_id(&self) -> String {
        let n = self.counter.fetch_add(1, Ordering::Relaxed);
        format!("{:016x}{:08x}", mix64(self.nonce ^ n), n)
    }

    /// Seed used for a session when the caller gives none.
    pub fn seed_for(session_id: &str) -> u64 {
        session_id
            .bytes()
            .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
    }

    fn resolve_task(&self, req: &CreateSession) -> Result<TaskInstance, SessionError> {
        match (&req.source, &req.target) {
            (Some(s), Some(t)) => {
                let g = &self.graph;
                let source = g.lookup(s).ok_or_else(|| SessionError::TaskNotFound(format!("unknown title {s:?}")))?;
                let target = g.lookup(t).ok_or_else(|| SessionError::TaskNotFound(format!("unknown title {t:?}")))?;
                if source == target {
                    return Err(SessionError::BadRequest("source and target are the same page".into()));
                }
                let field = self.cache.get(target)?;
                let optimal_length = field
                    .distance(source)
                    .ok_or_else(|| SessionError::TaskNotFound(format!("{t:?} is unreachable from {s:?}")))?;
                Ok(TaskInstance {
                    source,
                    target,
                    optimal_length,
                    split: Split::Custom,
                    snapshot: self.snapshot.clone(),
                })
            }
            (None, None) => {
                let split = req
                    .split
                    .ok_or_else(|| SessionError::BadRequest("give split and index, or source and target".into()))?;
                let index = req.index.unwrap_or(0);
                self.tasks
                    .get(&split)
                    .and_then(|ts| ts.get(index))
                    .cloned()
                    .ok_or_else(|| SessionError::TaskNotFound(format!("{split} task {index}")))
            }
            _ => Err(SessionError::BadRequest("source and target must be given together".into())),
        }
    }

    pub fn create_session(&self, req: &CreateSession) -> Result<SessionDescriptor, SessionError> {
        let task = self.resolve_task(req)?;
        let id = self.fresh_id();
        let seed = req.seed.unwrap_or_else(|| Self::seed_for(&id));
        let field = self.cache.get(task.target)?;
        let game = Game::new(task, self.config.with_seed(seed), &self.graph, &field)?;
        let desc = SessionDescriptor {
            session_id: id.clone(),
            source: self.graph.title(game.task().source).to_owned(),
            target: self.graph.title(game.task().target).to_owned(),
            step_budget: self.config.max_steps,
        };
        let session = Session {
            id: id.clone(),
            player: req.player.clone().unwrap_or_else(|| HUMAN_PLAYER.to_owned()),
            game,
            field,
            created_at: Utc::now(),
            last_active: Instant::now(),
            persisted: false,
        };
        self.sessions
            .write()
            .expect("session map poisoned")
            .insert(id, Arc::new(Mutex::new(session)));
        Ok(desc)
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, SessionError> {
        self.sessions
            .read()
            .expect("session map poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| SessionError::SessionNotFound(id.to_owned()))
    }

    fn state_of(&self, s: &Session) -> SessionState {
        let g = &self.graph;
        let game = &s.game;
        let steps_taken = game.step_index() as u32;
        SessionState {
            session_id: s.id.clone(),
            current: g.title(game.current()).to_owned(),
            target: g.title(game.task().target).to_owned(),
            history: game.history().iter().map(|&v| g.title(v).to_owned()).collect(),
            links: game
                .presented()
                .iter()
                .enumerate()
                .map(|(index, &v)| LinkView {
                    index,
                    title: g.title(v).to_owned(),
                })
                .collect(),
            steps_taken,
            steps_remaining: game.steps_remaining(),
            step_budget: game.config().max_steps,
            status: game.status(),
            optimal_length: game.task().optimal_length,
            suboptimal_steps: (game.status() == GameStatus::Success)
                .then(|| steps_taken.saturating_sub(game.task().optimal_length)),
        }
    }

    /// Current state. Reading never advances the step RNG.
    pub fn get_state(&self, id: &str) -> Result<SessionState, SessionError> {
        let s = self.session(id)?;
        let s = s.lock().expect("session poisoned");
        Ok(self.state_of(&s))
    }

    /// Clicks link `choice`. An out-of-range index is rejected and the
    /// session is left as it was.
    pub fn make_move(&self, id: &str, choice: usize) -> Result<SessionState, SessionError> {
        let s = self.session(id)?;
        let mut s = s.lock().expect("session poisoned");
        let field = Arc::clone(&s.field);
        s.game
            .apply_choice(&self.graph, &field, choice, choice.to_string(), 1, StepUsage::default())
            .map_err(SessionError::InvalidMove)?;
        s.last_active = Instant::now();
        if !s.game.is_running() {
            self.persist(&mut s)?;
        }
        Ok(self.state_of(&s))
    }

    /// Log form of the session's game, as written once it ends.
    pub fn trajectory(&self, id: &str) -> Result<GameTrajectory, SessionError> {
        let s = self.session(id)?;
        let s = s.lock().expect("session poisoned");
        Ok(self.trajectory_of(&s))
    }

    fn trajectory_of(&self, s: &Session) -> GameTrajectory {
        s.game
            .trajectory(&self.graph, AgentDescriptor::new(HUMAN_PLAYER, false), s.player.clone())
    }

    fn persist(&self, s: &mut Session) -> Result<(), SessionError> {
        if s.persisted {
            return Ok(());
        }
        if let Some(log) = &self.log {
            let path = log.append(&self.trajectory_of(s))?;
            info!(session = %s.id, path = %path.display(), "session finished");
        }
        s.persisted = true;
        Ok(())
    }

    /// Abandons running sessions idle for longer than `max_idle` and drops
    /// every expired session from memory. Returns the expired ids.
    pub fn expire_idle(&self, max_idle: Duration) -> Vec<String> {
        let now = Instant::now();
        let mut map = self.sessions.write().expect("session map poisoned");
        let mut expired = Vec::new();
        map.retain(|id, s| {
            let mut s = s.lock().expect("session poisoned");
            if now.duration_since(s.last_active) <= max_idle {
                return true;
            }
            if s.game.is_running() {
                s.game.abandon();
                if let Err(e) = self.persist(&mut s) {
                    warn!(session = %id, error = %e, "could not log abandoned session");
                }
            }
            expired.push(id.clone());
            false
        });
        expired.sort();
        expired
    }

    pub fn list_tasks(&self, split: Split) -> Result<Vec<TaskRecord>, SessionError> {
        let tasks = self
            .tasks
            .get(&split)
            .ok_or_else(|| SessionError::TaskNotFound(format!("no tasks loaded for split {split}")))?;
        Ok(tasks.iter().map(|t| t.to_record(&self.graph)).collect())
    }

    pub fn loaded_splits(&self) -> Vec<Split> {
        let mut v: Vec<Split> = self.tasks.keys().copied().collect();
        v.sort_by_key(|s| s.as_str());
        v
    }

    /// Logged trajectories matching `filter`; nothing when no log
    /// directory is configured.
    pub fn get_results(&self, filter: &ResultsFilter) -> Result<Vec<GameTrajectory>, SessionError> {
        let Some(dir) = self.log_dir() else {
            return Ok(Vec::new());
        };
        Ok(load_log_dir(dir)?.into_iter().filter(|t| filter.matches(t)).collect())
    }
}
