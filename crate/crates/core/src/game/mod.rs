//! The navigation game: per-step link filtering, prompt rendering, the
//! episode state machine and the driver that plays it against an agent.

mod filter;
mod prompt;
mod trajectory;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{Agent, AgentDescriptor, AgentError, AgentReply, Observation, PrivilegedView};
use crate::graph::{DistanceField, PageGraph, PageId};
use crate::tasks::TaskInstance;

pub use filter::{episode_seed, filter_links, mix64, step_rng};
pub(crate) use prompt::boxed_contents;
pub use prompt::{
    format_reminder, parse_choice, render_user_prompt, score_response, REWARD_CORRECT, REWARD_UNFORMATTED,
    REWARD_WRONG, SYSTEM_PROMPT,
};
pub use trajectory::{
    load_log_dir, load_trajectories, read_trajectories, write_trajectory, FailureReason, GameTrajectory, LogError,
    Outcome, StepRecord, Totals,
};

pub const DEFAULT_MAX_STEPS: u32 = 30;
pub const DEFAULT_LINK_CAP: usize = 50;
pub const DEFAULT_PARSE_RETRIES: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameConfig {
    pub max_steps: u32,
    pub link_cap: usize,
    pub rng_seed: u64,
    pub parse_retries: u32,
}

impl Default for GameConfig {
    fn default() -> Self {
        Self {
            max_steps: DEFAULT_MAX_STEPS,
            link_cap: DEFAULT_LINK_CAP,
            rng_seed: 0,
            parse_retries: DEFAULT_PARSE_RETRIES,
        }
    }
}

impl GameConfig {
    pub fn with_seed(self, rng_seed: u64) -> Self {
        Self { rng_seed, ..self }
    }

    /// Config for one game of a batch run, treating `rng_seed` as the run
    /// seed.
    pub fn for_task(&self, task: &TaskInstance) -> Self {
        self.with_seed(episode_seed(self.rng_seed, task.source, task.target))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "snake_case")]
pub enum GameStatus {
    Running,
    Success,
    Failure(FailureReason),
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid game config: {0}")]
    Config(String),
    #[error("distance field targets page {field} but the task targets {task}")]
    FieldMismatch { field: PageId, task: PageId },
    #[error("task pages are not in the graph")]
    TaskOutOfGraph,
    #[error("task source and target are the same page")]
    TrivialTask,
    #[error(transparent)]
    Agent(AgentError),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MoveError {
    #[error("game is already over")]
    NotRunning,
    #[error("choice {choice} outside 0..={max}")]
    OutOfRange { choice: usize, max: usize },
}

/// Resource use attributed to one step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepUsage {
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub latency: Duration,
    pub cost: Option<f64>,
}

impl StepUsage {
    pub fn add(&mut self, reply: &AgentReply) {
        self.tokens_in += reply.tokens_in;
        self.tokens_out += reply.tokens_out;
        self.latency += reply.latency;
        if let Some(c) = reply.provider_cost {
            *self.cost.get_or_insert(0.0) += c;
        }
    }
}

/// State of one episode. Graph and distance field are passed into each
/// transition rather than held, so a game can live inside a long-running
/// session.
#[derive(Debug, Clone)]
pub struct Game {
    task: TaskInstance,
    config: GameConfig,
    current: PageId,
    history: Vec<PageId>,
    presented: Vec<PageId>,
    status: GameStatus,
    steps: Vec<StepRecord>,
}

impl Game {
    pub fn new(task: TaskInstance, config: GameConfig, g: &PageGraph, field: &DistanceField) -> Result<Self, EngineError> {
        if config.max_steps == 0 {
            return Err(EngineError::Config("max_steps must be at least 1".into()));
        }
        if config.link_cap == 0 {
            return Err(EngineError::Config("link_cap must be at least 1".into()));
        }
        if !g.contains(task.source) || !g.contains(task.target) || field.len() != g.num_nodes() {
            return Err(EngineError::TaskOutOfGraph);
        }
        if field.target() != task.target {
            return Err(EngineError::FieldMismatch {
                field: field.target(),
                task: task.target,
            });
        }
        if task.source == task.target {
            return Err(EngineError::TrivialTask);
        }
        let mut game = Self {
            current: task.source,
            history: vec![task.source],
            presented: Vec::new(),
            status: GameStatus::Running,
            steps: Vec::new(),
            task,
            config,
        };
        game.refresh_links(g, field);
        Ok(game)
    }

    fn refresh_links(&mut self, g: &PageGraph, field: &DistanceField) {
        let mut rng = step_rng(self.config.rng_seed, self.step_index());
        self.presented = filter_links(g.neighbors(self.current), field, self.config.link_cap, &mut rng);
    }

    pub fn task(&self) -> &TaskInstance {
        &self.task
    }

    pub fn config(&self) -> &GameConfig {
        &self.config
    }

    pub fn current(&self) -> PageId {
        self.current
    }

    pub fn history(&self) -> &[PageId] {
        &self.history
    }

    /// Links on offer at the current step; empty once the game is over.
    pub fn presented(&self) -> &[PageId] {
        &self.presented
    }

    pub fn status(&self) -> GameStatus {
        self.status
    }

    pub fn is_running(&self) -> bool {
        self.status == GameStatus::Running
    }

    /// Moves made so far.
    pub fn step_index(&self) -> usize {
        self.history.len() - 1
    }

    pub fn steps_remaining(&self) -> u32 {
        self.config.max_steps.saturating_sub(self.step_index() as u32)
    }

    pub fn steps(&self) -> &[StepRecord] {
        &self.steps
    }

    pub fn observation(&self, g: &PageGraph) -> Observation {
        let links: Vec<String> = self.presented.iter().map(|&v| g.title(v).to_owned()).collect();
        let history: Vec<&str> = self.history.iter().map(|&v| g.title(v)).collect();
        Observation {
            system_text: SYSTEM_PROMPT.to_owned(),
            user_text: render_user_prompt(g.title(self.current), g.title(self.task.target), &history, &links),
            max_index: self.presented.len().saturating_sub(1),
            links,
        }
    }

    fn record(&self, g: &PageGraph, raw: String, attempts: u32, choice: Option<usize>, usage: StepUsage) -> StepRecord {
        StepRecord {
            step_index: self.step_index(),
            page_before: g.title(self.current).to_owned(),
            presented: self.presented.iter().map(|&v| g.title(v).to_owned()).collect(),
            raw_response: raw,
            attempts,
            chosen_index: choice,
            page_after: choice.map(|i| g.title(self.presented[i]).to_owned()),
            tokens_in: usage.tokens_in,
            tokens_out: usage.tokens_out,
            latency_us: usage.latency.as_micros() as u64,
            cost: usage.cost,
        }
    }

    /// Follows presented link `choice`. Out-of-range choices leave the
    /// state untouched.
    pub fn apply_choice(
        &mut self,
        g: &PageGraph,
        field: &DistanceField,
        choice: usize,
        raw: impl Into<String>,
        attempts: u32,
        usage: StepUsage,
    ) -> Result<GameStatus, MoveError> {
        if !self.is_running() {
            return Err(MoveError::NotRunning);
        }
        if choice >= self.presented.len() {
            return Err(MoveError::OutOfRange {
                choice,
                max: self.presented.len().saturating_sub(1),
            });
        }
        let step = self.record(g, raw.into(), attempts, Some(choice), usage);
        self.steps.push(step);
        self.current = self.presented[choice];
        self.history.push(self.current);

        if self.current == self.task.target {
            self.finish(GameStatus::Success);
        } else if self.step_index() as u32 >= self.config.max_steps {
            self.finish(GameStatus::Failure(FailureReason::StepBudget));
        } else {
            self.refresh_links(g, field);
        }
        Ok(self.status)
    }

    /// Ends the game on a step that produced no usable choice.
    pub fn fail_step(&mut self, g: &PageGraph, raw: impl Into<String>, attempts: u32, usage: StepUsage, reason: FailureReason) {
        if !self.is_running() {
            return;
        }
        let step = self.record(g, raw.into(), attempts, None, usage);
        self.steps.push(step);
        self.finish(GameStatus::Failure(reason));
    }

    /// Ends a running game without recording a step.
    pub fn abandon(&mut self) {
        if self.is_running() {
            self.finish(GameStatus::Failure(FailureReason::Abandoned));
        }
    }

    fn finish(&mut self, status: GameStatus) {
        self.status = status;
        self.presented.clear();
    }

    pub fn outcome(&self) -> Option<Outcome> {
        match self.status {
            GameStatus::Running => None,
            GameStatus::Success => Some(Outcome::Success),
            GameStatus::Failure(r) => Some(Outcome::Failure(r)),
        }
    }

    /// Log form of a finished game. A running game is reported as abandoned.
    pub fn trajectory(&self, g: &PageGraph, agent: AgentDescriptor, player: impl Into<String>) -> GameTrajectory {
        GameTrajectory {
            snapshot: self.task.snapshot.clone(),
            player: player.into(),
            agent,
            task: self.task.to_record(g),
            config: self.config,
            history: self.history.iter().map(|&v| g.title(v).to_owned()).collect(),
            outcome: self.outcome().unwrap_or(Outcome::Failure(FailureReason::Abandoned)),
            steps_taken: self.step_index() as u32,
            totals: Totals::from_steps(&self.steps),
            steps: self.steps.clone(),
        }
    }
}

/// Plays one episode to completion.
///
/// Each step: filter links, render the prompt, ask the agent, parse. An
/// unparseable reply is retried with a format reminder up to
/// `parse_retries` times before the episode fails with `parse_error`.
/// Transport failures end the episode with `agent_error`; configuration
/// errors abort with `Err`.
pub fn run_episode(
    task: &TaskInstance,
    agent: &dyn Agent,
    g: &PageGraph,
    field: &DistanceField,
    config: &GameConfig,
) -> Result<GameTrajectory, EngineError> {
    let descriptor = agent.descriptor();
    let mut game = Game::new(task.clone(), *config, g, field)?;

    while game.is_running() {
        let obs = game.observation(g);
        let view = PrivilegedView {
            graph: g,
            field,
            presented: game.presented(),
        };
        let view = descriptor.privileged.then_some(&view);

        let mut usage = StepUsage::default();
        let mut chosen = None;
        let mut last_raw = String::new();
        let mut attempts = 0;
        let mut transport_failed = false;
        for retry in 0..=config.parse_retries {
            let prompt = if retry == 0 {
                obs.clone()
            } else {
                Observation {
                    user_text: format!("{}{}", obs.user_text, format_reminder(obs.max_index)),
                    ..obs.clone()
                }
            };
            attempts += 1;
            let reply = match agent.decide(&prompt, view) {
                Ok(r) => r,
                Err(AgentError::Transport(msg)) => {
                    last_raw = msg;
                    transport_failed = true;
                    break;
                }
                Err(e) => return Err(EngineError::Agent(e)),
            };
            usage.add(&reply);
            last_raw = reply.raw_text;
            if let Some(i) = parse_choice(&last_raw, obs.max_index) {
                chosen = Some(i);
                break;
            }
        }

        match chosen {
            Some(i) => {
                game.apply_choice(g, field, i, last_raw, attempts, usage)
                    .expect("parsed choice is in range");
            }
            None => {
                let reason = if transport_failed {
                    FailureReason::AgentError
                } else {
                    FailureReason::ParseError
                };
                game.fail_step(g, last_raw, attempts, usage, reason);
            }
        }
    }
    let player = descriptor.name.clone();
    Ok(game.trajectory(g, descriptor, player))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{AgentReply, FirstLinkAgent, OracleGreedyAgent, ScriptedAgent};
    use crate::graph::distances_to;
    use crate::graph::tests::graph;
    use crate::tasks::Split;

    // 0 -> 1 -> 2 -> 3 -> 0 plus a few detours.
    fn fixture() -> PageGraph {
        graph(5, &[(0, 1), (1, 2), (2, 3), (3, 0), (0, 4), (4, 0), (1, 4)])
    }

    fn task(source: u32, target: u32, len: u32) -> TaskInstance {
        TaskInstance {
            source: PageId(source),
            target: PageId(target),
            optimal_length: len,
            split: Split::Custom,
            snapshot: "s".into(),
        }
    }

    #[test]
    fn scripted_shortest_path() {
        let g = fixture();
        let field = distances_to(&g, PageId(3));
        let agent = ScriptedAgent::path(["P1", "P2", "P3"]);
        let t = run_episode(&task(0, 3, 3), &agent, &g, &field, &GameConfig::default()).unwrap();
        assert_eq!(t.outcome, Outcome::Success);
        assert_eq!(t.steps_taken, 3);
        assert_eq!(t.history, vec!["P0", "P1", "P2", "P3"]);
        assert_eq!(t.steps.len(), 3);
    }

    #[test]
    fn out_of_range_answers_fail_with_parse_error() {
        let g = fixture();
        let field = distances_to(&g, PageId(3));
        let agent = ScriptedAgent::replies(["99", "98", "97", "0"]);
        let t = run_episode(&task(0, 3, 3), &agent, &g, &field, &GameConfig::default()).unwrap();
        assert_eq!(t.outcome, Outcome::Failure(FailureReason::ParseError));
        assert_eq!(t.steps_taken, 0);
        assert_eq!(t.steps.len(), 1);
        assert_eq!(t.steps[0].attempts, 3);
        assert_eq!(t.steps[0].chosen_index, None);
        assert_eq!(t.history, vec!["P0"]);
    }

    #[test]
    fn retry_uses_reminder_and_recovers() {
        let g = fixture();
        let field = distances_to(&g, PageId(1));
        let agent = ScriptedAgent::replies(["hmm", "\\boxed{0}"]);
        let t = run_episode(&task(0, 1, 1), &agent, &g, &field, &GameConfig::default()).unwrap();
        assert_eq!(t.steps[0].attempts, 2);
        assert_eq!(t.steps[0].chosen_index, Some(0));
    }

    #[test]
    fn budget_exhaustion() {
        let g = graph(3, &[(0, 1), (1, 0), (1, 2), (2, 0)]);
        let field = distances_to(&g, PageId(2));
        // P0 only links to P1; from P1 pick P0 forever.
        struct Bounce;
        impl Agent for Bounce {
            fn descriptor(&self) -> AgentDescriptor {
                AgentDescriptor::new("bounce", false)
            }
            fn decide(&self, obs: &Observation, _: Option<&PrivilegedView<'_>>) -> Result<AgentReply, AgentError> {
                let i = obs.links.iter().position(|l| l == "P0").unwrap_or(0);
                Ok(AgentReply::text(i.to_string()))
            }
        }
        let cfg = GameConfig {
            max_steps: 7,
            ..GameConfig::default()
        };
        let t = run_episode(&task(0, 2, 2), &Bounce, &g, &field, &cfg).unwrap();
        assert_eq!(t.outcome, Outcome::Failure(FailureReason::StepBudget));
        assert_eq!(t.steps_taken, 7);
        assert_eq!(t.max_visitation(), 4);
    }

    #[test]
    fn oracle_greedy_is_optimal() {
        let g = fixture();
        for target in 1..5u32 {
            let field = distances_to(&g, PageId(target));
            let len = field.get(PageId(0));
            let t = run_episode(&task(0, target, len), &OracleGreedyAgent, &g, &field, &GameConfig::default()).unwrap();
            assert!(t.is_success());
            assert_eq!(t.steps_taken, len);
            assert!(t.agent.privileged);
        }
    }

    #[test]
    fn invalid_games() {
        let g = fixture();
        let field = distances_to(&g, PageId(3));
        let bad = GameConfig {
            max_steps: 0,
            ..GameConfig::default()
        };
        assert!(Game::new(task(0, 3, 3), bad, &g, &field).is_err());
        assert!(matches!(
            Game::new(task(0, 2, 2), GameConfig::default(), &g, &field),
            Err(EngineError::FieldMismatch { .. })
        ));
        assert!(matches!(
            Game::new(task(3, 3, 0), GameConfig::default(), &g, &field),
            Err(EngineError::TrivialTask)
        ));
    }

    #[test]
    fn out_of_range_move_keeps_state() {
        let g = fixture();
        let field = distances_to(&g, PageId(3));
        let mut game = Game::new(task(0, 3, 3), GameConfig::default(), &g, &field).unwrap();
        let before = game.presented().to_vec();
        assert_eq!(
            game.apply_choice(&g, &field, 5, "5", 1, StepUsage::default()),
            Err(MoveError::OutOfRange { choice: 5, max: 1 })
        );
        assert_eq!(game.presented(), before);
        assert_eq!(game.step_index(), 0);
        assert!(game.steps().is_empty());
    }

    #[test]
    fn unprivileged_agents_get_no_view() {
        let g = fixture();
        let field = distances_to(&g, PageId(1));
        let t = run_episode(&task(0, 1, 1), &FirstLinkAgent, &g, &field, &GameConfig::default()).unwrap();
        assert!(!t.agent.privileged);
        assert_eq!(t.player, "first_link");
    }
}
