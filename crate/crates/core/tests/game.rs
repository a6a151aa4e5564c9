mod common;

use std::collections::HashSet;
use std::sync::Mutex;

use common::*;
use wikirace_core::agents::{
    make_baseline, Agent, AgentDescriptor, AgentError, AgentReply, BaselineKind, Observation, PrivilegedView,
    ScriptedAgent,
};
use wikirace_core::game::{
    read_trajectories, run_episode, FailureReason, GameConfig, GameTrajectory, Outcome, DEFAULT_MAX_STEPS,
};
use wikirace_core::graph::{DistanceCache, PageGraph, PageId};
use wikirace_core::tasks::{generate_split, Split, SplitSpec, TaskInstance};

/// Records everything the engine shows the agent, then plays randomly.
struct Spy {
    inner: Box<dyn Agent>,
    seen: Mutex<Vec<(Vec<String>, usize)>>,
}

impl Agent for Spy {
    fn descriptor(&self) -> AgentDescriptor {
        AgentDescriptor::new("spy", true)
    }

    fn decide(&self, obs: &Observation, view: Option<&PrivilegedView<'_>>) -> Result<AgentReply, AgentError> {
        self.seen.lock().unwrap().push((obs.links.clone(), obs.max_index));
        self.inner.decide(obs, view)
    }
}

fn tasks(g: &PageGraph, cache: &DistanceCache, count: usize, lengths: &[u32], seed: u64) -> Vec<TaskInstance> {
    let spec = SplitSpec::balanced(Split::Custom, count, lengths).unwrap();
    generate_split(g, cache, &spec, seed, &HashSet::new(), "s").unwrap()
}

/// Checks every step of a trajectory against the graph and the
/// independently sorted neighbor list.
fn check_steps(g: &PageGraph, cache: &DistanceCache, t: &GameTrajectory, cap: usize) {
    let target = g.lookup(&t.task.target).unwrap();
    let field = cache.get(target).unwrap();
    for step in &t.steps {
        let here = g.lookup(&step.page_before).unwrap();
        let neigh: HashSet<u32> = g.neighbors(here).iter().copied().collect();
        let shown: Vec<PageId> = step.presented.iter().map(|s| g.lookup(s).unwrap()).collect();
        assert!(shown.len() <= cap);
        assert!(shown.iter().all(|v| neigh.contains(&v.0)));
        let uniq: HashSet<_> = shown.iter().collect();
        assert_eq!(uniq.len(), shown.len());

        let mut by_dist: Vec<PageId> = neigh.iter().map(|&v| PageId(v)).collect();
        by_dist.sort_by_key(|&v| (field.get(v), v));
        by_dist.truncate(cap);
        let want: HashSet<_> = by_dist.iter().collect();
        assert_eq!(uniq, want);

        let d = field.get(here);
        assert!(shown.iter().any(|&v| field.get(v) < d), "no closer link at {}", step.page_before);
    }
    assert!(t.steps_taken <= t.config.max_steps);
}

#[test]
fn random_walks_see_valid_link_sets() {
    let g = benchmark_graph();
    let cache = DistanceCache::new(g);
    let spy = Spy {
        inner: make_baseline(BaselineKind::Random, 3),
        seen: Mutex::new(Vec::new()),
    };
    for task in tasks(g, &cache, 40, &[3, 4, 5, 6], 8) {
        let field = cache.get(task.target).unwrap();
        let t = run_episode(&task, &spy, g, &field, &GameConfig::default().for_task(&task)).unwrap();
        check_steps(g, &cache, &t, 50);
    }
    for (links, max) in spy.seen.lock().unwrap().iter() {
        assert_eq!(*max, links.len() - 1);
    }
}

#[test]
fn oracle_greedy_is_optimal_and_hub_greedy_is_legal() {
    let g = benchmark_graph();
    let cache = DistanceCache::new(g);
    let greedy = make_baseline(BaselineKind::OracleGreedy, 0);
    let hub = make_baseline(BaselineKind::HubGreedy, 0);
    for task in tasks(g, &cache, 30, &[3, 5, 7], 2) {
        let field = cache.get(task.target).unwrap();
        let cfg = GameConfig::default().for_task(&task);
        let t = run_episode(&task, &greedy, g, &field, &cfg).unwrap();
        assert_eq!(t.outcome, Outcome::Success);
        assert_eq!(t.steps_taken, task.optimal_length);
        let h = run_episode(&task, &hub, g, &field, &cfg).unwrap();
        check_steps(g, &cache, &h, 50);
    }
}

#[test]
fn smaller_caps_still_offer_progress() {
    let g = benchmark_graph();
    let cache = DistanceCache::new(g);
    let agent = make_baseline(BaselineKind::Random, 9);
    for cap in [1, 5, 30, 70] {
        for task in tasks(g, &cache, 10, &[4, 6], cap as u64) {
            let field = cache.get(task.target).unwrap();
            let cfg = GameConfig {
                link_cap: cap,
                max_steps: 12,
                ..GameConfig::default()
            }
            .for_task(&task);
            let t = run_episode(&task, &agent, g, &field, &cfg).unwrap();
            check_steps(g, &cache, &t, cap);
            assert!(t.steps_taken <= 12);
        }
    }
}

#[test]
fn budget_exhaustion_and_parse_failures() {
    let g = build(3, &[(0, 1), (1, 0), (1, 2), (2, 1)]);
    let cache = DistanceCache::new(&g);
    let task = TaskInstance {
        source: PageId(0),
        target: PageId(2),
        optimal_length: 2,
        split: Split::Custom,
        snapshot: "s".into(),
    };
    let field = cache.get(PageId(2)).unwrap();

    // Bounce between N0 and N1 forever.
    let bounce = ScriptedAgent::path((0..40).map(|i| if i % 2 == 0 { "N1" } else { "N0" }));
    let t = run_episode(&task, &bounce, &g, &field, &GameConfig::default()).unwrap();
    assert_eq!(t.outcome, Outcome::Failure(FailureReason::StepBudget));
    assert_eq!(t.steps_taken, DEFAULT_MAX_STEPS);
    assert_eq!(t.history.len(), DEFAULT_MAX_STEPS as usize + 1);
    assert_eq!(t.max_visitation(), 16);

    let mute = ScriptedAgent::replies(["no idea", "still none", "nope"]);
    let t = run_episode(&task, &mute, &g, &field, &GameConfig::default()).unwrap();
    assert_eq!(t.outcome, Outcome::Failure(FailureReason::ParseError));
    assert_eq!(t.steps.len(), 1);
    assert_eq!(t.steps[0].attempts, 3);
    assert_eq!(t.steps_taken, 0);

    let late = ScriptedAgent::replies(["hmm", "0"]);
    let t = run_episode(&task, &late, &g, &field, &GameConfig::default()).unwrap();
    assert_eq!(t.steps[0].attempts, 2);
    assert_eq!(t.steps[0].page_after.as_deref(), Some("N1"));
}

struct Flaky;

impl Agent for Flaky {
    fn descriptor(&self) -> AgentDescriptor {
        AgentDescriptor::new("flaky", false)
    }

    fn decide(&self, _: &Observation, _: Option<&PrivilegedView<'_>>) -> Result<AgentReply, AgentError> {
        Err(AgentError::Transport("connection reset".into()))
    }
}

#[test]
fn transport_errors_fail_the_episode() {
    let g = build(3, &[(0, 1), (1, 2), (2, 0)]);
    let cache = DistanceCache::new(&g);
    let task = TaskInstance {
        source: PageId(0),
        target: PageId(2),
        optimal_length: 2,
        split: Split::Custom,
        snapshot: "s".into(),
    };
    let field = cache.get(PageId(2)).unwrap();
    let t = run_episode(&task, &Flaky, &g, &field, &GameConfig::default()).unwrap();
    assert_eq!(t.outcome, Outcome::Failure(FailureReason::AgentError));
    assert!(run_episode(&task, &make_baseline(BaselineKind::OracleGreedy, 0), &g, &field, &GameConfig {
        max_steps: 0,
        ..GameConfig::default()
    })
    .is_err());
}

#[test]
fn trajectories_round_trip_and_replay() {
    let g = benchmark_graph();
    let cache = DistanceCache::new(g);
    let agent = make_baseline(BaselineKind::Random, 1);
    let mut lines = String::new();
    let mut originals = Vec::new();
    for task in tasks(g, &cache, 10, &[3, 4], 5) {
        let field = cache.get(task.target).unwrap();
        let cfg = GameConfig::default().for_task(&task);
        let a = run_episode(&task, &agent, g, &field, &cfg).unwrap();
        let b = run_episode(&task, &agent, g, &field, &cfg).unwrap();
        assert_eq!(a.to_json_line(), b.to_json_line());

        // Replaying the recorded choices reproduces the game exactly.
        let script = ScriptedAgent::replies(a.steps.iter().map(|s| s.raw_response.clone()));
        let c = run_episode(&task, &script, g, &field, &cfg).unwrap();
        assert_eq!(c.steps, a.steps);
        assert_eq!(c.history, a.history);

        lines.push_str(&a.to_json_line());
        originals.push(a);
    }
    let back = read_trajectories(lines.as_bytes(), "mem").unwrap();
    assert_eq!(back, originals);
}
