// Independent reference implementations and fixtures shared by the
// integration tests. Nothing here calls into the algorithms under test
// except to build inputs.
#![allow(dead_code)]

pub mod stub;

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::path::PathBuf;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wikirace_core::agents::{Agent, AgentDescriptor, OracleGreedyAgent, PrivilegedView};
use wikirace_core::game::{
    parse_choice, FailureReason, Game, GameConfig, GameTrajectory, Outcome, StepRecord, StepUsage, Totals,
};
use wikirace_core::graph::{build_csr, DistanceCache, PageGraph, PageId};
use wikirace_core::synth::{synthetic_graph, SynthParams};
use wikirace_core::tasks::{generate_split, Split, SplitSpec, TaskInstance, TaskRecord};

pub const INF: u32 = u32::MAX;

pub fn titles(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("N{i}")).collect()
}

/// Raw edge list with duplicates and self-loops left in.
pub fn random_edges(n: usize, density: f64, rng: &mut ChaCha8Rng) -> Vec<(u32, u32)> {
    let mut edges = Vec::new();
    for s in 0..n as u32 {
        for t in 0..n as u32 {
            if rng.random_bool(density) {
                edges.push((s, t));
                if rng.random_bool(0.1) {
                    edges.push((s, t));
                }
            }
        }
    }
    edges
}

pub fn build(n: usize, edges: &[(u32, u32)]) -> PageGraph {
    build_csr(edges.iter().map(|&(a, b)| (PageId(a), PageId(b))), n, titles(n)).unwrap()
}

/// Adjacency sets with self-loops removed.
pub fn naive_adjacency(n: usize, edges: &[(u32, u32)]) -> Vec<BTreeSet<u32>> {
    let mut adj = vec![BTreeSet::new(); n];
    for &(a, b) in edges {
        if a != b {
            adj[a as usize].insert(b);
        }
    }
    adj
}

/// All-pairs shortest hop counts; `d[u][v]` is the distance from u to v.
pub fn floyd_warshall(n: usize, edges: &[(u32, u32)]) -> Vec<Vec<u32>> {
    let mut d = vec![vec![INF; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0;
    }
    for &(a, b) in edges {
        if a != b {
            d[a as usize][b as usize] = 1;
        }
    }
    for k in 0..n {
        for i in 0..n {
            if d[i][k] == INF {
                continue;
            }
            for j in 0..n {
                if d[k][j] == INF {
                    continue;
                }
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    d
}

/// Largest strongly connected component by mutual reachability; ties go
/// to the component holding the smallest node id.
pub fn brute_largest_scc(n: usize, edges: &[(u32, u32)]) -> Vec<u32> {
    let d = floyd_warshall(n, edges);
    let mut best: Vec<u32> = Vec::new();
    let mut assigned = vec![false; n];
    for u in 0..n {
        if assigned[u] {
            continue;
        }
        let comp: Vec<u32> = (0..n)
            .filter(|&v| d[u][v] != INF && d[v][u] != INF)
            .map(|v| v as u32)
            .collect();
        for &v in &comp {
            assigned[v as usize] = true;
        }
        // Components are visited in order of their smallest member, so a
        // strict comparison keeps the earliest on ties.
        if comp.len() > best.len() {
            best = comp;
        }
    }
    best
}

static BENCH: OnceLock<PageGraph> = OnceLock::new();

/// 10k-page synthetic graph used wherever benchmark scale is needed.
pub fn benchmark_graph() -> &'static PageGraph {
    BENCH.get_or_init(|| synthetic_graph(&SynthParams::wiki_like(10_000), 42))
}

/// Hand-built trajectory over string page names. Each consecutive pair in
/// `history` becomes one step.
pub fn fixture_trajectory(agent: &str, split: Split, optimal: u32, history: &[&str], outcome: Outcome) -> GameTrajectory {
    let steps: Vec<StepRecord> = history
        .windows(2)
        .enumerate()
        .map(|(i, w)| StepRecord {
            step_index: i,
            page_before: w[0].to_owned(),
            presented: vec![w[1].to_owned()],
            raw_response: "0".into(),
            attempts: 1,
            chosen_index: Some(0),
            page_after: Some(w[1].to_owned()),
            tokens_in: 100,
            tokens_out: 10,
            latency_us: 0,
            cost: None,
        })
        .collect();
    GameTrajectory {
        snapshot: "00000000".into(),
        player: agent.to_owned(),
        agent: AgentDescriptor::new(agent, false),
        task: TaskRecord {
            source: history[0].to_owned(),
            target: "T".into(),
            optimal_length: optimal,
            split,
            snapshot: "00000000".into(),
        },
        config: GameConfig::default(),
        totals: Totals::from_steps(&steps),
        steps_taken: steps.len() as u32,
        steps,
        history: history.iter().map(|s| s.to_string()).collect(),
        outcome,
    }
}

pub fn success() -> Outcome {
    Outcome::Success
}

pub fn failure(r: FailureReason) -> Outcome {
    Outcome::Failure(r)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Length histogram of a task list.
pub fn length_counts<I: IntoIterator<Item = u32>>(lengths: I) -> BTreeMap<u32, usize> {
    let mut m = BTreeMap::new();
    for l in lengths {
        *m.entry(l).or_default() += 1;
    }
    m
}

/// Hop counts from `s` by a plain queue over forward edges.
pub fn bfs_from(g: &PageGraph, s: PageId) -> Vec<u32> {
    let mut d = vec![INF; g.num_nodes()];
    d[s.index()] = 0;
    let mut q = VecDeque::from([s]);
    while let Some(u) = q.pop_front() {
        for v in g.out_neighbors(u) {
            if d[v.index()] == INF {
                d[v.index()] = d[u.index()] + 1;
                q.push_back(v);
            }
        }
    }
    d
}

pub fn edge_set(g: &PageGraph) -> HashSet<(u32, u32)> {
    g.edges().map(|(a, b)| (a.0, b.0)).collect()
}

pub fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

pub fn golden_graph() -> PageGraph {
    synthetic_graph(&SynthParams::wiki_like(2000), 7)
}

/// Five (task, seed) fixtures, some advanced a few greedy steps so the
/// history block has several lines. The last one starts on the page with the
/// most links so the cap is in force.
pub fn golden_fixtures(g: &PageGraph, cache: &DistanceCache) -> Vec<(String, String)> {
    let spec = SplitSpec::balanced(Split::Custom, 4, &[3, 5]).unwrap();
    let mut tasks = generate_split(g, cache, &spec, 2024, &HashSet::new(), "golden").unwrap();
    let hub = g.node_ids().max_by_key(|&v| (g.out_degree(v), std::cmp::Reverse(v))).unwrap();
    assert!(g.out_degree(hub) > 50);
    let far = tasks[0].target;
    tasks.push(TaskInstance {
        source: hub,
        target: far,
        optimal_length: cache.get(far).unwrap().get(hub),
        split: Split::Custom,
        snapshot: "golden".into(),
    });
    let advance = [0usize, 2, 1, 2, 0];
    let seeds = [1u64, 7, 42, 1234, 99];

    tasks
        .into_iter()
        .zip(advance)
        .zip(seeds)
        .enumerate()
        .map(|(k, ((task, steps), seed))| {
            let field = cache.get(task.target).unwrap();
            let mut game = Game::new(task, GameConfig::default().with_seed(seed), g, &field).unwrap();
            for _ in 0..steps {
                let obs = game.observation(g);
                let view = PrivilegedView {
                    graph: g,
                    field: &field,
                    presented: game.presented(),
                };
                let reply = OracleGreedyAgent.decide(&obs, Some(&view)).unwrap();
                let i = parse_choice(&reply.raw_text, obs.max_index).unwrap();
                game.apply_choice(g, &field, i, reply.raw_text, 1, StepUsage::default()).unwrap();
            }
            assert!(game.is_running());
            (format!("prompt-{}.txt", k + 1), game.observation(g).user_text)
        })
        .collect()
}

