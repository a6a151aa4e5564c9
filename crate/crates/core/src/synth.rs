//! Seeded synthetic hyperlink graphs.
//!
//! Pages sit on a ring and mostly link to nearby pages, with a sprinkling of
//! long-range links and a small set of hub pages carrying many outgoing
//! links. The mix gives short-ish but non-trivial shortest paths plus a
//! degree tail heavy enough to exercise the link cap.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::{build_csr, PageGraph, PageId};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub num_nodes: usize,
    /// Out-degree of ordinary pages is drawn uniformly from this range.
    pub min_degree: usize,
    pub max_degree: usize,
    /// Links of ordinary pages land within this many positions on the ring.
    pub window: usize,
    /// Probability that an ordinary link is rewired to a uniform target.
    pub long_range: f64,
    /// Fraction of pages that are hubs.
    pub hub_fraction: f64,
    pub hub_min_degree: usize,
    pub hub_max_degree: usize,
    /// Hub links stay within this many positions; 0 means anywhere.
    pub hub_window: usize,
}

impl SynthParams {
    /// Wiki-like defaults for `num_nodes` pages.
    pub fn wiki_like(num_nodes: usize) -> Self {
        Self {
            num_nodes,
            min_degree: 2,
            max_degree: 6,
            window: 12,
            long_range: 0.01,
            hub_fraction: 0.02,
            hub_min_degree: 60,
            hub_max_degree: 160,
            hub_window: num_nodes / 40,
        }
    }
}

/// Deterministic title for synthetic page `i`.
pub fn synthetic_title(i: usize) -> String {
    const SYL: [&str; 16] = [
        "ka", "lo", "mi", "ren", "sa", "tu", "vel", "no", "dra", "pe", "qui", "zor", "ba", "ix",
        "fen", "ul",
    ];
    let mut name = String::new();
    let mut x = i;
    loop {
        name.push_str(SYL[x % 16]);
        x /= 16;
        if x == 0 {
            break;
        }
    }
    let mut chars = name.chars();
    let first = chars.next().unwrap().to_ascii_uppercase();
    format!("{first}{} {i}", chars.as_str())
}

/// Raw edge list of a synthetic graph (may contain duplicates and
/// self-loops; `build_csr` canonicalizes them).
pub fn synthetic_edges(params: &SynthParams, seed: u64) -> Vec<(PageId, PageId)> {
    let n = params.num_nodes;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    if n < 2 {
        return edges;
    }
    let pick_near = |rng: &mut ChaCha8Rng, i: usize, window: usize| -> usize {
        let w = window.clamp(1, n - 1) as i64;
        let mut off = rng.random_range(-w..=w);
        if off == 0 {
            off = 1;
        }
        (i as i64 + off).rem_euclid(n as i64) as usize
    };
    for i in 0..n {
        // Ring successor keeps the whole graph strongly connected.
        edges.push((PageId(i as u32), PageId(((i + 1) % n) as u32)));
        let hub = rng.random_bool(params.hub_fraction.clamp(0.0, 1.0));
        if hub {
            let k = rng.random_range(params.hub_min_degree..=params.hub_max_degree.max(params.hub_min_degree));
            for _ in 0..k {
                let t = if params.hub_window == 0 {
                    rng.random_range(0..n)
                } else {
                    pick_near(&mut rng, i, params.hub_window)
                };
                edges.push((PageId(i as u32), PageId(t as u32)));
            }
        } else {
            let k = rng.random_range(params.min_degree..=params.max_degree.max(params.min_degree));
            for _ in 0..k {
                let t = if rng.random_bool(params.long_range.clamp(0.0, 1.0)) {
                    rng.random_range(0..n)
                } else {
                    pick_near(&mut rng, i, params.window)
                };
                edges.push((PageId(i as u32), PageId(t as u32)));
            }
        }
    }
    edges
}

pub fn synthetic_graph(params: &SynthParams, seed: u64) -> PageGraph {
    let titles = (0..params.num_nodes).map(synthetic_title).collect();
    build_csr(synthetic_edges(params, seed), params.num_nodes, titles)
        .expect("synthetic edges are in range")
}

/// Erdős–Rényi style digraph: each ordered pair is an edge with probability
/// `density`.
pub fn random_digraph(num_nodes: usize, density: f64, seed: u64) -> PageGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for s in 0..num_nodes {
        for t in 0..num_nodes {
            if s != t && rng.random_bool(density.clamp(0.0, 1.0)) {
                edges.push((PageId(s as u32), PageId(t as u32)));
            }
        }
    }
    let titles = (0..num_nodes).map(|i| format!("Node {i}")).collect();
    build_csr(edges, num_nodes, titles).expect("edges are in range")
}
