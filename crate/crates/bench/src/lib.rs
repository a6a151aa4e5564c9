//! Inputs shared by the benchmarks.

use wikirace_core::graph::{build_csr, PageGraph, PageId};
use wikirace_core::synth::{synthetic_edges, synthetic_title, SynthParams};
use wikirace_core::tasks::{generate_split, Split, SplitSpec};
use wikirace_core::{DistanceCache, TaskInstance};

/// Raw edge list and titles for a wiki-like graph of `n` pages.
pub fn raw_graph(n: usize, seed: u64) -> (Vec<(PageId, PageId)>, Vec<String>) {
    let edges = synthetic_edges(&SynthParams::wiki_like(n), seed);
    (edges, (0..n).map(synthetic_title).collect())
}

pub fn graph(n: usize, seed: u64) -> PageGraph {
    let (edges, titles) = raw_graph(n, seed);
    build_csr(edges, n, titles).expect("synthetic graph is valid")
}

/// A small easy-style split (lengths 3 and 4) for episode benchmarks.
pub fn tasks(g: &PageGraph, count: usize) -> Vec<TaskInstance> {
    let cache = DistanceCache::new(g);
    let spec = SplitSpec::balanced(Split::Easy, count, &[3, 4]).expect("even count");
    generate_split(g, &cache, &spec, 1, &Default::default(), "bench").expect("split")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_build() {
        let g = graph(2_000, 3);
        assert_eq!(g.num_nodes(), 2_000);
        assert_eq!(tasks(&g, 10).len(), 10);
    }
}
