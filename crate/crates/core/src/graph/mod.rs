//! Immutable hyperlink graph in compressed-sparse-row layout.
//!
//! Node ids are dense `u32` indices. Every row of the adjacency is sorted
//! strictly ascending, which doubles as deduplication, and self-loops are
//! dropped when the graph is built.

mod bfs;
mod cache;
mod io;
mod scc;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bfs::{distances_from, distances_to, DistanceField, ReverseGraph, UNREACHABLE};
pub use cache::{DistanceCache, DistanceCacheError, DEFAULT_LRU_CAPACITY};
pub use io::{
    load_distance_field, load_graph, read_graph, save_distance_field, save_graph, write_graph,
    CacheFormatError, DISTANCE_MAGIC, FORMAT_VERSION, GRAPH_MAGIC,
};
pub use scc::{largest_scc, strongly_connected_components, SccResult};

/// Dense page index into a [`PageGraph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PageId(pub u32);

impl PageId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for PageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl From<u32> for PageId {
    fn from(v: u32) -> Self {
        PageId(v)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("edge ({from}, {to}) out of range for graph with {num_nodes} nodes")]
    EdgeOutOfRange {
        from: u32,
        to: u32,
        num_nodes: usize,
    },
    #[error("expected {expected} titles, got {actual}")]
    TitleCount { expected: usize, actual: usize },
    #[error("duplicate title after normalization: {0:?}")]
    DuplicateTitle(String),
    #[error("graph has {0} nodes, more than a u32 id can address")]
    TooManyNodes(usize),
    #[error("graph is empty")]
    Empty,
    #[error("invalid CSR structure: {0}")]
    InvalidStructure(String),
}

/// Canonical form of a page title: underscores become spaces, whitespace
/// runs collapse to a single space, and the ends are trimmed. Case is kept.
pub fn normalize_title(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for word in raw
        .split(|c: char| c == '_' || c.is_whitespace())
        .filter(|w| !w.is_empty())
    {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// Directed page graph. Immutable after construction.
#[derive(Clone, PartialEq, Eq)]
pub struct PageGraph {
    row_ptr: Vec<u64>,
    col_indices: Vec<u32>,
    titles: Vec<String>,
    title_index: HashMap<String, PageId>,
}

impl fmt::Debug for PageGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PageGraph")
            .field("num_nodes", &self.num_nodes())
            .field("nnz", &self.nnz())
            .finish()
    }
}

/// Builds a canonical CSR graph: rows sorted, parallel edges merged,
/// self-loops removed. Titles are normalized and must be unique.
pub fn build_csr<I>(edges: I, num_nodes: usize, titles: Vec<String>) -> Result<PageGraph, GraphError>
where
    I: IntoIterator<Item = (PageId, PageId)>,
{
    if num_nodes > u32::MAX as usize {
        return Err(GraphError::TooManyNodes(num_nodes));
    }
    if titles.len() != num_nodes {
        return Err(GraphError::TitleCount {
            expected: num_nodes,
            actual: titles.len(),
        });
    }

    let mut pairs: Vec<(u32, u32)> = Vec::new();
    for (s, t) in edges {
        if s.index() >= num_nodes || t.index() >= num_nodes {
            return Err(GraphError::EdgeOutOfRange {
                from: s.0,
                to: t.0,
                num_nodes,
            });
        }
        if s != t {
            pairs.push((s.0, t.0));
        }
    }
    pairs.sort_unstable();
    pairs.dedup();

    let mut row_ptr = vec![0u64; num_nodes + 1];
    for &(s, _) in &pairs {
        row_ptr[s as usize + 1] += 1;
    }
    for i in 0..num_nodes {
        row_ptr[i + 1] += row_ptr[i];
    }
    let col_indices = pairs.into_iter().map(|(_, t)| t).collect();

    let titles: Vec<String> = titles.iter().map(|t| normalize_title(t)).collect();
    let title_index = index_titles(&titles)?;

    Ok(PageGraph {
        row_ptr,
        col_indices,
        titles,
        title_index,
    })
}

fn index_titles(titles: &[String]) -> Result<HashMap<String, PageId>, GraphError> {
    let mut index = HashMap::with_capacity(titles.len());
    for (i, t) in titles.iter().enumerate() {
        if index.insert(t.clone(), PageId(i as u32)).is_some() {
            return Err(GraphError::DuplicateTitle(t.clone()));
        }
    }
    Ok(index)
}

impl PageGraph {
    /// Assembles a graph from raw CSR arrays, validating every invariant.
    /// Titles are taken as-is and must already be normalized.
    pub fn from_raw_parts(
        row_ptr: Vec<u64>,
        col_indices: Vec<u32>,
        titles: Vec<String>,
    ) -> Result<Self, GraphError> {
        let n = titles.len();
        if row_ptr.len() != n + 1 {
            return Err(GraphError::InvalidStructure(format!(
                "row_ptr has length {}, expected {}",
                row_ptr.len(),
                n + 1
            )));
        }
        if row_ptr[0] != 0 || row_ptr[n] != col_indices.len() as u64 {
            return Err(GraphError::InvalidStructure(
                "row_ptr endpoints do not match nnz".into(),
            ));
        }
        for i in 0..n {
            let (lo, hi) = (row_ptr[i], row_ptr[i + 1]);
            if lo > hi {
                return Err(GraphError::InvalidStructure(format!(
                    "row_ptr decreases at row {i}"
                )));
            }
            let row = &col_indices[lo as usize..hi as usize];
            for (k, &c) in row.iter().enumerate() {
                if c as usize >= n {
                    return Err(GraphError::EdgeOutOfRange {
                        from: i as u32,
                        to: c,
                        num_nodes: n,
                    });
                }
                if k > 0 && row[k - 1] >= c {
                    return Err(GraphError::InvalidStructure(format!(
                        "row {i} is not strictly increasing"
                    )));
                }
                if c as usize == i {
                    return Err(GraphError::InvalidStructure(format!("self-loop at {i}")));
                }
            }
        }
        let title_index = index_titles(&titles)?;
        Ok(PageGraph {
            row_ptr,
            col_indices,
            titles,
            title_index,
        })
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.titles.len()
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.col_indices.len()
    }

    pub fn row_ptr(&self) -> &[u64] {
        &self.row_ptr
    }

    pub fn col_indices(&self) -> &[u32] {
        &self.col_indices
    }

    pub fn titles(&self) -> &[String] {
        &self.titles
    }

    pub fn contains(&self, id: PageId) -> bool {
        id.index() < self.num_nodes()
    }

    /// Out-neighbors of `id` as the raw CSR slice, ascending.
    ///
    /// Panics if `id` is not a node of this graph.
    #[inline]
    pub fn neighbors(&self, id: PageId) -> &[u32] {
        let i = id.index();
        &self.col_indices[self.row_ptr[i] as usize..self.row_ptr[i + 1] as usize]
    }

    pub fn out_neighbors(&self, id: PageId) -> impl ExactSizeIterator<Item = PageId> + '_ {
        self.neighbors(id).iter().map(|&c| PageId(c))
    }

    #[inline]
    pub fn out_degree(&self, id: PageId) -> usize {
        let i = id.index();
        (self.row_ptr[i + 1] - self.row_ptr[i]) as usize
    }

    pub fn has_edge(&self, source: PageId, target: PageId) -> bool {
        self.neighbors(source).binary_search(&target.0).is_ok()
    }

    pub fn title(&self, id: PageId) -> &str {
        &self.titles[id.index()]
    }

    /// Looks up a page by title; the query is normalized first.
    pub fn lookup(&self, title: &str) -> Option<PageId> {
        self.title_index
            .get(title)
            .or_else(|| self.title_index.get(&normalize_title(title)))
            .copied()
    }

    pub fn edges(&self) -> impl Iterator<Item = (PageId, PageId)> + '_ {
        (0..self.num_nodes()).flat_map(move |i| {
            let s = PageId(i as u32);
            self.out_neighbors(s).map(move |t| (s, t))
        })
    }

    pub fn node_ids(&self) -> impl ExactSizeIterator<Item = PageId> {
        (0..self.num_nodes() as u32).map(PageId)
    }
}
