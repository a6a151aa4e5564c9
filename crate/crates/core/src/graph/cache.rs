use std::collections::hash_map::Entry;
use std::collections::{HashMap, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use thiserror::Error;

use super::io::{load_distance_field, save_distance_field, CacheFormatError};
use super::{DistanceField, PageGraph, PageId, ReverseGraph};

pub const DEFAULT_LRU_CAPACITY: usize = 64;

#[derive(Debug, Error)]
pub enum DistanceCacheError {
    #[error("target {0} is not a node of the graph")]
    UnknownTarget(PageId),
    #[error("distance store for target {target}: {source}")]
    Store {
        target: PageId,
        #[source]
        source: CacheFormatError,
    },
    #[error("stored field for target {target} has {found} nodes, graph has {expected}")]
    Stale {
        target: PageId,
        found: usize,
        expected: usize,
    },
}

struct Lru {
    capacity: usize,
    order: VecDeque<PageId>,
    fields: HashMap<PageId, Arc<DistanceField>>,
}

impl Lru {
    fn get(&mut self, t: PageId) -> Option<Arc<DistanceField>> {
        let f = self.fields.get(&t)?.clone();
        if let Some(pos) = self.order.iter().position(|&x| x == t) {
            self.order.remove(pos);
        }
        self.order.push_back(t);
        Some(f)
    }

    fn insert(&mut self, t: PageId, f: Arc<DistanceField>) {
        if self.capacity == 0 {
            return;
        }
        while self.fields.len() >= self.capacity {
            match self.order.pop_front() {
                Some(old) => {
                    self.fields.remove(&old);
                }
                None => break,
            }
        }
        self.fields.insert(t, f);
        self.order.push_back(t);
    }
}

/// Per-target distance fields, computed on demand by reverse BFS, kept in a
/// small in-memory LRU, and optionally persisted one file per target.
///
/// All lookups go through one lock, so a field is computed at most once
/// even under concurrent callers, and store writes for a key never race.
pub struct DistanceCache {
    reverse: ReverseGraph,
    num_nodes: usize,
    store: Option<PathBuf>,
    lru: Mutex<Lru>,
    computed: AtomicUsize,
}

impl DistanceCache {
    pub fn new(g: &PageGraph) -> Self {
        Self::with_capacity(g, DEFAULT_LRU_CAPACITY)
    }

    pub fn with_capacity(g: &PageGraph, capacity: usize) -> Self {
        Self {
            reverse: ReverseGraph::new(g),
            num_nodes: g.num_nodes(),
            store: None,
            lru: Mutex::new(Lru {
                capacity,
                order: VecDeque::new(),
                fields: HashMap::new(),
            }),
            computed: AtomicUsize::new(0),
        }
    }

    /// Persists fields under `dir` as `dist-<target>.wkrd`.
    pub fn with_store(mut self, dir: impl Into<PathBuf>) -> Self {
        self.store = Some(dir.into());
        self
    }

    pub fn store_dir(&self) -> Option<&Path> {
        self.store.as_deref()
    }

    pub fn file_for(dir: &Path, target: PageId) -> PathBuf {
        dir.join(format!("dist-{}.wkrd", target.0))
    }

    /// Number of BFS runs performed so far.
    pub fn computations(&self) -> usize {
        self.computed.load(Ordering::Relaxed)
    }

    pub fn reverse_graph(&self) -> &ReverseGraph {
        &self.reverse
    }

    pub fn get(&self, target: PageId) -> Result<Arc<DistanceField>, DistanceCacheError> {
        if target.index() >= self.num_nodes {
            return Err(DistanceCacheError::UnknownTarget(target));
        }
        let mut lru = self.lru.lock().expect("distance cache poisoned");
        if let Some(f) = lru.get(target) {
            return Ok(f);
        }

        let field = match &self.store {
            Some(dir) => {
                let path = Self::file_for(dir, target);
                if path.exists() {
                    let f = load_distance_field(&path)
                        .map_err(|source| DistanceCacheError::Store { target, source })?;
                    if f.len() != self.num_nodes || f.target() != target {
                        return Err(DistanceCacheError::Stale {
                            target,
                            found: f.len(),
                            expected: self.num_nodes,
                        });
                    }
                    f
                } else {
                    let f = self.compute(target);
                    std::fs::create_dir_all(dir)
                        .map_err(|e| DistanceCacheError::Store {
                            target,
                            source: e.into(),
                        })?;
                    save_distance_field(&f, &path)
                        .map_err(|source| DistanceCacheError::Store { target, source })?;
                    f
                }
            }
            None => self.compute(target),
        };
        let field = Arc::new(field);
        lru.insert(target, field.clone());
        Ok(field)
    }

    /// Fills the cache for every target, returning the fields in input order.
    pub fn populate<I>(&self, targets: I) -> Result<HashMap<PageId, Arc<DistanceField>>, DistanceCacheError>
    where
        I: IntoIterator<Item = PageId>,
    {
        let mut out = HashMap::new();
        for t in targets {
            if let Entry::Vacant(slot) = out.entry(t) {
                slot.insert(self.get(t)?);
            }
        }
        Ok(out)
    }

    fn compute(&self, target: PageId) -> DistanceField {
        self.computed.fetch_add(1, Ordering::Relaxed);
        self.reverse.distances_to(target)
    }
}
