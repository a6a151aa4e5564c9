use super::{PageGraph, PageId};

/// Distance value for nodes with no path to the target.
pub const UNREACHABLE: u32 = u32::MAX;

/// Hop distance from every node *to* one target page.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceField {
    target: PageId,
    dist: Vec<u32>,
}

impl DistanceField {
    pub fn from_parts(target: PageId, dist: Vec<u32>) -> Self {
        Self { target, dist }
    }

    pub fn target(&self) -> PageId {
        self.target
    }

    #[inline]
    pub fn get(&self, id: PageId) -> u32 {
        self.dist[id.index()]
    }

    /// `None` when `id` cannot reach the target.
    pub fn distance(&self, id: PageId) -> Option<u32> {
        match self.dist[id.index()] {
            UNREACHABLE => None,
            d => Some(d),
        }
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.dist
    }

    pub fn len(&self) -> usize {
        self.dist.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dist.is_empty()
    }
}

/// In-edge adjacency of a [`PageGraph`], used to search backwards from a
/// target.
#[derive(Debug, Clone)]
pub struct ReverseGraph {
    row_ptr: Vec<u64>,
    col_indices: Vec<u32>,
}

impl ReverseGraph {
    pub fn new(g: &PageGraph) -> Self {
        let n = g.num_nodes();
        let mut row_ptr = vec![0u64; n + 1];
        for &t in g.col_indices() {
            row_ptr[t as usize + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        let mut fill: Vec<u64> = row_ptr[..n].to_vec();
        let mut col_indices = vec![0u32; g.nnz()];
        // Sources are visited in ascending order, so each in-row ends up sorted.
        for s in 0..n {
            for &t in g.neighbors(PageId(s as u32)) {
                let slot = &mut fill[t as usize];
                col_indices[*slot as usize] = s as u32;
                *slot += 1;
            }
        }
        Self {
            row_ptr,
            col_indices,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.row_ptr.len() - 1
    }

    #[inline]
    pub fn in_neighbors(&self, id: PageId) -> &[u32] {
        let i = id.index();
        &self.col_indices[self.row_ptr[i] as usize..self.row_ptr[i + 1] as usize]
    }

    /// BFS over in-edges from `target`.
    pub fn distances_to(&self, target: PageId) -> DistanceField {
        DistanceField {
            target,
            dist: bfs(self.num_nodes(), target, |v| self.in_neighbors(v)),
        }
    }
}

fn bfs<'a, F>(n: usize, start: PageId, adj: F) -> Vec<u32>
where
    F: Fn(PageId) -> &'a [u32],
{
    let mut dist = vec![UNREACHABLE; n];
    let mut queue: Vec<u32> = Vec::with_capacity(n.min(1 << 16));
    dist[start.index()] = 0;
    queue.push(start.0);
    let mut head = 0;
    while head < queue.len() {
        let v = queue[head];
        head += 1;
        let next = dist[v as usize] + 1;
        for &w in adj(PageId(v)) {
            let slot = &mut dist[w as usize];
            if *slot == UNREACHABLE {
                *slot = next;
                queue.push(w);
            }
        }
    }
    dist
}

/// Shortest directed hop count from every node to `target`. Builds the
/// reverse adjacency on each call; reuse a [`ReverseGraph`] for many targets.
pub fn distances_to(g: &PageGraph, target: PageId) -> DistanceField {
    ReverseGraph::new(g).distances_to(target)
}

/// Shortest directed hop count from `source` to every node.
pub fn distances_from(g: &PageGraph, source: PageId) -> Vec<u32> {
    bfs(g.num_nodes(), source, |v| g.neighbors(v))
}
