use super::{GraphError, PageGraph, PageId};

const UNVISITED: u32 = u32::MAX;

/// Strongly connected component decomposition plus the remapping onto the
/// largest component.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SccResult {
    /// Component id of every node. Ids are assigned in the order Tarjan
    /// completes components (reverse topological order of the condensation).
    pub component_ids: Vec<u32>,
    pub num_components: usize,
    /// Members of the largest component, ascending.
    pub largest_component: Vec<PageId>,
    /// Old id → new id inside the induced subgraph; `None` outside it.
    pub remap: Vec<Option<PageId>>,
}

impl SccResult {
    pub fn remapped(&self, old: PageId) -> Option<PageId> {
        self.remap.get(old.index()).copied().flatten()
    }

    pub fn component_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.num_components];
        for &c in &self.component_ids {
            sizes[c as usize] += 1;
        }
        sizes
    }
}

/// Iterative Tarjan. Returns the component id per node and the number of
/// components.
pub fn strongly_connected_components(g: &PageGraph) -> (Vec<u32>, usize) {
    let n = g.num_nodes();
    let mut index = vec![UNVISITED; n];
    let mut lowlink = vec![0u32; n];
    let mut on_stack = vec![false; n];
    let mut comp = vec![UNVISITED; n];
    let mut stack: Vec<u32> = Vec::new();
    // (node, position of the next neighbor to examine)
    let mut call: Vec<(u32, usize)> = Vec::new();
    let mut next_index = 0u32;
    let mut next_comp = 0u32;

    for root in 0..n as u32 {
        if index[root as usize] != UNVISITED {
            continue;
        }
        index[root as usize] = next_index;
        lowlink[root as usize] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root as usize] = true;
        call.push((root, 0));

        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            let row = g.neighbors(PageId(v));
            if *pos < row.len() {
                let w = row[*pos];
                *pos += 1;
                let wi = w as usize;
                if index[wi] == UNVISITED {
                    index[wi] = next_index;
                    lowlink[wi] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[wi] = true;
                    call.push((w, 0));
                } else if on_stack[wi] {
                    let vi = v as usize;
                    lowlink[vi] = lowlink[vi].min(index[wi]);
                }
                continue;
            }

            call.pop();
            let vi = v as usize;
            if let Some(&(parent, _)) = call.last() {
                let pi = parent as usize;
                lowlink[pi] = lowlink[pi].min(lowlink[vi]);
            }
            if lowlink[vi] == index[vi] {
                loop {
                    let w = stack.pop().expect("tarjan stack underflow");
                    on_stack[w as usize] = false;
                    comp[w as usize] = next_comp;
                    if w == v {
                        break;
                    }
                }
                next_comp += 1;
            }
        }
    }
    (comp, next_comp as usize)
}

/// Restricts `g` to its largest strongly connected component. Ties on size
/// go to the component holding the smallest node id. New ids preserve the
/// relative order of old ids.
pub fn largest_scc(g: &PageGraph) -> Result<(PageGraph, SccResult), GraphError> {
    let n = g.num_nodes();
    if n == 0 {
        return Err(GraphError::Empty);
    }
    let (component_ids, num_components) = strongly_connected_components(g);

    let mut sizes = vec![0usize; num_components];
    let mut first_member = vec![u32::MAX; num_components];
    for (v, &c) in component_ids.iter().enumerate() {
        sizes[c as usize] += 1;
        first_member[c as usize] = first_member[c as usize].min(v as u32);
    }
    let best = (0..num_components)
        .max_by(|&a, &b| {
            sizes[a]
                .cmp(&sizes[b])
                .then(first_member[b].cmp(&first_member[a]))
        })
        .expect("at least one component") as u32;

    let mut remap = vec![None; n];
    let mut largest_component = Vec::with_capacity(sizes[best as usize]);
    for (v, &c) in component_ids.iter().enumerate() {
        if c == best {
            remap[v] = Some(PageId(largest_component.len() as u32));
            largest_component.push(PageId(v as u32));
        }
    }

    let mut row_ptr = Vec::with_capacity(largest_component.len() + 1);
    row_ptr.push(0u64);
    let mut col_indices = Vec::new();
    let mut titles = Vec::with_capacity(largest_component.len());
    for &old in &largest_component {
        // Rows stay sorted because the remap is monotone.
        col_indices.extend(g.neighbors(old).iter().filter_map(|&w| remap[w as usize].map(|p| p.0)));
        row_ptr.push(col_indices.len() as u64);
        titles.push(g.title(old).to_owned());
    }
    let sub = PageGraph::from_raw_parts(row_ptr, col_indices, titles)?;

    Ok((
        sub,
        SccResult {
            component_ids,
            num_components,
            largest_component,
            remap,
        },
    ))
}
