use std::collections::VecDeque;

use crate::grid::{GridError, GridModel};

/// Radial tree rooted at the slack bus.
#[derive(Debug, Clone)]
pub struct RadialTopology {
    pub root: usize,
    /// Buses in breadth-first order from the root.
    pub order: Vec<usize>,
    /// Branch feeding each bus (`None` for the root).
    pub parent_branch: Vec<Option<usize>>,
    pub parent_bus: Vec<Option<usize>>,
}

impl RadialTopology {
    pub fn build(model: &GridModel) -> Result<Self, GridError> {
        let n = model.buses.len();
        let root = model.slack_index().ok_or(GridError::NoSlack)?;
        let index = model.bus_indices();
        let mut adjacency: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for (k, br) in model.branches.iter().enumerate() {
            let (f, t) = (index[br.from_bus.as_str()], index[br.to_bus.as_str()]);
            adjacency[f].push((t, k));
            adjacency[t].push((f, k));
        }
        if model.branches.len() + 1 != n {
            return Err(GridError::NonRadial(format!(
                "{} branches for {} buses (a tree needs {})",
                model.branches.len(),
                n,
                n.saturating_sub(1)
            )));
        }

        let mut parent_branch = vec![None; n];
        let mut parent_bus = vec![None; n];
        let mut visited = vec![false; n];
        let mut order = Vec::with_capacity(n);
        let mut queue = VecDeque::from([root]);
        visited[root] = true;
        while let Some(b) = queue.pop_front() {
            order.push(b);
            for &(next, k) in &adjacency[b] {
                if Some(k) == parent_branch[b] {
                    continue;
                }
                if visited[next] {
                    return Err(GridError::NonRadial(format!(
                        "bus {} is reachable by more than one path",
                        model.buses[next].id
                    )));
                }
                let (parent, child) = (&model.buses[b], &model.buses[next]);
                if !child.phases.is_subset_of(parent.phases) {
                    return Err(GridError::NonRadial(format!(
                        "bus {} has phases {} not fed by parent {} ({})",
                        child.id, child.phases, parent.id, parent.phases
                    )));
                }
                visited[next] = true;
                parent_branch[next] = Some(k);
                parent_bus[next] = Some(b);
                queue.push_back(next);
            }
        }
        if let Some(orphan) = visited.iter().position(|v| !v) {
            return Err(GridError::NonRadial(format!(
                "bus {} is not connected to the source",
                model.buses[orphan].id
            )));
        }
        Ok(RadialTopology { root, order, parent_branch, parent_bus })
    }
}
