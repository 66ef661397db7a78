//! How much of the search tree the bound removes at a given depth.

use ispace_core::Candidate;
use serde::{Deserialize, Serialize};

use crate::estimate::{CandidateTree, TooLarge, Tree};
use crate::model::CostModel;
use crate::order::DecisionOrder;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub depth: usize,
    pub nodes: u64,
    /// Nodes whose bound is at least the reference cost.
    pub pruned: u64,
}

impl LevelStats {
    pub fn fraction(&self) -> f64 {
        if self.nodes == 0 {
            0.0
        } else {
            self.pruned as f64 / self.nodes as f64
        }
    }

    /// Size of the level over its unpruned part.
    pub fn factor(&self) -> f64 {
        self.nodes as f64 / (self.nodes - self.pruned).max(1) as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruneProfile {
    pub order: DecisionOrder,
    pub reference: u64,
    pub levels: Vec<LevelStats>,
}

impl PruneProfile {
    /// The first level holding at least `min_nodes` nodes.
    pub fn matched(&self, min_nodes: u64) -> Option<&LevelStats> {
        self.levels.iter().find(|l| l.nodes >= min_nodes)
    }
}

/// Breadth-first profile of the full tree (no pruning while descending)
/// until a level holds `min_nodes` nodes or the tree ends.
pub fn prune_profile<M: CostModel>(
    root: &Candidate,
    order: &DecisionOrder,
    model: &M,
    reference: u64,
    min_nodes: u64,
    budget: u64,
) -> Result<PruneProfile, TooLarge> {
    let tree = CandidateTree { root: root.clone(), order: order.clone() };
    let mut levels = Vec::new();
    let mut cur = vec![tree.root()];
    let mut seen = 0u64;
    let mut depth = 0;
    while !cur.is_empty() {
        seen += cur.len() as u64;
        if seen > budget {
            return Err(TooLarge { budget });
        }
        let pruned = cur.iter().filter(|c| model.bound(c) >= reference).count() as u64;
        levels.push(LevelStats { depth, nodes: cur.len() as u64, pruned });
        if cur.len() as u64 >= min_nodes {
            break;
        }
        cur = cur.iter().flat_map(|c| tree.children(c)).collect();
        depth += 1;
    }
    Ok(PruneProfile { order: order.clone(), reference, levels })
}
