//! Search-tree size: random-probe estimators and exact counting.

use std::collections::BTreeMap;
use std::fmt::Debug;

use ispace_core::Candidate;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::order::{expand, DecisionOrder};
use crate::stats::{interval, mean_se, CiMethod, Interval};

/// A finite tree given by its root and a pure, ordered children function.
pub trait Tree {
    type Node: Clone;
    fn root(&self) -> Self::Node;
    fn children(&self, n: &Self::Node) -> Vec<Self::Node>;
    /// Whether a childless node is a leaf worth counting.
    fn is_solution(&self, _: &Self::Node) -> bool {
        true
    }
}

/// The search tree of a space: the children of a candidate are the
/// propagation-surviving values of its next open instance.
pub struct CandidateTree {
    pub root: Candidate,
    pub order: DecisionOrder,
}

impl Tree for CandidateTree {
    type Node = Candidate;

    fn root(&self) -> Candidate {
        self.root.clone()
    }

    fn children(&self, c: &Candidate) -> Vec<Candidate> {
        match expand(c, &self.order) {
            None => Vec::new(),
            Some((_, kids)) => kids.into_iter().filter_map(|(_, r)| r.ok()).collect(),
        }
    }

    fn is_solution(&self, c: &Candidate) -> bool {
        c.is_fully_specified()
    }
}

/// Stratum key of a candidate at `depth`: depth counted negatively, then
/// the number of open instances.
pub fn depth_open_key(c: &Candidate, depth: usize) -> (i64, usize) {
    (-(depth as i64), c.open_choices().len())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Count {
    /// Childless solution nodes.
    #[default]
    Leaves,
    Nodes,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub method: String,
    pub point: f64,
    pub ci: Interval,
    pub iterations: u64,
    pub seed: u64,
    pub count: Count,
}

/// One random descent: the product of branching factors met on the way.
pub fn knuth_probe<T: Tree>(tree: &T, count: Count, rng: &mut impl Rng) -> f64 {
    let mut node = tree.root();
    let mut weight = 1.0;
    let mut nodes = 1.0;
    loop {
        let mut kids = tree.children(&node);
        if kids.is_empty() {
            return match count {
                Count::Nodes => nodes,
                Count::Leaves if tree.is_solution(&node) => weight,
                Count::Leaves => 0.0,
            };
        }
        weight *= kids.len() as f64;
        nodes += weight;
        let k = rng.gen_range(0..kids.len());
        node = kids.swap_remove(k);
    }
}

pub fn knuth_estimate<T: Tree>(
    tree: &T,
    iterations: u64,
    count: Count,
    ci: CiMethod,
    seed: u64,
    rng: &mut impl Rng,
) -> Estimate {
    let xs: Vec<f64> = (0..iterations.max(1)).map(|_| knuth_probe(tree, count, rng)).collect();
    let (mean, se) = mean_se(&xs);
    Estimate { method: "knuth".into(), point: mean, ci: interval(mean, se, ci), iterations, seed, count }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StratifierError {
    #[error("stratum key does not decrease from {parent} to {child} at depth {depth}")]
    NotDecreasing { parent: String, child: String, depth: usize },
}

/// One heuristic-sampling probe: strata are expanded from the highest key
/// down; each keeps one representative and the total weight of the nodes
/// it stands for, a new node replacing the representative with probability
/// proportional to its weight.
pub fn chen_probe<T: Tree, K: Ord + Clone + Debug>(
    tree: &T,
    key: &dyn Fn(&T::Node, usize) -> K,
    count: Count,
    rng: &mut impl Rng,
) -> Result<f64, StratifierError> {
    let mut queue: BTreeMap<K, (T::Node, usize, f64)> = BTreeMap::new();
    let root = tree.root();
    queue.insert(key(&root, 0), (root, 0, 1.0));
    let mut total = 0.0;
    while let Some((k, (node, depth, w))) = queue.pop_last() {
        let kids = tree.children(&node);
        if count == Count::Nodes || (kids.is_empty() && tree.is_solution(&node)) {
            total += w;
        }
        for child in kids {
            let ck = key(&child, depth + 1);
            if ck >= k {
                return Err(StratifierError::NotDecreasing {
                    parent: format!("{k:?}"),
                    child: format!("{ck:?}"),
                    depth: depth + 1,
                });
            }
            match queue.get_mut(&ck) {
                None => {
                    queue.insert(ck, (child, depth + 1, w));
                }
                Some(slot) => {
                    slot.2 += w;
                    if rng.gen_bool(w / slot.2) {
                        slot.0 = child;
                        slot.1 = depth + 1;
                    }
                }
            }
        }
    }
    Ok(total)
}

pub fn chen_estimate<T: Tree, K: Ord + Clone + Debug>(
    tree: &T,
    iterations: u64,
    key: &dyn Fn(&T::Node, usize) -> K,
    count: Count,
    ci: CiMethod,
    seed: u64,
    rng: &mut impl Rng,
) -> Result<Estimate, StratifierError> {
    let xs = (0..iterations.max(1)).map(|_| chen_probe(tree, key, count, rng)).collect::<Result<Vec<f64>, _>>()?;
    let (mean, se) = mean_se(&xs);
    Ok(Estimate { method: "chen".into(), point: mean, ci: interval(mean, se, ci), iterations, seed, count })
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExactCount {
    /// Childless solution nodes.
    pub leaves: u64,
    /// Childless nodes that are not solutions.
    pub dead_leaves: u64,
    pub nodes: u64,
    /// Nodes at each depth, root at 0.
    pub per_depth: Vec<u64>,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("the tree has more than {budget} nodes")]
pub struct TooLarge {
    pub budget: u64,
}

impl ExactCount {
    fn visit(&mut self, depth: usize, childless: bool, solution: bool, budget: u64) -> Result<(), TooLarge> {
        self.nodes += 1;
        if self.nodes > budget {
            return Err(TooLarge { budget });
        }
        if self.per_depth.len() <= depth {
            self.per_depth.resize(depth + 1, 0);
        }
        self.per_depth[depth] += 1;
        if childless {
            if solution {
                self.leaves += 1;
            } else {
                self.dead_leaves += 1;
            }
        }
        Ok(())
    }
}

/// Depth-first count, refusing trees of more than `budget` nodes.
pub fn exact_count<T: Tree>(tree: &T, budget: u64) -> Result<ExactCount, TooLarge> {
    fn go<T: Tree>(tree: &T, n: &T::Node, depth: usize, budget: u64, acc: &mut ExactCount) -> Result<(), TooLarge> {
        let kids = tree.children(n);
        acc.visit(depth, kids.is_empty(), kids.is_empty() && tree.is_solution(n), budget)?;
        for k in &kids {
            go(tree, k, depth + 1, budget, acc)?;
        }
        Ok(())
    }
    let mut acc = ExactCount::default();
    go(tree, &tree.root(), 0, budget, &mut acc)?;
    Ok(acc)
}

/// Nodes at `depth`, built level by level.
pub fn level<T: Tree>(tree: &T, depth: usize, budget: u64) -> Result<Vec<T::Node>, TooLarge> {
    let mut cur = vec![tree.root()];
    let mut seen = 1u64;
    for _ in 0..depth {
        let mut next = Vec::new();
        for n in &cur {
            next.extend(tree.children(n));
        }
        seen += next.len() as u64;
        if seen > budget {
            return Err(TooLarge { budget });
        }
        cur = next;
    }
    Ok(cur)
}

/// Breadth-first count: an independent traversal of [`exact_count`].
pub fn exact_count_by_levels<T: Tree>(tree: &T, budget: u64) -> Result<ExactCount, TooLarge> {
    let mut acc = ExactCount::default();
    let mut cur = vec![tree.root()];
    let mut depth = 0;
    while !cur.is_empty() {
        let mut next = Vec::new();
        for n in &cur {
            let kids = tree.children(n);
            acc.visit(depth, kids.is_empty(), kids.is_empty() && tree.is_solution(n), budget)?;
            next.extend(kids);
        }
        cur = next;
        depth += 1;
    }
    Ok(acc)
}
