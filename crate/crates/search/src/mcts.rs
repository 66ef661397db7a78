//! Monte-Carlo tree search with threshold-ascent selection and bound
//! pruning.

use ispace_core::Candidate;
use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::CostModel;
use crate::order::{expand, Decision, DecisionOrder};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    /// Maximal number of evaluated implementations.
    pub budget: u64,
    /// Maximal number of iterations; defaults to `50 * budget + 1000`.
    pub max_iterations: Option<u64>,
    /// Confidence parameter of the selection rule.
    pub delta: f64,
    /// Number of best costs forming the top bucket.
    pub bucket: usize,
    /// Ignore subtrees whose bound is not below the best cost.
    pub prune: bool,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig { budget: 2000, max_iterations: None, delta: 0.05, bucket: 20, prune: true, seed: 0 }
    }
}

/// One record per iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub iteration: u64,
    pub seed: u64,
    pub path: Vec<Decision>,
    /// Bound of every candidate along the path, root first.
    pub bounds: Vec<u64>,
    pub cost: Option<u64>,
    pub dead_end: Option<String>,
    pub evaluations: u64,
    pub best: Option<u64>,
}

#[derive(Clone, Debug)]
pub struct ExploreResult {
    pub best: Option<Candidate>,
    pub best_cost: Option<u64>,
    pub best_path: Vec<Decision>,
    pub evaluations: u64,
    pub iterations: u64,
    /// Every implementation not pruned by the bound has been evaluated.
    pub exhausted: bool,
    pub log: Vec<Event>,
}

/// `(s + α + √(2sα + α²)) / t`.
pub fn tag_score(s: u64, t: u64, alpha: f64) -> f64 {
    let s = s as f64;
    (s + alpha + (2.0 * s * alpha + alpha * alpha).sqrt()) / t as f64
}

/// Index of the arm `(s, t)` with the highest score, lowest on ties.
/// `rollouts` is the total number of rollouts, all arms are visited.
pub fn tag_select(arms: &[(u64, u64)], rollouts: u64, delta: f64) -> usize {
    let alpha = (2.0 * rollouts.max(1) as f64 * arms.len() as f64 / delta).ln();
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, &(s, t)) in arms.iter().enumerate() {
        let score = tag_score(s, t, alpha);
        if score > best_score {
            best = i;
            best_score = score;
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
enum Child {
    Dead,
    Node(usize),
}

#[derive(Clone, Debug)]
struct SearchNode {
    cand: Candidate,
    digest: String,
    parent: Option<usize>,
    decision: Option<Decision>,
    children: Option<Vec<(u32, Child)>>,
    /// Rollouts through the node.
    t: u64,
    /// Costs of those rollouts, sorted.
    costs: Vec<u64>,
    bound: u64,
    full: bool,
    exhausted: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct NodeState {
    parent: Option<usize>,
    decision: Option<Decision>,
    digest: String,
    children: Option<Vec<(u32, Child)>>,
    t: u64,
    costs: Vec<u64>,
    exhausted: bool,
}

/// Serializable state of a search.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: SearchConfig,
    pub order: DecisionOrder,
    nodes: Vec<NodeState>,
    bucket: Vec<u64>,
    rollouts: u64,
    evaluations: u64,
    iterations: u64,
    best: Option<(u64, Vec<Decision>)>,
    rng: ChaCha8Rng,
}

#[derive(Debug, Error)]
pub enum ResumeError {
    #[error("checkpoint does not match the space: {0}")]
    Mismatch(String),
}

pub struct Search<'m, M: CostModel> {
    pub config: SearchConfig,
    pub order: DecisionOrder,
    model: &'m M,
    nodes: Vec<SearchNode>,
    bucket: Vec<u64>,
    rollouts: u64,
    evaluations: u64,
    iterations: u64,
    best: Option<(u64, Candidate, Vec<Decision>)>,
    rng: ChaCha8Rng,
    log: Vec<Event>,
}

struct Outcome {
    decisions: Vec<Decision>,
    bounds: Vec<u64>,
    result: Result<(u64, Candidate), String>,
}

impl<'m, M: CostModel> Search<'m, M> {
    pub fn new(root: &Candidate, order: DecisionOrder, model: &'m M, config: SearchConfig) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut s = Search {
            config,
            order,
            model,
            nodes: Vec::new(),
            bucket: Vec::new(),
            rollouts: 0,
            evaluations: 0,
            iterations: 0,
            best: None,
            rng,
            log: Vec::new(),
        };
        s.push_node(root.clone(), None, None);
        s
    }

    fn push_node(&mut self, cand: Candidate, parent: Option<usize>, decision: Option<Decision>) -> usize {
        let bound = self.model.bound(&cand);
        let full = cand.is_fully_specified();
        self.nodes.push(SearchNode {
            digest: cand.digest_hex(),
            cand,
            parent,
            decision,
            children: None,
            t: 0,
            costs: Vec::new(),
            bound,
            full,
            exhausted: false,
        });
        self.nodes.len() - 1
    }

    pub fn best_cost(&self) -> Option<u64> {
        self.best.as_ref().map(|b| b.0)
    }

    fn threshold(&self) -> u64 {
        if self.bucket.len() < self.config.bucket {
            u64::MAX
        } else {
            *self.bucket.last().unwrap()
        }
    }

    fn pruned(&self, bound: u64) -> bool {
        self.config.prune && self.best_cost().is_some_and(|t| bound >= t)
    }

    fn eligible(&self, n: usize) -> Vec<usize> {
        let Some(children) = &self.nodes[n].children else { return Vec::new() };
        children
            .iter()
            .filter_map(|&(_, c)| match c {
                Child::Node(i) if !self.nodes[i].exhausted && !self.pruned(self.nodes[i].bound) => Some(i),
                _ => None,
            })
            .collect()
    }

    fn expand_node(&mut self, n: usize) {
        let cand = self.nodes[n].cand.clone();
        let Some((var, kids)) = expand(&cand, &self.order) else { return };
        let mut children = Vec::new();
        for (bit, res) in kids {
            let child = match res {
                Ok(c) => Child::Node(self.push_node(c, Some(n), Some(Decision::of(&cand, var, bit)))),
                Err(_) => Child::Dead,
            };
            children.push((bit, child));
        }
        self.nodes[n].children = Some(children);
    }

    fn max_iterations(&self) -> u64 {
        self.config.max_iterations.unwrap_or(self.config.budget.saturating_mul(50).saturating_add(1000))
    }

    pub fn is_exhausted(&self) -> bool {
        self.nodes[0].exhausted
    }

    /// Runs until the evaluation budget, the iteration cap or exhaustion.
    pub fn run(&mut self) {
        while self.evaluations < self.config.budget && self.iterations < self.max_iterations() && !self.is_exhausted() {
            self.iterate();
        }
    }

    fn iterate(&mut self) {
        self.iterations += 1;
        let mut path = vec![0usize];
        let mut cur = 0;
        let outcome = loop {
            if self.nodes[cur].full {
                break self.rollout(cur);
            }
            if self.nodes[cur].children.is_none() {
                self.expand_node(cur);
            }
            let elig = self.eligible(cur);
            if elig.is_empty() {
                break Outcome {
                    decisions: vec![],
                    bounds: vec![],
                    result: Err("every child is a dead end, exhausted or pruned".into()),
                };
            }
            if let Some(&u) = elig.iter().find(|&&i| self.nodes[i].t == 0) {
                path.push(u);
                break self.rollout(u);
            }
            let threshold = self.threshold();
            let arms: Vec<(u64, u64)> = elig
                .iter()
                .map(|&i| {
                    let n = &self.nodes[i];
                    (n.costs.partition_point(|&x| x <= threshold) as u64, n.t)
                })
                .collect();
            cur = elig[tag_select(&arms, self.rollouts, self.config.delta)];
            path.push(cur);
        };
        self.backpropagate(&path, outcome);
    }

    /// Weighted random descent from a tree node down to an implementation.
    fn rollout(&mut self, n: usize) -> Outcome {
        let mut c = self.nodes[n].cand.clone();
        let mut decisions = Vec::new();
        let mut bounds = Vec::new();
        loop {
            if c.is_fully_specified() {
                let result = self.model.evaluate(&c).map(|cost| (cost, c));
                return Outcome { decisions, bounds, result };
            }
            let (var, kids) = expand(&c, &self.order).expect("open choice");
            let alive: Vec<(u32, Candidate, u64)> = kids
                .into_iter()
                .filter_map(|(b, r)| {
                    r.ok().map(|x| {
                        let bound = self.model.bound(&x);
                        (b, x, bound)
                    })
                })
                .collect();
            if alive.is_empty() {
                return Outcome { decisions, bounds, result: Err("every value fails propagation".into()) };
            }
            let best = if self.config.prune { self.best_cost() } else { None };
            let weights: Vec<f64> = alive.iter().map(|x| ispace_gpu::bound::rollout_weight(x.2, best)).collect();
            let Ok(dist) = WeightedIndex::new(&weights) else {
                return Outcome { decisions, bounds, result: Err("every value is bounded above the best cost".into()) };
            };
            let k = dist.sample(&mut self.rng);
            decisions.push(Decision::of(&c, var, alive[k].0));
            bounds.push(alive[k].2);
            c = alive.into_iter().nth(k).unwrap().1;
        }
    }

    fn backpropagate(&mut self, path: &[usize], outcome: Outcome) {
        self.rollouts += 1;
        let cost = outcome.result.as_ref().ok().map(|r| r.0);
        for &i in path {
            let n = &mut self.nodes[i];
            n.t += 1;
            if let Some(x) = cost {
                let at = n.costs.partition_point(|&y| y <= x);
                n.costs.insert(at, x);
            }
        }
        let mut decisions: Vec<Decision> = path.iter().filter_map(|&i| self.nodes[i].decision.clone()).collect();
        decisions.extend(outcome.decisions);
        let mut bounds: Vec<u64> = path.iter().map(|&i| self.nodes[i].bound).collect();
        bounds.extend(outcome.bounds);
        let dead_end = match outcome.result {
            Ok((x, c)) => {
                self.evaluations += 1;
                let at = self.bucket.partition_point(|&y| y <= x);
                self.bucket.insert(at, x);
                self.bucket.truncate(self.config.bucket);
                if self.best_cost().is_none_or(|b| x < b) {
                    self.best = Some((x, c, decisions.clone()));
                }
                None
            }
            Err(e) => Some(e),
        };
        for &i in path.iter().rev() {
            let done = {
                let n = &self.nodes[i];
                if n.full {
                    n.t > 0
                } else {
                    match &n.children {
                        None => false,
                        Some(ch) => ch.iter().all(|&(_, c)| match c {
                            Child::Dead => true,
                            Child::Node(j) => self.nodes[j].exhausted || self.pruned(self.nodes[j].bound),
                        }),
                    }
                }
            };
            self.nodes[i].exhausted = done;
        }
        self.log.push(Event {
            iteration: self.iterations,
            seed: self.config.seed,
            path: decisions,
            bounds,
            cost,
            dead_end,
            evaluations: self.evaluations,
            best: self.best_cost(),
        });
    }

    /// Events produced since the search was created or resumed.
    pub fn log(&self) -> &[Event] {
        &self.log
    }

    pub fn result(&self) -> ExploreResult {
        ExploreResult {
            best: self.best.as_ref().map(|b| b.1.clone()),
            best_cost: self.best_cost(),
            best_path: self.best.as_ref().map(|b| b.2.clone()).unwrap_or_default(),
            evaluations: self.evaluations,
            iterations: self.iterations,
            exhausted: self.is_exhausted(),
            log: self.log.clone(),
        }
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            order: self.order.clone(),
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeState {
                    parent: n.parent,
                    decision: n.decision.clone(),
                    digest: n.digest.clone(),
                    children: n.children.clone(),
                    t: n.t,
                    costs: n.costs.clone(),
                    exhausted: n.exhausted,
                })
                .collect(),
            bucket: self.bucket.clone(),
            rollouts: self.rollouts,
            evaluations: self.evaluations,
            iterations: self.iterations,
            best: self.best.as_ref().map(|b| (b.0, b.2.clone())),
            rng: self.rng.clone(),
        }
    }

    /// Rebuilds a search by replaying the recorded decisions from `root`.
    pub fn resume(root: &Candidate, model: &'m M, cp: Checkpoint) -> Result<Self, ResumeError> {
        let mut s = Search::new(root, cp.order.clone(), model, cp.config.clone());
        s.nodes.clear();
        for (i, st) in cp.nodes.iter().enumerate() {
            let cand = match (st.parent, &st.decision) {
                (None, None) => root.clone(),
                (Some(p), Some(d)) if p < i => {
                    d.apply(&s.nodes[p].cand).map_err(|e| ResumeError::Mismatch(format!("node {i}: {e}")))?
                }
                _ => return Err(ResumeError::Mismatch(format!("node {i}: bad parent link"))),
            };
            let idx = s.push_node(cand, st.parent, st.decision.clone());
            let n = &mut s.nodes[idx];
            if n.digest != st.digest {
                return Err(ResumeError::Mismatch(format!("node {i}: digest differs")));
            }
            n.children = st.children.clone();
            n.t = st.t;
            n.costs = st.costs.clone();
            n.exhausted = st.exhausted;
        }
        s.bucket = cp.bucket;
        s.rollouts = cp.rollouts;
        s.evaluations = cp.evaluations;
        s.iterations = cp.iterations;
        s.rng = cp.rng;
        if let Some((cost, path)) = cp.best {
            let c = crate::order::replay(root, &path).map_err(|e| ResumeError::Mismatch(format!("best: {e}")))?;
            s.best = Some((cost, c, path));
        }
        Ok(s)
    }
}

pub fn explore<M: CostModel>(
    root: &Candidate,
    order: &DecisionOrder,
    model: &M,
    config: &SearchConfig,
) -> ExploreResult {
    let mut s = Search::new(root, order.clone(), model, config.clone());
    s.run();
    s.result()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn dominant_arm_is_selected() {
        assert_eq!(tag_select(&[(5, 10), (0, 10)], 20, 0.05), 0);
        assert_eq!(tag_select(&[(0, 10), (5, 10)], 20, 0.05), 1);
        assert_eq!(tag_select(&[(3, 10), (3, 10)], 20, 0.05), 0);
    }

    #[test]
    fn two_armed_bandit_concentrates() {
        // Arm 1 reaches the top bucket three times as often as arm 0.
        let p = [0.1, 0.3];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut s = [0u64; 2];
        let mut t = [0u64; 2];
        for n in 0..10_000u64 {
            let k = if t[0] == 0 {
                0
            } else if t[1] == 0 {
                1
            } else {
                tag_select(&[(s[0], t[0]), (s[1], t[1])], n, 0.05)
            };
            t[k] += 1;
            if rng.gen_bool(p[k]) {
                s[k] += 1;
            }
        }
        assert!(t[1] > 8 * t[0], "{t:?}");
    }
}
