//! Uniform random descents.

use ispace_core::{Candidate, VarRef};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::order::DecisionOrder;
use crate::stats::{wilson, Interval};

/// Descends by picking uniformly among the values left in the domain of
/// the next open instance. `None` when a decision fails propagation.
pub fn uniform_walk(root: &Candidate, order: &DecisionOrder, rng: &mut impl Rng) -> Option<Candidate> {
    let mut c = root.clone();
    while let Some(var) = order.next_open(&c) {
        let dom = c.domain(var);
        let bits: Vec<u32> = (0..32).filter(|b| dom & (1 << b) != 0).collect();
        let b = bits[rng.gen_range(0..bits.len())];
        c = c.apply_decision(VarRef { var, swapped: false }, 1 << b).ok()?;
    }
    Some(c)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeadEndRate {
    pub trials: u64,
    pub dead_ends: u64,
    pub ratio: f64,
    pub ci: Interval,
}

pub fn deadend_rate(root: &Candidate, order: &DecisionOrder, trials: u64, rng: &mut impl Rng) -> DeadEndRate {
    let dead_ends = (0..trials).filter(|_| uniform_walk(root, order, rng).is_none()).count() as u64;
    DeadEndRate { trials, dead_ends, ratio: dead_ends as f64 / trials.max(1) as f64, ci: wilson(dead_ends, trials) }
}
