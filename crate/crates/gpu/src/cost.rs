//! Analytic execution-time model of a loop nest.

use ispace_core::host::ObjectId;
use serde::{Deserialize, Serialize};

use crate::backbone::Op;
use crate::machine::{CacheMode, MemSpace};
use crate::nest::{DimKind, LoopNest, LoopNode, Node};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostReport {
    pub compute: u64,
    pub global_memory: u64,
    pub shared_memory: u64,
    pub sync: u64,
    pub total: u64,
}

impl CostReport {
    pub fn memory(&self) -> u64 {
        self.global_memory + self.shared_memory
    }
}

/// Number of sequential waves needed to run `par` parallel iterations.
pub fn waves(par: u64, lanes: u64) -> u64 {
    par.div_ceil(lanes.max(1)).max(1)
}

/// Memory transactions of one execution of a vector access: one if the
/// lanes are contiguous (or identical), one per lane otherwise.
pub fn vector_factor(stride: i64, size: u64) -> u64 {
    if stride.abs() <= 1 {
        1
    } else {
        size
    }
}

#[derive(Default)]
struct Acc {
    compute: u64,
    global_memory: u64,
    shared_memory: u64,
    sync: u64,
}

pub fn evaluate(nest: &LoopNest) -> CostReport {
    let mut acc = Acc::default();
    walk(nest, &nest.roots, &mut Vec::new(), &mut acc);
    let memory = acc.global_memory + acc.shared_memory;
    CostReport {
        compute: acc.compute,
        global_memory: acc.global_memory,
        shared_memory: acc.shared_memory,
        sync: acc.sync,
        total: acc.compute.max(memory) + acc.sync,
    }
}

fn seq_par(ancestors: &[&LoopNode]) -> (u64, u64) {
    let mut seq = 1u64;
    let mut par = 1u64;
    for a in ancestors {
        match a.kind {
            DimKind::Loop | DimKind::Unroll => seq = seq.saturating_mul(a.size),
            DimKind::Block | DimKind::Thread => par = par.saturating_mul(a.size),
            DimKind::Vector => {}
        }
    }
    (seq, par)
}

fn walk<'a>(nest: &'a LoopNest, nodes: &'a [Node], ancestors: &mut Vec<&'a LoopNode>, acc: &mut Acc) {
    let mp = &nest.machine;
    let costs = &mp.costs;
    let barriers = nodes.windows(2).filter(|w| contains_thread(&w[0]) || contains_thread(&w[1])).count() as u64;
    if barriers > 0 {
        let (seq, _) = seq_par(ancestors);
        acc.sync += costs.barrier * barriers * seq;
    }
    for node in nodes {
        match node {
            Node::Loop(l) => {
                if l.kind == DimKind::Loop {
                    let (seq, par) = seq_par(ancestors);
                    acc.compute += costs.loop_overhead * l.size.saturating_mul(seq) * waves(par, mp.parallel_lanes);
                }
                ancestors.push(l);
                walk(nest, &l.children, ancestors, acc);
                ancestors.pop();
            }
            Node::Inst(i) => {
                let (seq, par) = seq_par(ancestors);
                let w = waves(par, mp.parallel_lanes);
                acc.compute += costs.issue * seq * w;
                if nest.backbone.inst(*i).access.is_some() {
                    let mut transactions = seq;
                    for a in ancestors.iter().filter(|a| a.kind == DimKind::Vector) {
                        transactions *= vector_factor(nest.stride(*i, a), a.size);
                    }
                    let (space, cost) = access_cost(nest, *i, ancestors);
                    let m = transactions * w * cost;
                    match space {
                        MemSpace::Global => acc.global_memory += m,
                        MemSpace::Shared => acc.shared_memory += m,
                    }
                }
            }
        }
    }
}

fn contains_thread(n: &Node) -> bool {
    match n {
        Node::Inst(_) => false,
        Node::Loop(l) => l.kind == DimKind::Thread || l.children.iter().any(contains_thread),
    }
}

/// Whether consecutive threads of the innermost level access consecutive
/// elements. Accesses outside thread loops count as coalesced.
pub fn is_coalesced(nest: &LoopNest, inst: ObjectId, ancestors: &[&LoopNode]) -> bool {
    let inner = ancestors
        .iter()
        .filter(|a| a.kind == DimKind::Thread)
        .min_by_key(|a| nest.thread_levels.get(&a.dims[0]).copied().unwrap_or(usize::MAX));
    inner.is_none_or(|a| nest.stride(inst, a).abs() == 1)
}

fn access_cost(nest: &LoopNest, inst: ObjectId, ancestors: &[&LoopNode]) -> (MemSpace, u64) {
    let b = &nest.backbone;
    let region = b.inst(inst).access.as_ref().unwrap().region;
    let space = nest.mem_space.get(&region).copied().unwrap_or(MemSpace::Global);
    let cache = nest.cache.get(&inst).copied().unwrap_or(CacheMode::None);
    debug_assert!(matches!(b.inst(inst).op, Op::Load | Op::Store));
    (space, nest.machine.costs.memory_cost(space, cache, is_coalesced(nest, inst, ancestors)))
}
