//! Lower bound on the cost of every implementation below a candidate.
//!
//! Each instruction and loop is minimized independently over the remaining
//! decisions; the synchronization term is bounded by zero. On fully
//! specified candidates the bound equals `max(compute, memory)` of
//! [`crate::cost::evaluate`].

use ispace_core::candidate::Candidate;

use crate::cost::{vector_factor, waves};
use crate::layout::*;
use crate::machine::{CacheMode, MemSpace};

/// Factors contributed by the dimensions surely enclosing a statement.
struct Enclosing {
    seq: u64,
    par: u64,
    /// Sequential factor of memory transactions (vector loops included).
    mem_seq: u64,
}

/// Dimensions surely enclosing `x`, one per possible merge class: a
/// dimension is skipped when a lower enclosing dimension may be merged with
/// it. Returns representatives with the dimensions surely merged into them.
fn enclosing(lay: &Layout, c: &Candidate, x: usize) -> Vec<(usize, Vec<usize>, bool)> {
    let outer: Vec<usize> = lay.dims.iter().copied().filter(|&d| d != x && lay.order(c, d, x) == OUTER).collect();
    let mut out = Vec::new();
    for (k, &d) in outer.iter().enumerate() {
        if outer[..k].iter().any(|&e| lay.order(c, e, d) & MERGED != 0) {
            continue;
        }
        let mut group = vec![d];
        let mut exact = true;
        for &e in &outer[k + 1..] {
            match lay.order(c, d, e) {
                MERGED => group.push(e),
                m if m & MERGED != 0 => exact = false,
                _ => {}
            }
        }
        out.push((d, group, exact));
    }
    out
}

fn factors(lay: &Layout, c: &Candidate, x: usize, mem_inst: Option<usize>) -> Enclosing {
    let mut e = Enclosing { seq: 1, par: 1, mem_seq: 1 };
    for (d, group, exact) in enclosing(lay, c, x) {
        let kind = lay.kind(c, d);
        let (smin, _) = lay.size_range(c, d);
        if kind & (THREAD | BLOCK | VECTOR) == 0 {
            e.seq = e.seq.saturating_mul(smin);
        }
        if kind & !(THREAD | BLOCK) == 0 {
            e.par = e.par.saturating_mul(smin);
        }
        let mem = if kind & (THREAD | BLOCK) != 0 {
            1
        } else if kind == VECTOR {
            match (mem_inst, exact) {
                (Some(i), true) => vector_factor(min_stride(lay, c, i, &group), smin),
                _ => 1,
            }
        } else if kind & VECTOR != 0 {
            1
        } else {
            smin
        };
        e.mem_seq = e.mem_seq.saturating_mul(mem);
    }
    e
}

/// Stride of a group of merged dimensions with the smallest remaining sizes.
fn min_stride(lay: &Layout, c: &Candidate, inst: usize, group: &[usize]) -> i64 {
    let b = &lay.backbone;
    let size = |d| lay.size_range(c, lay.pos[&d]).0;
    group.iter().map(|&d| b.stride(lay.stmts[inst], lay.stmts[d], &size)).sum()
}

/// `Some(coalesced)` once every decision it depends on is taken.
fn coalesced(lay: &Layout, c: &Candidate, i: usize) -> Option<bool> {
    let mut threads = Vec::new();
    for &d in &lay.dims {
        let o = lay.order(c, d, i);
        if o.count_ones() != 1 {
            return None;
        }
        if o == OUTER {
            let k = lay.kind(c, d);
            if k.count_ones() != 1 {
                return None;
            }
            if k == THREAD {
                threads.push(d);
            }
        }
    }
    if threads.is_empty() {
        return Some(true);
    }
    for &d in &lay.dims {
        if !lay.size_decided(c, d) {
            return None;
        }
    }
    // The innermost level: no other enclosing thread dimension inside it.
    let mut inner = None;
    for &t in &threads {
        let mut innermost = true;
        for &u in &threads {
            if u == t {
                continue;
            }
            match lay.thread_level(c, t, u)? {
                TL_OUTER => innermost = false,
                TL_INNER | TL_MAPPED => {}
                _ => return None,
            }
        }
        if innermost {
            inner = Some(t);
        }
    }
    let t = inner?;
    let mut group = vec![t];
    for &d in &lay.dims {
        if d != t && lay.order(c, t, d) == MERGED {
            group.push(d);
        }
    }
    Some(min_stride(lay, c, i, &group).abs() == 1)
}

fn min_access_cost(lay: &Layout, c: &Candidate, i: usize) -> u64 {
    let b = &lay.backbone;
    let region = b.inst(lay.stmts[i]).access.as_ref().unwrap().region;
    let spaces = lay.mem_space(c, region);
    let caches = lay.cache(c, i).unwrap_or(NO_CACHE);
    let co = coalesced(lay, c, i);
    let costs = &lay.machine.costs;
    let mut best = u64::MAX;
    for (sbit, space) in [(GLOBAL, MemSpace::Global), (SHARED, MemSpace::Shared)] {
        if spaces & sbit == 0 {
            continue;
        }
        for (cbit, cache) in
            [(L1, CacheMode::L1), (L2, CacheMode::L2), (READ_ONLY, CacheMode::ReadOnly), (NO_CACHE, CacheMode::None)]
        {
            if caches & cbit == 0 {
                continue;
            }
            for flag in [true, false] {
                if co.is_some_and(|v| v != flag) {
                    continue;
                }
                best = best.min(costs.memory_cost(space, cache, flag));
            }
        }
    }
    if best == u64::MAX {
        0
    } else {
        best
    }
}

/// Compute and memory lower bounds.
pub fn bound_parts(c: &Candidate) -> (u64, u64) {
    let lay = Layout::of(c);
    let mp = &lay.machine;
    let costs = &mp.costs;
    let mut compute = 0u64;
    let mut memory = 0u64;
    for &i in &lay.insts {
        let is_mem = lay.backbone.inst(lay.stmts[i]).access.is_some();
        let e = factors(&lay, c, i, is_mem.then_some(i));
        let w = waves(e.par, mp.parallel_lanes);
        compute += costs.issue * e.seq * w;
        if is_mem {
            memory += e.mem_seq * w * min_access_cost(&lay, c, i);
        }
    }
    for (k, &d) in lay.dims.iter().enumerate() {
        if lay.kind(c, d) != LOOP {
            continue;
        }
        if lay.dims[..k].iter().any(|&e| lay.order(c, e, d) & MERGED != 0) {
            continue;
        }
        let e = factors(&lay, c, d, None);
        let (smin, _) = lay.size_range(c, d);
        compute += costs.loop_overhead * smin * e.seq * waves(e.par, mp.parallel_lanes);
    }
    (compute, memory)
}

/// Lower bound on the cost of every implementation in the candidate's
/// subtree.
pub fn bound(c: &Candidate) -> u64 {
    let (compute, memory) = bound_parts(c);
    compute.max(memory)
}

/// Rollout preference of a child: `max(best - bound, 0)`; uniform before
/// any implementation has been evaluated.
pub fn rollout_weight(bound: u64, best: Option<u64>) -> f64 {
    match best {
        None => 1.0,
        Some(t) => t.saturating_sub(bound) as f64,
    }
}
