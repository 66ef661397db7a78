//! Fixpoint propagation over a compiled [`Space`].

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::ir::CounterOp;
use crate::space::{Lit, Space, Var};
use crate::term::{Term, TermEnv};

/// Result of a propagation that emptied a domain or violated a bound.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeadEnd {
    pub reason: String,
}

impl std::fmt::Display for DeadEnd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "dead end: {}", self.reason)
    }
}

/// One domain restriction performed by propagation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub instance: String,
    pub removed: Vec<String>,
    pub cause: String,
}

/// Domains viewed as a term evaluation environment.
pub struct DomainView<'a> {
    pub space: &'a Space,
    pub domains: &'a [u32],
}

impl TermEnv for DomainView<'_> {
    fn int_range(&self, var: u32) -> (i64, i64) {
        let inst = &self.space.instances[var as usize];
        let mask = self.domains[var as usize];
        if mask == 0 {
            return (0, 0);
        }
        let lo = mask.trailing_zeros() as usize;
        let hi = 31 - mask.leading_zeros() as usize;
        (inst.ints[lo], inst.ints[hi])
    }

    fn select(&self, var: u32, values: &[String]) -> Option<bool> {
        let info = self.space.choice_of(var);
        let sel = values.iter().filter_map(|v| info.value_index(v)).fold(0u32, |m, i| m | (1 << i));
        let d = self.domains[var as usize];
        if d & !sel == 0 {
            Some(true)
        } else if d & sel == 0 {
            Some(false)
        } else {
            None
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum GuardState {
    Yes,
    No,
    Open,
}

fn guard_state(guard: Option<(Var, u32)>, domains: &[u32]) -> GuardState {
    match guard {
        None => GuardState::Yes,
        Some((v, m)) => {
            let d = domains[v as usize];
            if d & !m == 0 {
                GuardState::Yes
            } else if d & m == 0 {
                GuardState::No
            } else {
                GuardState::Open
            }
        }
    }
}

fn combine(op: CounterOp, a: i64, b: i64) -> i64 {
    match op {
        CounterOp::Sum => a.saturating_add(b),
        CounterOp::Product => a.saturating_mul(b),
    }
}

fn unit(op: CounterOp) -> i64 {
    match op {
        CounterOp::Sum => 0,
        CounterOp::Product => 1,
    }
}

/// Interval `[lo, hi]` of counter `c` under `domains`.
pub fn counter_interval(space: &Space, domains: &[u32], c: usize) -> (i64, i64) {
    let counter = &space.counters[c];
    let view = DomainView { space, domains };
    let (mut lo, mut hi) = (unit(counter.op), unit(counter.op));
    for item in &counter.items {
        let (tmin, tmax) = item.term.range(&view);
        match guard_state(item.guard, domains) {
            GuardState::Yes => {
                lo = combine(counter.op, lo, tmin);
                hi = combine(counter.op, hi, tmax);
            }
            GuardState::Open => {
                let u = unit(counter.op);
                lo = combine(counter.op, lo, tmin.min(u));
                hi = combine(counter.op, hi, tmax.max(u));
            }
            GuardState::No => {}
        }
    }
    (lo, hi)
}

fn lit_possible(l: &Lit, d: &[u32]) -> bool {
    match l {
        Lit::Unary { var, mask } => d[*var as usize] & mask != 0,
        Lit::Binary { x, y, table } => {
            let (mut dx, dy) = (d[*x as usize], d[*y as usize]);
            while dx != 0 {
                let i = dx.trailing_zeros();
                if table[i as usize] & dy != 0 {
                    return true;
                }
                dx &= dx - 1;
            }
            false
        }
    }
}

pub(crate) fn lit_entailed(l: &Lit, d: &[u32]) -> bool {
    match l {
        Lit::Unary { var, mask } => d[*var as usize] & !mask == 0,
        Lit::Binary { x, y, table } => {
            let (mut dx, dy) = (d[*x as usize], d[*y as usize]);
            while dx != 0 {
                let i = dx.trailing_zeros();
                if dy & !table[i as usize] != 0 {
                    return false;
                }
                dx &= dx - 1;
            }
            true
        }
    }
}

/// Values of `z` for which the literal can still hold.
fn lit_support(l: &Lit, z: Var, d: &[u32]) -> u32 {
    match l {
        Lit::Unary { var, mask } if *var == z => *mask,
        Lit::Binary { x, y, table } if *x == z => {
            let dy = d[*y as usize];
            table.iter().enumerate().filter(|(_, m)| **m & dy != 0).fold(0, |acc, (i, _)| acc | (1 << i))
        }
        Lit::Binary { x, y, table } if *y == z => {
            let mut dx = d[*x as usize];
            let mut acc = 0;
            while dx != 0 {
                acc |= table[dx.trailing_zeros() as usize];
                dx &= dx - 1;
            }
            acc
        }
        _ => u32::MAX,
    }
}

fn lit_mentions(l: &Lit, z: Var) -> bool {
    match l {
        Lit::Unary { var, .. } => *var == z,
        Lit::Binary { x, y, .. } => *x == z || *y == z,
    }
}

/// Whether some term of a condition clause is entailed.
pub(crate) fn condition_entailed(condition: &[Vec<Lit>], d: &[u32]) -> bool {
    condition.iter().all(|clause| clause.iter().any(|l| lit_entailed(l, d)))
}

#[derive(Clone, Copy)]
enum Prop {
    Clause(u32),
    Counter(u32),
}

pub(crate) struct Engine<'a> {
    space: &'a Space,
    pub dom: Vec<u32>,
    queue: VecDeque<Prop>,
    queued_clause: Vec<bool>,
    queued_counter: Vec<bool>,
    trace: Option<&'a mut Vec<TraceEvent>>,
}

impl<'a> Engine<'a> {
    pub fn new(space: &'a Space, dom: Vec<u32>, trace: Option<&'a mut Vec<TraceEvent>>) -> Self {
        Engine {
            space,
            dom,
            queue: VecDeque::new(),
            queued_clause: vec![false; space.clauses.len()],
            queued_counter: vec![false; space.counters.len()],
            trace,
        }
    }

    pub fn enqueue_all(&mut self) {
        for i in 0..self.space.clauses.len() {
            self.push(Prop::Clause(i as u32));
        }
        for i in 0..self.space.counters.len() {
            self.push(Prop::Counter(i as u32));
        }
    }

    pub fn enqueue_var(&mut self, v: Var) {
        let space = self.space;
        for &c in &space.watch_clauses[v as usize] {
            self.push(Prop::Clause(c));
        }
        for &c in &space.watch_counters[v as usize] {
            self.push(Prop::Counter(c));
        }
    }

    fn push(&mut self, p: Prop) {
        let flag = match p {
            Prop::Clause(c) => &mut self.queued_clause[c as usize],
            Prop::Counter(c) => &mut self.queued_counter[c as usize],
        };
        if !*flag {
            *flag = true;
            self.queue.push_back(p);
        }
    }

    fn set(&mut self, v: Var, mask: u32, cause: &dyn Fn() -> String) -> Result<(), DeadEnd> {
        let old = self.dom[v as usize];
        let new = old & mask;
        if new == old {
            return Ok(());
        }
        if let Some(trace) = self.trace.as_deref_mut() {
            let removed = old & !new;
            trace.push(TraceEvent {
                instance: self.space.describe(v),
                removed: (0..32).filter(|i| removed & (1 << i) != 0).map(|i| self.space.value_name(v, i)).collect(),
                cause: cause(),
            });
        }
        if new == 0 {
            return Err(DeadEnd { reason: format!("domain of {} emptied by {}", self.space.describe(v), cause()) });
        }
        self.dom[v as usize] = new;
        self.enqueue_var(v);
        Ok(())
    }

    pub fn run(&mut self) -> Result<(), DeadEnd> {
        if let Some(reason) = &self.space.infeasible {
            return Err(DeadEnd { reason: reason.clone() });
        }
        while let Some(p) = self.queue.pop_front() {
            match p {
                Prop::Clause(c) => {
                    self.queued_clause[c as usize] = false;
                    self.clause(c as usize)?;
                }
                Prop::Counter(c) => {
                    self.queued_counter[c as usize] = false;
                    self.counter(c as usize)?;
                }
            }
        }
        Ok(())
    }

    fn clause(&mut self, ci: usize) -> Result<(), DeadEnd> {
        let space = self.space;
        let clause = &space.clauses[ci];
        let cause = || format!("constraint {:?}", clause.origin);
        let mut possible: Vec<usize> = Vec::with_capacity(clause.terms.len());
        for (ti, t) in clause.terms.iter().enumerate() {
            if t.iter().all(|l| lit_entailed(l, &self.dom)) {
                return Ok(());
            }
            if t.iter().all(|l| lit_possible(l, &self.dom)) {
                possible.push(ti);
            }
        }
        if possible.is_empty() {
            return Err(DeadEnd { reason: format!("{} violated", cause()) });
        }
        for &z in &space.clause_vars[ci] {
            let mut support = 0u32;
            let mut free = false;
            for &ti in &possible {
                let t = &clause.terms[ti];
                if !t.iter().any(|l| lit_mentions(l, z)) {
                    free = true;
                    break;
                }
                let mut s = self.dom[z as usize];
                for l in t {
                    if lit_mentions(l, z) {
                        s &= lit_support(l, z, &self.dom);
                    }
                }
                support |= s;
            }
            if !free {
                self.set(z, support, &cause)?;
            }
        }
        Ok(())
    }

    fn counter(&mut self, ci: usize) -> Result<(), DeadEnd> {
        let space = self.space;
        let counter = &space.counters[ci];
        if counter.upper.is_none() && counter.lower.is_none() {
            return Ok(());
        }
        let op = counter.op;
        let u = unit(op);
        let cause = || format!("counter {}", space.describe_counter(ci));
        let (lo, hi) = counter_interval(space, &self.dom, ci);
        if let Some(upper) = counter.upper {
            if lo > upper {
                return Err(DeadEnd { reason: format!("{} exceeds {upper}", cause()) });
            }
        }
        if let Some(lower) = counter.lower {
            if hi < lower {
                return Err(DeadEnd { reason: format!("{} below {lower}", cause()) });
            }
        }
        let n = counter.items.len();
        for i in 0..n {
            let item = &counter.items[i];
            let state = guard_state(item.guard, &self.dom);
            if state == GuardState::No {
                continue;
            }
            let view = DomainView { space, domains: &self.dom };
            let (tmin, tmax) = item.term.range(&view);
            // Aggregates over the other items.
            let (mut lo_wo, mut hi_wo) = (u, u);
            for (j, other) in counter.items.iter().enumerate() {
                if j == i {
                    continue;
                }
                let (a, b) = other.term.range(&view);
                match guard_state(other.guard, &self.dom) {
                    GuardState::Yes => {
                        lo_wo = combine(op, lo_wo, a);
                        hi_wo = combine(op, hi_wo, b);
                    }
                    GuardState::Open => {
                        lo_wo = combine(op, lo_wo, a.min(u));
                        hi_wo = combine(op, hi_wo, b.max(u));
                    }
                    GuardState::No => {}
                }
            }
            if let Some(upper) = counter.upper {
                match state {
                    GuardState::Open if combine(op, lo_wo, tmin) > upper => {
                        let (g, m) = item.guard.unwrap();
                        self.set(g, !m, &cause)?;
                        continue;
                    }
                    GuardState::Yes => {
                        if let Term::Value(v) = item.term {
                            let inst = &space.instances[v as usize];
                            let keep = inst
                                .ints
                                .iter()
                                .enumerate()
                                .filter(|(_, &x)| combine(op, lo_wo, x) <= upper)
                                .fold(0u32, |m, (k, _)| m | (1 << k));
                            self.set(v, keep, &cause)?;
                        }
                    }
                    _ => {}
                }
            }
            if let Some(lower) = counter.lower {
                match state {
                    GuardState::Open if hi_wo < lower && combine(op, hi_wo, tmax) >= lower => {
                        let (g, m) = item.guard.unwrap();
                        self.set(g, m, &cause)?;
                    }
                    GuardState::Yes => {
                        if let Term::Value(v) = item.term {
                            let inst = &space.instances[v as usize];
                            let keep = inst
                                .ints
                                .iter()
                                .enumerate()
                                .filter(|(_, &x)| combine(op, hi_wo, x) >= lower)
                                .fold(0u32, |m, (k, _)| m | (1 << k));
                            self.set(v, keep, &cause)?;
                        }
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }
}
