//! Loop nests of fully specified candidates and the code emitted for them.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::sync::Arc;

use ispace_core::candidate::Candidate;
use ispace_core::host::ObjectId;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backbone::{Backbone, IndexTerm, Op, Operand};
use crate::layout::*;
use crate::machine::{CacheMode, MachineParams, MemSpace};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NestError {
    #[error("the candidate is not fully specified")]
    NotFullySpecified,
    #[error("inconsistent loop structure: {0}")]
    Inconsistent(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DimKind {
    Loop,
    Block,
    Thread,
    Unroll,
    Vector,
}

impl DimKind {
    fn from_mask(m: u32) -> DimKind {
        match m {
            LOOP => DimKind::Loop,
            BLOCK => DimKind::Block,
            THREAD => DimKind::Thread,
            UNROLL => DimKind::Unroll,
            _ => DimKind::Vector,
        }
    }

    pub fn is_parallel(self) -> bool {
        matches!(self, DimKind::Block | DimKind::Thread)
    }

    pub fn is_sequential(self) -> bool {
        matches!(self, DimKind::Loop | DimKind::Unroll)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopNode {
    /// Merged dimensions, ascending.
    pub dims: Vec<ObjectId>,
    pub kind: DimKind,
    pub size: u64,
    pub children: Vec<Node>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Node {
    Loop(LoopNode),
    Inst(ObjectId),
}

impl Node {
    fn contains_thread(&self) -> bool {
        match self {
            Node::Inst(_) => false,
            Node::Loop(l) => l.kind == DimKind::Thread || l.children.iter().any(Node::contains_thread),
        }
    }
}

/// A fully specified implementation.
#[derive(Clone, Debug)]
pub struct LoopNest {
    pub backbone: Arc<Backbone>,
    pub machine: Arc<MachineParams>,
    pub roots: Vec<Node>,
    /// Size of every dimension.
    pub sizes: BTreeMap<ObjectId, u64>,
    /// Hardware thread level of thread dimensions, 0 being the innermost.
    pub thread_levels: BTreeMap<ObjectId, usize>,
    pub cache: BTreeMap<ObjectId, CacheMode>,
    pub mem_space: BTreeMap<ObjectId, MemSpace>,
}

fn single(mask: u32) -> Result<u32, NestError> {
    if mask.count_ones() == 1 {
        Ok(mask)
    } else {
        Err(NestError::NotFullySpecified)
    }
}

pub fn reconstruct(c: &Candidate) -> Result<LoopNest, NestError> {
    if !c.is_fully_specified() {
        return Err(NestError::NotFullySpecified);
    }
    let lay = Layout::of(c);
    let b = lay.backbone.clone();
    let n = lay.stmts.len();
    let ord = |x: usize, y: usize| lay.order(c, x, y);

    // Merge classes, represented by their lowest position.
    let mut rep: Vec<usize> = (0..n).collect();
    for &x in &lay.dims {
        for &y in lay.dims.iter().filter(|&&y| y < x) {
            if ord(y, x) == MERGED {
                rep[x] = rep[y];
                break;
            }
        }
    }
    let nodes: Vec<usize> = (0..n).filter(|&x| rep[x] == x).collect();
    let is_dim = |x: usize| b.is_dim(lay.stmts[x]);
    let ancestors: BTreeMap<usize, Vec<usize>> = nodes
        .iter()
        .map(|&x| (x, nodes.iter().copied().filter(|&d| d != x && is_dim(d) && ord(d, x) == OUTER).collect()))
        .collect();
    let mut children: BTreeMap<Option<usize>, Vec<usize>> = BTreeMap::new();
    for &x in &nodes {
        let parent = ancestors[&x].iter().copied().max_by_key(|a| ancestors[a].len());
        children.entry(parent).or_default().push(x);
    }
    for list in children.values_mut() {
        list.sort_by(|&a, &b| match ord(a, b) {
            BEFORE => std::cmp::Ordering::Less,
            AFTER => std::cmp::Ordering::Greater,
            _ => a.cmp(&b),
        });
        for w in list.windows(2) {
            if ord(w[0], w[1]) != BEFORE {
                return Err(NestError::Inconsistent(format!(
                    "siblings {} and {} are not ordered",
                    lay.stmts[w[0]], lay.stmts[w[1]]
                )));
            }
        }
    }

    let mut sizes = BTreeMap::new();
    for &d in &lay.dims {
        sizes.insert(lay.stmts[d], lay.size_range(c, d).0);
    }
    let mut kinds = BTreeMap::new();
    for &d in &lay.dims {
        kinds.insert(d, DimKind::from_mask(single(lay.kind(c, d))?));
    }

    fn build(
        x: usize,
        lay: &Layout,
        children: &BTreeMap<Option<usize>, Vec<usize>>,
        rep: &[usize],
        kinds: &BTreeMap<usize, DimKind>,
        sizes: &BTreeMap<ObjectId, u64>,
    ) -> Node {
        let id = lay.stmts[x];
        if !lay.backbone.is_dim(id) {
            return Node::Inst(id);
        }
        let dims: Vec<ObjectId> = (0..rep.len()).filter(|&y| rep[y] == x).map(|y| lay.stmts[y]).collect();
        let kids = children.get(&Some(x)).map_or(&[][..], |v| v);
        Node::Loop(LoopNode {
            dims,
            kind: kinds[&x],
            size: sizes[&id],
            children: kids.iter().map(|&k| build(k, lay, children, rep, kinds, sizes)).collect(),
        })
    }
    let roots = children
        .get(&None)
        .map_or(&[][..], |v| v)
        .iter()
        .map(|&x| build(x, &lay, &children, &rep, &kinds, &sizes))
        .collect();

    // Thread levels: depth among thread classes, counted from the innermost.
    let threads: Vec<usize> = lay.dims.iter().copied().filter(|d| kinds[d] == DimKind::Thread).collect();
    let mut depth = BTreeMap::new();
    for &t in &threads {
        let mut outer: Vec<usize> = threads
            .iter()
            .copied()
            .filter(|&u| u != t && lay.thread_level(c, u, t) == Some(TL_OUTER))
            .map(|u| class_of(&threads, u, c, &lay))
            .collect();
        outer.sort_unstable();
        outer.dedup();
        depth.insert(t, outer.len());
    }
    let levels = depth.values().copied().max().map_or(0, |m| m + 1);
    let thread_levels = depth.iter().map(|(&t, &dp)| (lay.stmts[t], levels - 1 - dp)).collect();

    let mut cache = BTreeMap::new();
    for &i in &lay.insts {
        if let Some(m) = lay.cache(c, i) {
            let mode = match single(m)? {
                L1 => CacheMode::L1,
                L2 => CacheMode::L2,
                READ_ONLY => CacheMode::ReadOnly,
                _ => CacheMode::None,
            };
            cache.insert(lay.stmts[i], mode);
        }
    }
    let mut mem_space = BTreeMap::new();
    for r in &b.regions {
        let s = if single(lay.mem_space(c, r.id))? == SHARED { MemSpace::Shared } else { MemSpace::Global };
        mem_space.insert(r.id, s);
    }
    Ok(LoopNest { backbone: b, machine: lay.machine.clone(), roots, sizes, thread_levels, cache, mem_space })
}

/// Lowest thread dimension mapped to the same level as `t`.
fn class_of(threads: &[usize], t: usize, c: &Candidate, lay: &Layout) -> usize {
    threads.iter().copied().find(|&u| u == t || lay.thread_level(c, u, t) == Some(TL_MAPPED)).unwrap_or(t)
}

/// Unrolled loops up to this size are emitted as replicated bodies.
pub const UNROLL_REPLICATION: u64 = 8;

impl LoopNest {
    pub fn size_of(&self, d: ObjectId) -> u64 {
        self.sizes[&d]
    }

    /// Stride of a loop in the address of a memory instruction.
    pub fn stride(&self, inst: ObjectId, node: &LoopNode) -> i64 {
        let size = |d: ObjectId| self.sizes[&d];
        node.dims.iter().map(|&d| self.backbone.stride(inst, d, &size)).sum()
    }

    fn name(&self, id: ObjectId) -> String {
        self.backbone.object_name(id).unwrap_or_else(|| id.to_string())
    }

    /// Pseudo-code for the implementation.
    pub fn emit_source(&self) -> String {
        let b = &self.backbone;
        let mut out = String::new();
        let args: Vec<&str> = b.regions.iter().filter(|r| r.input).map(|r| r.name.as_str()).collect();
        writeln!(out, "kernel {}({}) {{", b.name, args.join(", ")).unwrap();
        for r in b.regions.iter().filter(|r| !r.input) {
            let space = if self.mem_space[&r.id] == MemSpace::Shared { "shared" } else { "global" };
            writeln!(out, "  {space} f32 {}[{}];", r.name, r.len).unwrap();
        }
        let mut fixed = BTreeMap::new();
        self.emit_nodes(&self.roots, 1, &mut fixed, &mut out);
        out.push_str("}\n");
        out
    }

    fn emit_nodes(&self, nodes: &[Node], depth: usize, fixed: &mut BTreeMap<ObjectId, u64>, out: &mut String) {
        for (k, node) in nodes.iter().enumerate() {
            if k > 0 && (node.contains_thread() || nodes[k - 1].contains_thread()) {
                writeln!(out, "{}barrier();", "  ".repeat(depth)).unwrap();
            }
            self.emit_node(node, depth, fixed, out);
        }
    }

    fn emit_node(&self, node: &Node, depth: usize, fixed: &mut BTreeMap<ObjectId, u64>, out: &mut String) {
        let pad = "  ".repeat(depth);
        let l = match node {
            Node::Inst(i) => {
                writeln!(out, "{pad}{}", self.emit_inst(*i, fixed)).unwrap();
                return;
            }
            Node::Loop(l) => l,
        };
        let names: Vec<String> = l.dims.iter().map(|&d| self.name(d)).collect();
        let var = names.join("=");
        match l.kind {
            DimKind::Loop => writeln!(out, "{pad}for {var} in 0..{} {{", l.size).unwrap(),
            DimKind::Block => writeln!(out, "{pad}parallel {var} in 0..{} on blocks {{", l.size).unwrap(),
            DimKind::Thread => {
                let level = self.thread_levels[&l.dims[0]];
                let axis = ["x", "y", "z"].get(level).copied().unwrap_or("w");
                writeln!(out, "{pad}parallel {var} in 0..{} on thread.{axis} {{", l.size).unwrap()
            }
            DimKind::Vector => writeln!(out, "{pad}vector<{}> {var} {{", l.size).unwrap(),
            DimKind::Unroll if l.size <= UNROLL_REPLICATION => {
                for v in 0..l.size {
                    writeln!(out, "{pad}// {var} = {v}").unwrap();
                    for &d in &l.dims {
                        fixed.insert(d, v);
                    }
                    self.emit_nodes(&l.children, depth, fixed, out);
                }
                for d in &l.dims {
                    fixed.remove(d);
                }
                return;
            }
            DimKind::Unroll => writeln!(out, "{pad}unroll {var} in 0..{} {{", l.size).unwrap(),
        }
        self.emit_nodes(&l.children, depth + 1, fixed, out);
        writeln!(out, "{pad}}}").unwrap();
    }

    fn emit_inst(&self, id: ObjectId, fixed: &BTreeMap<ObjectId, u64>) -> String {
        let b = &self.backbone;
        let inst = b.inst(id);
        let operand = |o: &Operand| match o {
            Operand::Constant(c) => c.to_string(),
            Operand::Input(s) => s.clone(),
            Operand::Produced(p) => format!("%{}", self.name(*p)),
            Operand::Reduce { init, .. } => format!("acc %{}", self.name(*init)),
            Operand::Mapped { mapping } => format!("%{}", self.name(b.mappings[*mapping].producer)),
        };
        let ops: Vec<String> = inst.operands.iter().map(operand).collect();
        match (&inst.op, &inst.access) {
            (Op::Load, Some(a)) => format!(
                "%{} = load.{} {}[{}];",
                inst.name,
                self.cache_suffix(id),
                self.name(a.region),
                self.address(id, fixed)
            ),
            (Op::Store, Some(a)) => format!(
                "store.{} {}[{}] = {};",
                self.cache_suffix(id),
                self.name(a.region),
                self.address(id, fixed),
                ops.join(", ")
            ),
            (op, _) => format!("%{} = {}({});", inst.name, op.name(), ops.join(", ")),
        }
    }

    fn cache_suffix(&self, id: ObjectId) -> &'static str {
        match self.cache.get(&id) {
            Some(CacheMode::L1) => "l1",
            Some(CacheMode::L2) => "l2",
            Some(CacheMode::ReadOnly) => "ro",
            _ => "nc",
        }
    }

    /// Address as a linear expression; dimensions of replicated unrolled
    /// loops are folded into the constant.
    fn address(&self, id: ObjectId, fixed: &BTreeMap<ObjectId, u64>) -> String {
        let b = &self.backbone;
        let Some(access) = &b.inst(id).access else { return String::new() };
        let mut dims: Vec<ObjectId> = Vec::new();
        for t in &access.index {
            match t {
                IndexTerm::Dim { dim, .. } => dims.push(*dim),
                IndexTerm::Logical { logical, .. } => dims.extend(&b.logicals[*logical].levels),
            }
        }
        let size = |d: ObjectId| self.sizes[&d];
        let mut constant = 0i64;
        let mut terms = Vec::new();
        for d in dims {
            let s = b.stride(id, d, &size);
            if s == 0 || terms.iter().any(|(x, _)| *x == d) {
                continue;
            }
            match fixed.get(&d) {
                Some(&v) => constant += s * v as i64,
                None => terms.push((d, s)),
            }
        }
        let mut parts: Vec<String> =
            terms.iter().map(|&(d, s)| if s == 1 { self.name(d) } else { format!("{s}*{}", self.name(d)) }).collect();
        if constant != 0 || parts.is_empty() {
            parts.push(constant.to_string());
        }
        parts.join(" + ")
    }
}
