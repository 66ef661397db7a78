//! Direct access to the choice instances of a GPU space.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use ispace_core::candidate::Candidate;
use ispace_core::host::ObjectId;
use ispace_core::space::{Space, VarRef};

use crate::backbone::Backbone;
use crate::host::GpuHost;
use crate::machine::MachineParams;

pub const BEFORE: u32 = 1 << 0;
pub const AFTER: u32 = 1 << 1;
pub const INNER: u32 = 1 << 2;
pub const OUTER: u32 = 1 << 3;
pub const MERGED: u32 = 1 << 4;

pub const LOOP: u32 = 1 << 0;
pub const BLOCK: u32 = 1 << 1;
pub const THREAD: u32 = 1 << 2;
pub const UNROLL: u32 = 1 << 3;
pub const VECTOR: u32 = 1 << 4;

pub const TL_MAPPED: u32 = 1 << 0;
pub const TL_INNER: u32 = 1 << 1;
pub const TL_OUTER: u32 = 1 << 2;
pub const TL_NOT_THREADS: u32 = 1 << 3;

pub const GLOBAL: u32 = 1 << 0;
pub const SHARED: u32 = 1 << 1;

pub const L1: u32 = 1 << 0;
pub const L2: u32 = 1 << 1;
pub const READ_ONLY: u32 = 1 << 2;
pub const NO_CACHE: u32 = 1 << 3;

/// Variable references of one space, indexed by backbone position.
pub struct Layout {
    pub backbone: Arc<Backbone>,
    pub machine: Arc<MachineParams>,
    /// Statements, ascending ids.
    pub stmts: Vec<ObjectId>,
    pub pos: HashMap<ObjectId, usize>,
    order: Vec<Option<VarRef>>,
    /// Dimensions as statement positions.
    pub dims: Vec<usize>,
    /// Instructions as statement positions.
    pub insts: Vec<usize>,
    kind: Vec<Option<VarRef>>,
    size: Vec<Option<(VarRef, Vec<i64>)>>,
    thread_level: HashMap<(usize, usize), VarRef>,
    cache: Vec<Option<VarRef>>,
    mem_space: HashMap<ObjectId, VarRef>,
}

type Key = ([u8; 32], [u8; 32]);

fn cache() -> &'static Mutex<HashMap<Key, Arc<Layout>>> {
    static CACHE: OnceLock<Mutex<HashMap<Key, Arc<Layout>>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

impl Layout {
    pub fn of(c: &Candidate) -> Arc<Layout> {
        let space = c.space();
        let key = (space.def_digest, space.host_digest);
        if let Some(l) = cache().lock().unwrap().get(&key) {
            return l.clone();
        }
        let l = Arc::new(Layout::build(space));
        cache().lock().unwrap().insert(key, l.clone());
        l
    }

    fn build(space: &Space) -> Layout {
        let host = GpuHost::of(&*space.host);
        let b = host.backbone.clone();
        let stmts = b.statements();
        let n = stmts.len();
        let pos: HashMap<ObjectId, usize> = stmts.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        let mut order = vec![None; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    order[i * n + j] = space.var_ref("order", &[stmts[i], stmts[j]]);
                }
            }
        }
        let dims: Vec<usize> = (0..n).filter(|&i| b.is_dim(stmts[i])).collect();
        let insts: Vec<usize> = (0..n).filter(|&i| b.is_inst(stmts[i])).collect();
        let kind = stmts.iter().map(|&s| space.var_ref("dim_kind", &[s])).collect();
        let size = stmts
            .iter()
            .map(|&s| space.var_ref("size", &[s]).map(|r| (r, space.instances[r.var as usize].ints.clone())))
            .collect();
        let mut thread_level = HashMap::new();
        for &x in &dims {
            for &y in &dims {
                if let Some(r) = space.var_ref("thread_level", &[stmts[x], stmts[y]]) {
                    thread_level.insert((x, y), r);
                }
            }
        }
        let cache = stmts.iter().map(|&s| space.var_ref("cache", &[s])).collect();
        let mem_space = b.regions.iter().filter_map(|r| Some((r.id, space.var_ref("mem_space", &[r.id])?))).collect();
        Layout {
            backbone: b,
            machine: host.machine.clone(),
            stmts,
            pos,
            order,
            dims,
            insts,
            kind,
            size,
            thread_level,
            cache,
            mem_space,
        }
    }

    pub fn order(&self, c: &Candidate, a: usize, b: usize) -> u32 {
        c.read(self.order[a * self.stmts.len() + b].expect("order instance"))
    }

    pub fn kind(&self, c: &Candidate, d: usize) -> u32 {
        c.read(self.kind[d].expect("dim_kind instance"))
    }

    /// Smallest and largest remaining size of a dimension.
    pub fn size_range(&self, c: &Candidate, d: usize) -> (u64, u64) {
        match &self.size[d] {
            Some((r, ints)) => {
                let m = c.read(*r);
                let lo = (0..ints.len()).find(|&i| m & (1 << i) != 0).map_or(0, |i| ints[i]);
                let hi = (0..ints.len()).rev().find(|&i| m & (1 << i) != 0).map_or(0, |i| ints[i]);
                (lo as u64, hi as u64)
            }
            None => {
                let b = &self.backbone;
                let dim = b.dim(self.stmts[d]);
                let l = &b.logicals[dim.logical];
                let (mut lo, mut hi) = (1u64, 1u64);
                for &x in l.levels.iter().filter(|&&x| x != dim.id) {
                    let (a, z) = self.size_range(c, self.pos[&x]);
                    lo *= a.max(1);
                    hi *= z.max(1);
                }
                (l.extent / hi, l.extent / lo)
            }
        }
    }

    pub fn size_decided(&self, c: &Candidate, d: usize) -> bool {
        self.size[d].as_ref().is_none_or(|(r, _)| c.read(*r).count_ones() == 1)
    }

    pub fn thread_level(&self, c: &Candidate, x: usize, y: usize) -> Option<u32> {
        self.thread_level.get(&(x, y)).map(|r| c.read(*r))
    }

    pub fn cache(&self, c: &Candidate, i: usize) -> Option<u32> {
        self.cache[i].map(|r| c.read(r))
    }

    pub fn mem_space(&self, c: &Candidate, region: ObjectId) -> u32 {
        c.read(self.mem_space[&region])
    }
}
