use serde::{Deserialize, Serialize};

/// Cost of one memory access, `[coalesced, uncoalesced]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MemoryCosts {
    pub global_l1: [u64; 2],
    pub global_l2: [u64; 2],
    pub global_read_only: [u64; 2],
    pub global_none: [u64; 2],
    pub shared: [u64; 2],
}

impl Default for MemoryCosts {
    fn default() -> Self {
        MemoryCosts {
            global_l1: [10, 40],
            global_l2: [20, 80],
            global_read_only: [8, 32],
            global_none: [40, 160],
            shared: [2, 4],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostTable {
    /// Issue cost of any instruction.
    pub issue: u64,
    /// Per iteration of a sequential loop.
    pub loop_overhead: u64,
    pub barrier: u64,
    pub memory: MemoryCosts,
}

impl Default for CostTable {
    fn default() -> Self {
        CostTable { issue: 1, loop_overhead: 2, barrier: 20, memory: MemoryCosts::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MemSpace {
    Global,
    Shared,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CacheMode {
    L1,
    L2,
    ReadOnly,
    None,
}

impl CostTable {
    pub fn memory_cost(&self, space: MemSpace, cache: CacheMode, coalesced: bool) -> u64 {
        let m = &self.memory;
        let row = match (space, cache) {
            (MemSpace::Shared, _) => m.shared,
            (MemSpace::Global, CacheMode::L1) => m.global_l1,
            (MemSpace::Global, CacheMode::L2) => m.global_l2,
            (MemSpace::Global, CacheMode::ReadOnly) => m.global_read_only,
            (MemSpace::Global, CacheMode::None) => m.global_none,
        };
        row[usize::from(!coalesced)]
    }
}

/// Target machine parameters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MachineParams {
    pub max_threads_per_block: u32,
    pub max_thread_levels: u32,
    pub max_block_levels: u32,
    pub shared_mem_bytes: u32,
    pub vector_width: u32,
    /// Threads that run concurrently; more parallel iterations run in waves.
    pub parallel_lanes: u64,
    pub costs: CostTable,
}

impl Default for MachineParams {
    fn default() -> Self {
        MachineParams {
            max_threads_per_block: 1024,
            max_thread_levels: 3,
            max_block_levels: 3,
            shared_mem_bytes: 49152,
            vector_width: 4,
            parallel_lanes: 2048,
            costs: CostTable::default(),
        }
    }
}
