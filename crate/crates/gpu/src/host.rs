//! The backbone seen through the sets and snippets of the GPU space.

use std::sync::Arc;

use ispace_core::host::{Host, HostError, HostValue, ObjectId};
use sha2::{Digest, Sha256};

use crate::backbone::{Backbone, DimSize};
use crate::machine::MachineParams;

pub struct GpuHost {
    pub backbone: Arc<Backbone>,
    pub machine: Arc<MachineParams>,
    digest: [u8; 32],
}

impl GpuHost {
    pub fn new(backbone: Arc<Backbone>, machine: Arc<MachineParams>) -> Self {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&*backbone).expect("backbone serializes"));
        h.update(serde_json::to_vec(&*machine).expect("machine serializes"));
        GpuHost { backbone, machine, digest: h.finalize().into() }
    }

    /// The GPU host behind a generic one.
    pub fn of(host: &dyn Host) -> &GpuHost {
        host.as_any().downcast_ref::<GpuHost>().expect("not a GPU space")
    }
}

fn one(args: &[ObjectId], set: &str) -> Result<ObjectId, HostError> {
    match args {
        [a] => Ok(*a),
        _ => Err(HostError::UnknownSet(format!("{set}/{}", args.len()))),
    }
}

impl Host for GpuHost {
    fn members(&self, set: &str, args: &[ObjectId]) -> Result<Vec<ObjectId>, HostError> {
        let b = &*self.backbone;
        let mut v = match set {
            "Statements" => b.statements(),
            "Insts" => b.insts.iter().map(|i| i.id).collect(),
            "Dimensions" => b.dims.iter().map(|d| d.id).collect(),
            "StaticDims" => b.dims.iter().filter(|d| matches!(d.size, DimSize::Static(_))).map(|d| d.id).collect(),
            "MemInsts" => b.insts.iter().filter(|i| i.access.is_some()).map(|i| i.id).collect(),
            "MemRegions" => b.regions.iter().map(|r| r.id).collect(),
            "MappedPairs" => b.mappings.iter().flat_map(|m| m.pairs.iter().map(|p| p.id)).collect(),
            "StaticPairs" => b
                .mappings
                .iter()
                .flat_map(|m| m.pairs.iter())
                .filter(|p| b.universe(p.src).is_some())
                .map(|p| p.id)
                .collect(),
            "AccessedRegions" => b.inst(one(args, set)?).access.iter().map(|a| a.region).collect(),
            "IterDims" => b.iter_dims(one(args, set)?),
            "Deps" => b.deps(one(args, set)?),
            "ReduceDims" => b.reduce_dims(one(args, set)?),
            "ReduceInits" => b.reduce_inits(one(args, set)?),
            "KeptDims" => {
                let i = one(args, set)?;
                let red = b.reduce_dims(i);
                if red.is_empty() {
                    vec![]
                } else {
                    b.iter_dims(i).into_iter().filter(|d| !red.contains(d)).collect()
                }
            }
            "PairSrc" | "PairDst" | "StaticPairSrc" | "StaticPairDst" | "PairProducers" | "PairConsumers" => {
                let q = one(args, set)?;
                let (m, p) = b.pair(q).ok_or_else(|| HostError::UnknownSet(format!("{set}({q})")))?;
                match set {
                    "PairSrc" | "StaticPairSrc" => vec![p.src],
                    "PairDst" | "StaticPairDst" => vec![p.dst],
                    "PairProducers" => b.pair_producers(m),
                    _ => b.pair_consumers(m),
                }
            }
            _ => return Err(HostError::UnknownSet(set.to_string())),
        };
        v.sort_unstable();
        Ok(v)
    }

    fn eval(&self, method: &str, objects: &[ObjectId]) -> Result<HostValue, HostError> {
        let b = &*self.backbone;
        let mp = &*self.machine;
        let fail = || HostError::Failed { method: method.to_string(), message: format!("undefined for {objects:?}") };
        Ok(match (method, objects) {
            ("gpu.max_threads", []) => HostValue::Int(mp.max_threads_per_block as i64),
            ("gpu.max_thread_levels", []) => HostValue::Int(mp.max_thread_levels as i64),
            ("gpu.max_block_levels", []) => HostValue::Int(mp.max_block_levels as i64),
            ("gpu.shared_mem_bytes", []) => HostValue::Int(mp.shared_mem_bytes as i64),
            ("gpu.vector_width", []) => HostValue::Int(mp.vector_width as i64),
            ("is_static", [x]) if b.is_dim(*x) => HostValue::Bool(b.universe(*x).is_some()),
            ("possible_sizes", [d]) => {
                HostValue::Ints(b.universe(*d).ok_or_else(fail)?.iter().map(|&s| s as i64).collect())
            }
            ("extent", [d]) if b.is_dim(*d) => HostValue::Term(b.extent_term(*d)),
            ("mergeable", [x, y]) if b.is_dim(*x) && b.is_dim(*y) => HostValue::Bool(b.mergeable(*x, *y)),
            ("is_input", [r]) => HostValue::Bool(b.regions.iter().find(|m| m.id == *r).ok_or_else(fail)?.input),
            ("is_load", [i]) if b.is_inst(*i) => HostValue::Bool(b.inst(*i).op == crate::backbone::Op::Load),
            ("bytes", [r]) if b.regions.iter().any(|m| m.id == *r) => HostValue::Term(b.bytes_term(*r)),
            _ => return Err(HostError::UnknownMethod(method.to_string())),
        })
    }

    fn lower(&self, callback: &str, objects: &[ObjectId]) -> Result<Arc<dyn Host>, HostError> {
        match (callback, objects) {
            ("lower_mapped", [q]) => {
                let (m, _) = self.backbone.pair(*q).ok_or_else(|| HostError::Failed {
                    method: callback.to_string(),
                    message: format!("{q} is not a mapped pair"),
                })?;
                let next = self.backbone.lower_mapping(m);
                Ok(Arc::new(GpuHost::new(Arc::new(next), self.machine.clone())))
            }
            _ => Err(HostError::UnknownMethod(callback.to_string())),
        }
    }

    fn object_name(&self, id: ObjectId) -> String {
        self.backbone.object_name(id).unwrap_or_else(|| id.to_string())
    }

    fn digest(&self) -> [u8; 32] {
        self.digest
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }
}
