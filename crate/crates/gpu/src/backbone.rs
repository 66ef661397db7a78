//! Semantic backbones: instructions, dimensions and memory regions of a
//! kernel, with no implementation decision taken.

use std::collections::BTreeMap;

use ispace_core::host::{ChoiceKey, ObjectId};
use ispace_core::term::Term;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackboneError {
    #[error("`{0}` must be positive")]
    NonPositive(String),
    #[error("empty factor universe for `{0}`")]
    EmptyUniverse(String),
    #[error("factor universe of `{0}` has more than 32 values")]
    UniverseTooLarge(String),
    #[error("tiling factors {factors:?} do not divide the extent {extent} of `{dim}`")]
    NotDivisible { dim: String, extent: u64, factors: Vec<u32> },
    #[error("`{0}` is already strip-mined")]
    AlreadyMined(String),
    #[error("{0}")]
    Unsupported(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Op {
    Add,
    Mul,
    Mad,
    /// Conversion; with a constant operand it initializes a value.
    Cast,
    Load,
    Store,
}

impl Op {
    pub fn name(self) -> &'static str {
        match self {
            Op::Add => "add",
            Op::Mul => "mul",
            Op::Mad => "mad",
            Op::Cast => "cast",
            Op::Load => "load",
            Op::Store => "store",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Operand {
    Constant(i64),
    /// A scalar kernel parameter.
    Input(String),
    /// The value produced by an instruction in the same iteration.
    Produced(ObjectId),
    /// An accumulator initialized by `init` and carried across `dims`.
    Reduce {
        init: ObjectId,
        dims: Vec<ObjectId>,
    },
    /// A value produced in another loop nest, paired dimension by dimension.
    Mapped {
        mapping: usize,
    },
}

/// One term of an address: a logical index or a single dimension, scaled by
/// a stride in elements.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum IndexTerm {
    Logical { logical: usize, stride: i64 },
    Dim { dim: ObjectId, stride: i64 },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Access {
    pub region: ObjectId,
    pub index: Vec<IndexTerm>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instruction {
    pub id: ObjectId,
    pub name: String,
    pub op: Op,
    pub operands: Vec<Operand>,
    /// Logical dimensions iterated by the instruction; the iteration
    /// dimensions are all their levels.
    pub logicals: Vec<usize>,
    /// Extra iteration dimensions (used by lowered copies).
    pub extra_dims: Vec<ObjectId>,
    pub access: Option<Access>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DimSize {
    /// Size chosen from a universe.
    Static(Vec<u32>),
    /// Extent of the logical dimension divided by the static levels.
    Dynamic,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dimension {
    pub id: ObjectId,
    pub name: String,
    pub logical: usize,
    pub level: usize,
    pub size: DimSize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogicalDim {
    pub name: String,
    pub extent: u64,
    /// Copies of the same iteration space in different loop nests share a
    /// class; only they may be merged.
    pub class: usize,
    /// Outermost first; the first level is the dynamic remainder.
    pub levels: Vec<ObjectId>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemRegion {
    pub id: ObjectId,
    pub name: String,
    pub elem_bytes: u32,
    /// Number of elements.
    pub len: u64,
    /// Backed by a kernel argument (as opposed to a temporary).
    pub input: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappedPair {
    pub id: ObjectId,
    pub src: ObjectId,
    pub dst: ObjectId,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lowered {
    pub region: ObjectId,
    pub store: ObjectId,
    pub load: ObjectId,
}

/// A `Mapped` operand: `consumer.operands[operand]` reads the value of
/// `producer` from the iteration of the paired dimensions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mapping {
    pub producer: ObjectId,
    pub consumer: ObjectId,
    pub operand: usize,
    pub pairs: Vec<MappedPair>,
    pub lowered: Option<Lowered>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Backbone {
    pub name: String,
    pub logicals: Vec<LogicalDim>,
    pub dims: Vec<Dimension>,
    pub insts: Vec<Instruction>,
    pub regions: Vec<MemRegion>,
    pub mappings: Vec<Mapping>,
    pub next_id: u32,
}

/// Ids of objects created by lowering start here so that they never clash
/// with builder ids.
const LOWERED_BASE: u32 = 1 << 20;

/// Sizes of all dimensions in a fully specified implementation.
pub type Sizes = BTreeMap<ObjectId, u64>;

impl Backbone {
    pub fn new(name: impl Into<String>) -> Self {
        Backbone {
            name: name.into(),
            logicals: vec![],
            dims: vec![],
            insts: vec![],
            regions: vec![],
            mappings: vec![],
            next_id: 0,
        }
    }

    fn fresh(&mut self) -> ObjectId {
        let id = ObjectId(self.next_id);
        self.next_id += 1;
        id
    }

    /// Adds an unmined logical dimension (a single dynamic level).
    pub fn add_logical(&mut self, name: &str, extent: u64, class: usize) -> Result<usize, BackboneError> {
        if extent == 0 {
            return Err(BackboneError::NonPositive(name.to_string()));
        }
        let l = self.logicals.len();
        let id = self.fresh();
        self.dims.push(Dimension { id, name: name.to_string(), logical: l, level: 0, size: DimSize::Dynamic });
        self.logicals.push(LogicalDim { name: name.to_string(), extent, class, levels: vec![id] });
        Ok(l)
    }

    pub fn add_region(&mut self, name: &str, elem_bytes: u32, len: u64) -> ObjectId {
        let id = self.fresh();
        self.regions.push(MemRegion { id, name: name.to_string(), elem_bytes, len, input: true });
        id
    }

    pub fn add_inst(
        &mut self,
        name: &str,
        op: Op,
        operands: Vec<Operand>,
        logicals: Vec<usize>,
        access: Option<Access>,
    ) -> ObjectId {
        let id = self.fresh();
        self.insts.push(Instruction { id, name: name.to_string(), op, operands, logicals, extra_dims: vec![], access });
        id
    }

    /// Pairs the levels of `src` and `dst` logical dimensions and records a
    /// mapped operand.
    pub fn add_mapping(
        &mut self,
        producer: ObjectId,
        consumer: ObjectId,
        operand: usize,
        pairs: &[(usize, usize)],
    ) -> usize {
        let mut out = Vec::new();
        for &(ls, ld) in pairs {
            let (a, b) = (self.logicals[ls].levels.clone(), self.logicals[ld].levels.clone());
            assert_eq!(a.len(), b.len(), "mapped logical dimensions must have the same levels");
            for (src, dst) in a.into_iter().zip(b) {
                let id = self.fresh();
                out.push(MappedPair { id, src, dst });
            }
        }
        let m = self.mappings.len();
        self.mappings.push(Mapping { producer, consumer, operand, pairs: out, lowered: None });
        let inst = self.inst_mut(consumer);
        inst.operands[operand] = Operand::Mapped { mapping: m };
        m
    }

    pub fn inst(&self, id: ObjectId) -> &Instruction {
        self.insts.iter().find(|i| i.id == id).expect("unknown instruction")
    }

    fn inst_mut(&mut self, id: ObjectId) -> &mut Instruction {
        self.insts.iter_mut().find(|i| i.id == id).expect("unknown instruction")
    }

    pub fn dim(&self, id: ObjectId) -> &Dimension {
        self.dims.iter().find(|d| d.id == id).expect("unknown dimension")
    }

    pub fn region(&self, id: ObjectId) -> &MemRegion {
        self.regions.iter().find(|r| r.id == id).expect("unknown region")
    }

    pub fn is_inst(&self, id: ObjectId) -> bool {
        self.insts.iter().any(|i| i.id == id)
    }

    pub fn is_dim(&self, id: ObjectId) -> bool {
        self.dims.iter().any(|d| d.id == id)
    }

    pub fn object_name(&self, id: ObjectId) -> Option<String> {
        if let Some(i) = self.insts.iter().find(|i| i.id == id) {
            return Some(i.name.clone());
        }
        if let Some(d) = self.dims.iter().find(|d| d.id == id) {
            return Some(d.name.clone());
        }
        if let Some(r) = self.regions.iter().find(|r| r.id == id) {
            return Some(r.name.clone());
        }
        for (m, mapping) in self.mappings.iter().enumerate() {
            if let Some(k) = mapping.pairs.iter().position(|p| p.id == id) {
                return Some(format!("map{m}_{k}"));
            }
        }
        None
    }

    pub fn object_by_name(&self, name: &str) -> Option<ObjectId> {
        let ids = self
            .insts
            .iter()
            .map(|i| i.id)
            .chain(self.dims.iter().map(|d| d.id))
            .chain(self.regions.iter().map(|r| r.id))
            .chain(self.mappings.iter().flat_map(|m| m.pairs.iter().map(|p| p.id)));
        ids.into_iter().find(|&id| self.object_name(id).as_deref() == Some(name))
    }

    /// Instructions and dimensions, ascending.
    pub fn statements(&self) -> Vec<ObjectId> {
        let mut v: Vec<ObjectId> = self.insts.iter().map(|i| i.id).chain(self.dims.iter().map(|d| d.id)).collect();
        v.sort_unstable();
        v
    }

    pub fn iter_dims(&self, inst: ObjectId) -> Vec<ObjectId> {
        let i = self.inst(inst);
        let mut v: Vec<ObjectId> = i
            .logicals
            .iter()
            .flat_map(|&l| self.logicals[l].levels.iter().copied())
            .chain(i.extra_dims.iter().copied())
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn reduce_dims(&self, inst: ObjectId) -> Vec<ObjectId> {
        let mut v: Vec<ObjectId> = self
            .inst(inst)
            .operands
            .iter()
            .flat_map(|o| match o {
                Operand::Reduce { dims, .. } => dims.clone(),
                _ => vec![],
            })
            .collect();
        v.sort_unstable();
        v
    }

    pub fn reduce_inits(&self, inst: ObjectId) -> Vec<ObjectId> {
        let mut v: Vec<ObjectId> = self
            .inst(inst)
            .operands
            .iter()
            .filter_map(|o| match o {
                Operand::Reduce { init, .. } => Some(*init),
                _ => None,
            })
            .collect();
        v.sort_unstable();
        v
    }

    /// Instructions whose value `inst` reads, including the producers of
    /// mapped operands.
    pub fn deps(&self, inst: ObjectId) -> Vec<ObjectId> {
        let mut v: Vec<ObjectId> = self
            .inst(inst)
            .operands
            .iter()
            .filter_map(|o| match o {
                Operand::Produced(p) => Some(*p),
                Operand::Reduce { init, .. } => Some(*init),
                Operand::Mapped { mapping } => Some(self.mappings[*mapping].producer),
                _ => None,
            })
            .collect();
        for m in &self.mappings {
            if let Some(l) = &m.lowered {
                if m.consumer == inst {
                    v.push(m.producer);
                }
                if l.load == inst {
                    v.push(l.store);
                }
            }
        }
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn pair(&self, id: ObjectId) -> Option<(usize, &MappedPair)> {
        self.mappings.iter().enumerate().find_map(|(m, map)| map.pairs.iter().find(|p| p.id == id).map(|p| (m, p)))
    }

    pub fn pair_producers(&self, m: usize) -> Vec<ObjectId> {
        let map = &self.mappings[m];
        let mut v = vec![map.producer];
        v.extend(map.lowered.as_ref().map(|l| l.store));
        v.sort_unstable();
        v
    }

    pub fn pair_consumers(&self, m: usize) -> Vec<ObjectId> {
        let map = &self.mappings[m];
        let mut v = vec![map.consumer];
        v.extend(map.lowered.as_ref().map(|l| l.load));
        v.sort_unstable();
        v
    }

    /// Dimensions of the same iteration space copied in different nests.
    pub fn mergeable(&self, a: ObjectId, b: ObjectId) -> bool {
        let (da, db) = (self.dim(a), self.dim(b));
        a != b && da.level == db.level && self.logicals[da.logical].class == self.logicals[db.logical].class
    }

    /// Static sizes a dimension may take.
    pub fn universe(&self, d: ObjectId) -> Option<&[u32]> {
        match &self.dim(d).size {
            DimSize::Static(u) => Some(u),
            DimSize::Dynamic => None,
        }
    }

    /// Size of `d` given the sizes of static dimensions.
    pub fn dim_size(&self, d: ObjectId, static_size: &impl Fn(ObjectId) -> u64) -> u64 {
        let dim = self.dim(d);
        match dim.size {
            DimSize::Static(_) => static_size(d),
            DimSize::Dynamic => {
                let l = &self.logicals[dim.logical];
                let inner: u64 = l.levels.iter().filter(|&&x| x != d).map(|&x| static_size(x)).product();
                l.extent / inner.max(1)
            }
        }
    }

    /// Extent of `d` as a term over size choices.
    pub fn extent_term(&self, d: ObjectId) -> Term<ChoiceKey> {
        let dim = self.dim(d);
        match dim.size {
            DimSize::Static(_) => Term::Value(ChoiceKey::new("size", vec![d])),
            DimSize::Dynamic => {
                let l = &self.logicals[dim.logical];
                let factors = l
                    .levels
                    .iter()
                    .filter(|&&x| x != d)
                    .map(|&x| Term::Value(ChoiceKey::new("size", vec![x])))
                    .collect();
                Term::Div(l.extent as i64, factors)
            }
        }
    }

    /// Stride in elements of dimension `d` in the address of `inst`'s access.
    pub fn stride(&self, inst: ObjectId, d: ObjectId, static_size: &impl Fn(ObjectId) -> u64) -> i64 {
        let Some(access) = &self.inst(inst).access else { return 0 };
        let mut total = 0;
        for t in &access.index {
            match *t {
                IndexTerm::Dim { dim, stride } if dim == d => total += stride,
                IndexTerm::Logical { logical, stride } => {
                    let levels = &self.logicals[logical].levels;
                    if let Some(pos) = levels.iter().position(|&x| x == d) {
                        let inner: u64 = levels[pos + 1..].iter().map(|&x| self.dim_size(x, static_size)).product();
                        total += stride * inner as i64;
                    }
                }
                _ => {}
            }
        }
        total
    }

    /// Element address accessed by `inst` at the given dimension indices.
    pub fn address(
        &self,
        inst: ObjectId,
        index: &BTreeMap<ObjectId, u64>,
        static_size: &impl Fn(ObjectId) -> u64,
    ) -> i64 {
        let Some(access) = &self.inst(inst).access else { return 0 };
        let mut addr = 0i64;
        for t in &access.index {
            match *t {
                IndexTerm::Dim { dim, stride } => addr += stride * index.get(&dim).copied().unwrap_or(0) as i64,
                IndexTerm::Logical { logical, stride } => {
                    let mut flat = 0u64;
                    for &lv in &self.logicals[logical].levels {
                        flat = flat * self.dim_size(lv, static_size) + index.get(&lv).copied().unwrap_or(0);
                    }
                    addr += stride * flat as i64;
                }
            }
        }
        addr
    }

    /// Splits a logical dimension into a dynamic remainder followed by one
    /// static level per factor universe (outermost first).
    pub fn strip_mine(&mut self, logical: usize, factors: &[Vec<u32>]) -> Result<(), BackboneError> {
        let l = &self.logicals[logical];
        let name = l.name.clone();
        if l.levels.len() > 1 {
            return Err(BackboneError::AlreadyMined(name));
        }
        for f in factors {
            if f.is_empty() {
                return Err(BackboneError::EmptyUniverse(name));
            }
            if f.len() > 32 {
                return Err(BackboneError::UniverseTooLarge(name));
            }
            if f.contains(&0) {
                return Err(BackboneError::NonPositive(name));
            }
        }
        check_divisible(&name, l.extent, factors, &mut Vec::new())?;
        for (k, f) in factors.iter().enumerate() {
            let id = self.fresh();
            let mut u = f.clone();
            u.sort_unstable();
            u.dedup();
            self.dims.push(Dimension {
                id,
                name: format!("{name}{}", k + 1),
                logical,
                level: k + 1,
                size: DimSize::Static(u),
            });
            self.logicals[logical].levels.push(id);
        }
        if !factors.is_empty() {
            let first = self.logicals[logical].levels[0];
            self.dims.iter_mut().find(|d| d.id == first).unwrap().name = format!("{name}0");
        }
        Ok(())
    }

    /// Replaces a mapped operand by a temporary array: a store in the
    /// producer's nest and a load in the consumer's nest. Idempotent.
    pub fn lower_mapping(&self, m: usize) -> Backbone {
        let mut b = self.clone();
        if b.mappings[m].lowered.is_some() {
            return b;
        }
        let map = b.mappings[m].clone();
        let base = LOWERED_BASE + 4 * m as u32;
        let (region, store, load) = (ObjectId(base), ObjectId(base + 1), ObjectId(base + 2));
        let len: u64 = map.pairs.iter().map(|p| b.max_size(p.src)).product();
        b.regions.push(MemRegion { id: region, name: format!("tmp{m}"), elem_bytes: 4, len, input: false });
        // Row-major over the pairs, with room for the largest sizes.
        let mut src_index = Vec::new();
        let mut dst_index = Vec::new();
        let mut stride = 1i64;
        for p in map.pairs.iter().rev() {
            src_index.push(IndexTerm::Dim { dim: p.src, stride });
            dst_index.push(IndexTerm::Dim { dim: p.dst, stride });
            stride *= b.max_size(p.src) as i64;
        }
        let (prod, cons) = (b.inst(map.producer).clone(), b.inst(map.consumer).clone());
        b.insts.push(Instruction {
            id: store,
            name: format!("st_tmp{m}"),
            op: Op::Store,
            operands: vec![Operand::Produced(map.producer)],
            logicals: prod.logicals.clone(),
            extra_dims: prod.extra_dims.clone(),
            access: Some(Access { region, index: src_index }),
        });
        b.insts.push(Instruction {
            id: load,
            name: format!("ld_tmp{m}"),
            op: Op::Load,
            operands: vec![],
            logicals: cons.logicals.clone(),
            extra_dims: cons.extra_dims.clone(),
            access: Some(Access { region, index: dst_index }),
        });
        b.inst_mut(map.consumer).operands[map.operand] = Operand::Produced(load);
        b.mappings[m].lowered = Some(Lowered { region, store, load });
        b
    }

    fn max_size(&self, d: ObjectId) -> u64 {
        match &self.dim(d).size {
            DimSize::Static(u) => *u.iter().max().unwrap() as u64,
            DimSize::Dynamic => {
                let l = &self.logicals[self.dim(d).logical];
                let inner: u64 = l
                    .levels
                    .iter()
                    .filter(|&&x| x != d)
                    .map(|&x| *self.universe(x).unwrap().iter().min().unwrap() as u64)
                    .product();
                l.extent / inner.max(1)
            }
        }
    }

    /// Size in bytes of a region as a term: temporaries shrink along pairs
    /// whose dimensions are merged.
    pub fn bytes_term(&self, r: ObjectId) -> Term<ChoiceKey> {
        let region = self.region(r);
        if region.input {
            return Term::Const(region.len as i64 * region.elem_bytes as i64);
        }
        let m = self.mappings.iter().find(|m| m.lowered.as_ref().is_some_and(|l| l.region == r)).unwrap();
        let mut factors = vec![Term::Const(region.elem_bytes as i64)];
        for p in &m.pairs {
            let (a, b) = if p.src < p.dst { (p.src, p.dst) } else { (p.dst, p.src) };
            factors.push(Term::Select {
                key: ChoiceKey::new("order", vec![a, b]),
                values: vec!["MERGED".into()],
                then: Box::new(Term::Const(1)),
                otherwise: Box::new(self.extent_term(p.src)),
            });
        }
        Term::Mul(factors)
    }
}

fn check_divisible(name: &str, extent: u64, factors: &[Vec<u32>], prefix: &mut Vec<u32>) -> Result<(), BackboneError> {
    match factors.split_first() {
        None => {
            let p: u64 = prefix.iter().map(|&x| x as u64).product();
            if !extent.is_multiple_of(p) {
                return Err(BackboneError::NotDivisible { dim: name.to_string(), extent, factors: prefix.clone() });
            }
            Ok(())
        }
        Some((first, rest)) => {
            for &f in first {
                prefix.push(f);
                check_divisible(name, extent, rest, prefix)?;
                prefix.pop();
            }
            Ok(())
        }
    }
}
