//! Candidates: partially instantiated decision vectors.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::{Arc, Mutex};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::host::{Host, ObjectId};
use crate::ir::SpaceDefinition;
use crate::propagate::{condition_entailed, counter_interval, DeadEnd, Engine, TraceEvent};
use crate::space::{FiredKey, Space, SpaceError, Var, VarRef};

/// A definition together with the spaces reached by lowering its root host.
///
/// Spaces are cached by host digest; since lowerings commute, the space of a
/// candidate only depends on its set of fired triggers.
pub struct Family {
    pub def: Arc<SpaceDefinition>,
    root: Arc<Space>,
    cache: Mutex<HashMap<[u8; 32], Arc<Space>>>,
}

impl std::fmt::Debug for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Family").field("root", &self.root).finish()
    }
}

impl Family {
    pub fn new(def: SpaceDefinition, host: Arc<dyn Host>) -> Result<Arc<Family>, SpaceError> {
        let def = Arc::new(def);
        let root = Arc::new(Space::build(def.clone(), host)?);
        let mut cache = HashMap::new();
        cache.insert(root.host_digest, root.clone());
        Ok(Arc::new(Family { def, root, cache: Mutex::new(cache) }))
    }

    pub fn root_space(&self) -> &Arc<Space> {
        &self.root
    }

    pub fn space_for(&self, host: Arc<dyn Host>) -> Result<Arc<Space>, SpaceError> {
        let digest = host.digest();
        if let Some(s) = self.cache.lock().unwrap().get(&digest) {
            return Ok(s.clone());
        }
        let space = Arc::new(Space::build(self.def.clone(), host)?);
        Ok(self.cache.lock().unwrap().entry(digest).or_insert(space).clone())
    }

    /// The full-domain decision vector, without propagation.
    pub fn instantiate(self: &Arc<Self>) -> Candidate {
        let space = self.root.clone();
        let domains = space.full_domains();
        let counters = (0..space.counters.len()).map(|c| counter_interval(&space, &domains, c)).collect();
        Candidate { family: self.clone(), space, domains, counters, fired: Vec::new(), generation: 0 }
    }

    /// The propagated root candidate.
    pub fn root(self: &Arc<Self>) -> Result<Candidate, DeadEnd> {
        self.instantiate().propagate()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("not a candidate encoding")]
    BadMagic,
    #[error("unsupported encoding version {0}")]
    Version(u32),
    #[error("encoding belongs to another {0}")]
    Mismatch(&'static str),
    #[error("truncated or malformed encoding")]
    Malformed,
    #[error("replaying lowerings failed: {0}")]
    Space(#[from] SpaceError),
}

const MAGIC: &[u8; 4] = b"ISPC";
const VERSION: u32 = 1;

/// A partially instantiated decision vector. Cheap to clone; every
/// restriction returns a new value.
#[derive(Clone)]
pub struct Candidate {
    family: Arc<Family>,
    space: Arc<Space>,
    domains: Vec<u32>,
    counters: Vec<(i64, i64)>,
    fired: Vec<FiredKey>,
    generation: u64,
}

impl std::fmt::Debug for Candidate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Candidate")
            .field("instances", &self.domains.len())
            .field("open", &self.open_choices().len())
            .field("fired", &self.fired.len())
            .finish()
    }
}

impl Candidate {
    pub fn family(&self) -> &Arc<Family> {
        &self.family
    }

    pub fn space(&self) -> &Arc<Space> {
        &self.space
    }

    pub fn domains(&self) -> &[u32] {
        &self.domains
    }

    pub fn domain(&self, var: Var) -> u32 {
        self.domains[var as usize]
    }

    pub fn fired(&self) -> &[FiredKey] {
        &self.fired
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn lookup(&self, name: &str, args: &[ObjectId]) -> Option<VarRef> {
        self.space.var_ref(name, args)
    }

    /// The domain read through a reference (swapped references see the
    /// antisymmetric image).
    pub fn read(&self, r: VarRef) -> u32 {
        self.space.orient(r, self.domains[r.var as usize])
    }

    /// Value names of the domain read through `r`.
    pub fn values(&self, r: VarRef) -> Vec<String> {
        let m = self.read(r);
        (0..32).filter(|i| m & (1 << i) != 0).map(|i| self.space.value_name(r.var, i)).collect()
    }

    /// Mask of the named values of the instance read through `r`.
    pub fn mask_of(&self, r: VarRef, values: &[&str]) -> Option<u32> {
        let mut m = 0;
        for v in values {
            let w = self.space.instances[r.var as usize].width as usize;
            let i = (0..w).find(|&i| self.space.value_name(r.var, i) == *v)?;
            m |= 1 << i;
        }
        Some(m)
    }

    pub fn counter_bounds(&self, name: &str, args: &[ObjectId]) -> Option<(i64, i64)> {
        self.space.counter_of(name, args).map(|c| self.counters[c])
    }

    pub fn counter_values(&self) -> &[(i64, i64)] {
        &self.counters
    }

    /// Open instances (more than one value), in declaration then argument order.
    pub fn open_choices(&self) -> Vec<Var> {
        (0..self.domains.len() as Var).filter(|&v| self.domains[v as usize].count_ones() > 1).collect()
    }

    pub fn is_fully_specified(&self) -> bool {
        self.domains.iter().all(|d| d.count_ones() == 1)
    }

    /// Intersects a domain without propagating. `None` if it empties.
    pub fn restrict(&self, r: VarRef, subset: u32) -> Option<Candidate> {
        let mask = self.space.orient(r, subset);
        let new = self.domains[r.var as usize] & mask;
        if new == 0 {
            return None;
        }
        let mut c = self.clone();
        c.domains[r.var as usize] = new;
        c.generation += 1;
        Some(c)
    }

    /// Restricts then propagates to a fixpoint, firing enabled triggers.
    pub fn apply_decision(&self, r: VarRef, subset: u32) -> Result<Candidate, DeadEnd> {
        let Some(c) = self.restrict(r, subset) else {
            return Err(DeadEnd { reason: format!("{} restricted to an empty set", self.space.describe(r.var)) });
        };
        if c.domains[r.var as usize] == self.domains[r.var as usize] {
            return Ok(c);
        }
        c.run(Some(r.var), None)
    }

    /// Full propagation to a fixpoint.
    pub fn propagate(&self) -> Result<Candidate, DeadEnd> {
        self.run(None, None)
    }

    pub fn propagate_traced(&self, trace: &mut Vec<TraceEvent>) -> Result<Candidate, DeadEnd> {
        self.run(None, Some(trace))
    }

    /// Panics if a trigger callback fails or removes objects: callbacks are
    /// part of the space definition and such failures are bugs.
    fn run(&self, changed: Option<Var>, mut trace: Option<&mut Vec<TraceEvent>>) -> Result<Candidate, DeadEnd> {
        let mut space = self.space.clone();
        let mut domains = self.domains.clone();
        let mut fired = self.fired.clone();
        let mut first = changed;
        loop {
            let mut engine = Engine::new(&space, domains, trace.as_deref_mut());
            match first.take() {
                Some(v) => engine.enqueue_var(v),
                None => engine.enqueue_all(),
            }
            engine.run()?;
            domains = std::mem::take(&mut engine.dom);
            drop(engine);
            let mut ready: Vec<usize> = space
                .triggers
                .iter()
                .enumerate()
                .filter(|(_, t)| {
                    let key = (t.trigger, t.args.clone());
                    fired.binary_search(&key).is_err() && condition_entailed(&t.condition, &domains)
                })
                .map(|(i, _)| i)
                .collect();
            if ready.is_empty() {
                break;
            }
            ready.sort_by(|&a, &b| {
                let (ta, tb) = (&space.triggers[a], &space.triggers[b]);
                (ta.trigger, &ta.args).cmp(&(tb.trigger, &tb.args))
            });
            let mut host = space.host.clone();
            for &i in &ready {
                let t = &space.triggers[i];
                host = host
                    .lower(&t.callback, &t.callback_objects)
                    .unwrap_or_else(|e| panic!("trigger callback `{}` failed: {e}", t.callback));
                let key = (t.trigger, t.args.clone());
                let pos = fired.binary_search(&key).unwrap_err();
                fired.insert(pos, key);
            }
            let next = self.family.space_for(host).unwrap_or_else(|e| panic!("lowered space is invalid: {e}"));
            domains = remap(&space, &next, &domains).unwrap_or_else(|e| panic!("{e}"));
            space = next;
        }
        let counters = (0..space.counters.len()).map(|c| counter_interval(&space, &domains, c)).collect();
        Ok(Candidate { family: self.family.clone(), space, domains, counters, fired, generation: self.generation + 1 })
    }

    /// Content digest: definition, backbone, domains, counters and fired
    /// triggers. The generation counter is excluded.
    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.encode_body());
        h.finalize().into()
    }

    pub fn digest_hex(&self) -> String {
        self.digest().iter().map(|b| format!("{b:02x}")).collect()
    }

    fn encode_body(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.space.def_digest);
        out.extend_from_slice(&self.family.root.host_digest);
        out.extend_from_slice(&(self.fired.len() as u32).to_le_bytes());
        for (t, args) in &self.fired {
            out.extend_from_slice(&t.to_le_bytes());
            out.extend_from_slice(&(args.len() as u32).to_le_bytes());
            for a in args {
                out.extend_from_slice(&a.0.to_le_bytes());
            }
        }
        out.extend_from_slice(&(self.domains.len() as u32).to_le_bytes());
        for d in &self.domains {
            out.extend_from_slice(&d.to_le_bytes());
        }
        out.extend_from_slice(&(self.counters.len() as u32).to_le_bytes());
        for (lo, hi) in &self.counters {
            out.extend_from_slice(&lo.to_le_bytes());
            out.extend_from_slice(&hi.to_le_bytes());
        }
        out
    }

    /// Binary encoding: magic, version, definition digest, backbone digest,
    /// fired triggers, then domains and counter intervals in instance order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = MAGIC.to_vec();
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend(self.encode_body());
        out
    }

    pub fn from_bytes(family: &Arc<Family>, bytes: &[u8]) -> Result<Candidate, DecodeError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(DecodeError::BadMagic);
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(DecodeError::Version(version));
        }
        if r.take(32)? != family.root.def_digest {
            return Err(DecodeError::Mismatch("definition"));
        }
        if r.take(32)? != family.root.host_digest {
            return Err(DecodeError::Mismatch("backbone"));
        }
        let nfired = r.u32()? as usize;
        let mut fired = Vec::with_capacity(nfired.min(1 << 16));
        for _ in 0..nfired {
            let t = r.u32()?;
            let n = r.u32()? as usize;
            let args = (0..n).map(|_| r.u32().map(ObjectId)).collect::<Result<Vec<_>, _>>()?;
            fired.push((t, args));
        }
        // Replay lowerings in key order to recover the space.
        let mut space = family.root.clone();
        let mut done = Vec::new();
        while done.len() < fired.len() {
            let mut progressed = false;
            for key in &fired {
                if done.contains(key) {
                    continue;
                }
                if let Some(t) = space.triggers.iter().find(|t| t.trigger == key.0 && t.args == key.1) {
                    let host = space.host.lower(&t.callback, &t.callback_objects).map_err(SpaceError::from)?;
                    space = family.space_for(host)?;
                    done.push(key.clone());
                    progressed = true;
                }
            }
            if !progressed {
                return Err(DecodeError::Malformed);
            }
        }
        let n = r.u32()? as usize;
        if n != space.instances.len() {
            return Err(DecodeError::Malformed);
        }
        let domains = (0..n).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
        for (d, inst) in domains.iter().zip(&space.instances) {
            if d & !inst.full_mask() != 0 {
                return Err(DecodeError::Malformed);
            }
        }
        let nc = r.u32()? as usize;
        if nc != space.counters.len() {
            return Err(DecodeError::Malformed);
        }
        let counters = (0..nc).map(|_| Ok((r.i64()?, r.i64()?))).collect::<Result<Vec<_>, DecodeError>>()?;
        if r.pos != bytes.len() {
            return Err(DecodeError::Malformed);
        }
        fired.sort();
        Ok(Candidate { family: family.clone(), space, domains, counters, fired, generation: 0 })
    }

    /// One `choice(args) = {values}` line per instance, then counters.
    pub fn text_dump(&self) -> String {
        let mut out = String::new();
        for v in 0..self.domains.len() as Var {
            let vals = self.values(VarRef { var: v, swapped: false });
            let _ = writeln!(out, "{} = {{{}}}", self.space.describe(v), vals.join(", "));
        }
        for (c, (lo, hi)) in self.counters.iter().enumerate() {
            let _ = writeln!(out, "{} = [{lo}, {hi}]", self.space.describe_counter(c));
        }
        out
    }
}

/// Carries domains over to a lowered space, keyed by choice instance.
fn remap(old: &Space, new: &Space, domains: &[u32]) -> Result<Vec<u32>, SpaceError> {
    let mut out = new.full_domains();
    for (v, inst) in old.instances.iter().enumerate() {
        let r = new
            .var_ref_of(inst.choice, &inst.args)
            .ok_or_else(|| SpaceError::RemovedObjects(old.describe(v as Var)))?;
        out[r.var as usize] = domains[v];
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], DecodeError> {
        let end = self.pos.checked_add(n).ok_or(DecodeError::Malformed)?;
        let s = self.bytes.get(self.pos..end).ok_or(DecodeError::Malformed)?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn i64(&mut self) -> Result<i64, DecodeError> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
