//! The shipped GPU space definition and its instantiation on a backbone.

use std::sync::Arc;

use ispace_core::candidate::{Candidate, Family};
use ispace_core::dsl;
use ispace_core::host::{Host, ObjectId};
use ispace_core::ir::SpaceDefinition;
use ispace_core::space::SpaceError;
use thiserror::Error;

use crate::backbone::{Backbone, BackboneError};
use crate::host::GpuHost;
use crate::kernel::{build_kernel, FixedDecision, KernelSpec};
use crate::machine::MachineParams;

/// Source of the GPU space definition.
pub const GPU_SPACE: &str = include_str!("../spaces/gpu.space");

#[derive(Debug, Error)]
pub enum EncodeError {
    #[error(transparent)]
    Backbone(#[from] BackboneError),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("invalid space definition: {0}")]
    Definition(String),
    #[error("fixed decision on `{0}` matches no choice instance")]
    NoMatch(String),
    #[error("fixed decision on `{choice}` uses unknown value `{value}`")]
    UnknownValue { choice: String, value: String },
    #[error("the space is empty")]
    Empty,
}

pub fn definition() -> SpaceDefinition {
    dsl::load(GPU_SPACE).expect("shipped definition is valid")
}

/// A GPU space: the family of spaces of one backbone and its root.
#[derive(Clone)]
pub struct GpuSpace {
    pub family: Arc<Family>,
    pub root: Candidate,
}

impl GpuSpace {
    pub fn new(backbone: Backbone, machine: MachineParams, fixed: &[FixedDecision]) -> Result<GpuSpace, EncodeError> {
        let host = GpuHost::new(Arc::new(backbone), Arc::new(machine));
        let family = Family::new(definition(), Arc::new(host))?;
        let mut root = family.root().map_err(|_| EncodeError::Empty)?;
        for f in fixed {
            root = apply_fixed(&root, f)?;
        }
        Ok(GpuSpace { family, root })
    }

    pub fn from_spec(spec: &KernelSpec, machine: MachineParams) -> Result<GpuSpace, EncodeError> {
        GpuSpace::new(build_kernel(spec)?, machine, &spec.fixed)
    }

    pub fn backbone(&self) -> &Arc<Backbone> {
        &backbone_of(&self.root).backbone
    }
}

/// The (possibly lowered) backbone a candidate refers to.
pub fn backbone_of(c: &Candidate) -> &GpuHost {
    GpuHost::of(&*c.space().host)
}

/// Restricts every instance matching a fixed decision, then propagates.
pub fn apply_fixed(c: &Candidate, f: &FixedDecision) -> Result<Candidate, EncodeError> {
    let space = c.space().clone();
    let host = backbone_of(c);
    let choice = space.choice_id(&f.choice).ok_or_else(|| EncodeError::NoMatch(f.choice.clone()))?;
    let names: Vec<Option<ObjectId>> = f
        .args
        .iter()
        .map(|a| if a == "*" { Ok(None) } else { host.backbone.object_by_name(a).map(Some).ok_or(()) })
        .collect::<Result<_, _>>()
        .map_err(|_| EncodeError::NoMatch(format!("{}({})", f.choice, f.args.join(", "))))?;
    let mut out = c.clone();
    let mut matched = false;
    for (var, inst) in space.instances.iter().enumerate() {
        if inst.choice != choice || inst.args.len() != names.len() {
            continue;
        }
        for swapped in [false, true] {
            let args: Vec<ObjectId> =
                if swapped { inst.args.iter().rev().copied().collect() } else { inst.args.clone() };
            if swapped && !space.choice_of(var as u32).is_antisymmetric() {
                continue;
            }
            if names.iter().zip(&args).any(|(n, a)| n.is_some_and(|n| n != *a)) {
                continue;
            }
            let r = space.var_ref_of(choice, &args).expect("instance exists");
            let mut mask = 0;
            for v in &f.values {
                mask |= out
                    .mask_of(r, &[v.as_str()])
                    .ok_or_else(|| EncodeError::UnknownValue { choice: f.choice.clone(), value: v.clone() })?;
            }
            matched = true;
            let cur = out.read(r);
            out = out.apply_decision(r, cur & mask).map_err(|_| EncodeError::Empty)?;
            break;
        }
    }
    if !matched {
        return Err(EncodeError::NoMatch(format!("{}({})", f.choice, f.args.join(", "))));
    }
    Ok(out)
}

/// The object id of a backbone object name in a candidate's space.
pub fn object(c: &Candidate, name: &str) -> Option<ObjectId> {
    backbone_of(c).backbone.object_by_name(name)
}

pub fn host_of(c: &Candidate) -> Arc<dyn Host> {
    c.space().host.clone()
}
