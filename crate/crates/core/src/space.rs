//! A space definition instantiated against a host: choice instances,
//! clause instances, counters and trigger instances.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::host::{ChoiceKey, Host, HostError, HostValue, ObjectId, Snippet};
use crate::ir::*;
use crate::term::Term;

/// Index of a choice instance in the decision vector.
pub type Var = u32;

/// Maximum number of values of a single choice instance.
pub const MAX_VALUES: usize = 32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SpaceError {
    #[error(transparent)]
    Host(#[from] HostError),
    #[error("unknown choice `{0}`")]
    UnknownChoice(String),
    #[error("no instance {0}")]
    MissingInstance(String),
    #[error("{0}")]
    Snippet(String),
    #[error("{0}")]
    Type(String),
    #[error("`{0}` has more than 32 values")]
    TooManyValues(String),
    #[error("lowering removed choice instance {0}")]
    RemovedObjects(String),
}

/// A reference to a choice instance, possibly through the swapped argument
/// order of an antisymmetric choice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct VarRef {
    pub var: Var,
    pub swapped: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ChoiceShape {
    /// Enum values and the antisymmetry permutation, if any.
    Enum {
        values: Vec<String>,
        perm: Option<Vec<u8>>,
    },
    Integer,
}

#[derive(Clone, Debug)]
pub struct ChoiceInfo {
    pub name: String,
    pub arity: usize,
    pub shape: ChoiceShape,
    /// Set for representative flags induced by quotient declarations.
    pub quotient: Option<usize>,
}

impl ChoiceInfo {
    pub fn is_antisymmetric(&self) -> bool {
        matches!(&self.shape, ChoiceShape::Enum { perm: Some(_), .. })
    }

    pub fn values(&self) -> Option<&[String]> {
        match &self.shape {
            ChoiceShape::Enum { values, .. } => Some(values),
            ChoiceShape::Integer => None,
        }
    }

    pub fn value_index(&self, name: &str) -> Option<usize> {
        self.values()?.iter().position(|v| v == name)
    }
}

#[derive(Clone, Debug)]
pub struct Instance {
    pub choice: u32,
    pub args: Vec<ObjectId>,
    /// Universe of an integer instance, sorted.
    pub ints: Vec<i64>,
    pub width: u32,
}

impl Instance {
    pub fn full_mask(&self) -> u32 {
        mask_of_width(self.width)
    }
}

pub fn mask_of_width(width: u32) -> u32 {
    if width >= 32 {
        u32::MAX
    } else {
        (1u32 << width) - 1
    }
}

/// Applies an antisymmetry permutation to a mask.
pub fn permute_mask(mask: u32, perm: &[u8]) -> u32 {
    let mut out = 0;
    for (i, &p) in perm.iter().enumerate() {
        if mask & (1 << i) != 0 {
            out |= 1 << p;
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Lit {
    /// The variable takes a value in `mask`.
    Unary { var: Var, mask: u32 },
    /// `(x, y)` takes a value pair with `table[x] & (1 << y) != 0`.
    Binary { x: Var, y: Var, table: Arc<Vec<u32>> },
}

impl Lit {
    pub fn vars(&self) -> impl Iterator<Item = Var> {
        let (a, b) = match self {
            Lit::Unary { var, .. } => (*var, None),
            Lit::Binary { x, y, .. } => (*x, Some(*y)),
        };
        std::iter::once(a).chain(b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Origin {
    /// Index of the declaration in the definition items.
    Item(usize),
}

/// A disjunction of conjunctions of literals.
#[derive(Clone, Debug)]
pub struct Clause {
    pub terms: Vec<Vec<Lit>>,
    pub origin: Origin,
}

#[derive(Clone, Debug)]
pub struct CounterItem {
    /// `(var, mask)`: the item counts when the variable takes a value in mask.
    pub guard: Option<(Var, u32)>,
    pub term: Term<Var>,
}

#[derive(Clone, Debug)]
pub struct CounterInst {
    pub counter: u32,
    pub args: Vec<ObjectId>,
    pub op: CounterOp,
    pub items: Vec<CounterItem>,
    /// Inclusive bounds imposed by `require` declarations.
    pub upper: Option<i64>,
    pub lower: Option<i64>,
}

#[derive(Clone, Debug)]
pub struct TriggerInst {
    /// Ordinal of the trigger declaration among triggers.
    pub trigger: u32,
    pub args: Vec<ObjectId>,
    /// Conjunction of disjunctions of literals.
    pub condition: Vec<Vec<Lit>>,
    pub callback: String,
    pub callback_objects: Vec<ObjectId>,
}

/// A fired trigger, identified by declaration ordinal and bound objects.
pub type FiredKey = (u32, Vec<ObjectId>);

pub struct Space {
    pub def: Arc<SpaceDefinition>,
    pub def_digest: [u8; 32],
    pub host: Arc<dyn Host>,
    pub host_digest: [u8; 32],
    pub choices: Vec<ChoiceInfo>,
    pub counter_names: Vec<String>,
    pub instances: Vec<Instance>,
    index: HashMap<(u32, Vec<ObjectId>), Var>,
    counter_index: HashMap<(u32, Vec<ObjectId>), usize>,
    choice_by_name: HashMap<String, u32>,
    counter_by_name: HashMap<String, u32>,
    pub clauses: Vec<Clause>,
    pub counters: Vec<CounterInst>,
    pub triggers: Vec<TriggerInst>,
    pub watch_clauses: Vec<Vec<u32>>,
    pub watch_counters: Vec<Vec<u32>>,
    /// Distinct variables of each clause.
    pub clause_vars: Vec<Vec<Var>>,
    /// Set when instantiation produced an empty clause.
    pub infeasible: Option<String>,
}

impl std::fmt::Debug for Space {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Space")
            .field("instances", &self.instances.len())
            .field("clauses", &self.clauses.len())
            .field("counters", &self.counters.len())
            .field("triggers", &self.triggers.len())
            .finish()
    }
}

pub fn definition_digest(def: &SpaceDefinition) -> [u8; 32] {
    let json = serde_json::to_vec(def).expect("definition serializes");
    Sha256::digest(&json).into()
}

type Env = Vec<(String, ObjectId)>;

fn lookup(env: &Env, var: &str) -> Result<ObjectId, SpaceError> {
    env.iter()
        .rev()
        .find(|(v, _)| v == var)
        .map(|(_, o)| *o)
        .ok_or_else(|| SpaceError::Snippet(format!("unbound variable `${var}`")))
}

/// Resolution of one atom under a binding.
enum Res {
    Const(bool),
    Lit(Lit),
    Counter { counter: usize, op: CmpOp, k: i64 },
}

impl Space {
    /// Instantiates `def` for `host`.
    pub fn build(def: Arc<SpaceDefinition>, host: Arc<dyn Host>) -> Result<Space, SpaceError> {
        let def_digest = definition_digest(&def);
        let host_digest = host.digest();
        let mut space = Space {
            def: def.clone(),
            def_digest,
            host,
            host_digest,
            choices: Vec::new(),
            counter_names: Vec::new(),
            instances: Vec::new(),
            index: HashMap::new(),
            counter_index: HashMap::new(),
            choice_by_name: HashMap::new(),
            counter_by_name: HashMap::new(),
            clauses: Vec::new(),
            counters: Vec::new(),
            triggers: Vec::new(),
            watch_clauses: Vec::new(),
            watch_counters: Vec::new(),
            clause_vars: Vec::new(),
            infeasible: None,
        };
        // Choices and quotient flags, in declaration order.
        for (qi, item) in def.items.iter().enumerate() {
            match item {
                Item::Choice(c) => match &c.kind {
                    ChoiceKind::Counter(_) => {
                        space.counter_by_name.insert(c.name.clone(), space.counter_names.len() as u32);
                        space.counter_names.push(c.name.clone());
                    }
                    ChoiceKind::Enum { values, antisymmetric } => {
                        if values.len() > MAX_VALUES {
                            return Err(SpaceError::TooManyValues(c.name.clone()));
                        }
                        let perm = if antisymmetric.is_empty() {
                            None
                        } else {
                            let mut perm: Vec<u8> = (0..values.len() as u8).collect();
                            for (a, b) in antisymmetric {
                                let ia = values.iter().position(|v| v == a);
                                let ib = values.iter().position(|v| v == b);
                                let (Some(ia), Some(ib)) = (ia, ib) else {
                                    return Err(SpaceError::Type(format!("bad antisymmetry in `{}`", c.name)));
                                };
                                perm[ia] = ib as u8;
                                perm[ib] = ia as u8;
                            }
                            Some(perm)
                        };
                        space.push_choice(ChoiceInfo {
                            name: c.name.clone(),
                            arity: c.params.len(),
                            shape: ChoiceShape::Enum { values: values.clone(), perm },
                            quotient: None,
                        });
                    }
                    ChoiceKind::Integer { .. } => space.push_choice(ChoiceInfo {
                        name: c.name.clone(),
                        arity: c.params.len(),
                        shape: ChoiceShape::Integer,
                        quotient: None,
                    }),
                },
                Item::Quotient(q) => space.push_choice(ChoiceInfo {
                    name: q.flag.clone(),
                    arity: q.params.len() + 1,
                    shape: ChoiceShape::Enum { values: vec!["FALSE".into(), "TRUE".into()], perm: None },
                    quotient: Some(qi),
                }),
                _ => {}
            }
        }
        // Instances.
        for item in def.items.iter() {
            match item {
                Item::Choice(c) if !c.is_counter() => {
                    let choice = space.choice_by_name[&c.name];
                    let mut bindings = Vec::new();
                    space.bindings(&c.params, &mut Vec::new(), &mut |env| bindings.push(env.clone()))?;
                    for env in bindings {
                        let args: Vec<ObjectId> = env.iter().map(|(_, o)| *o).collect();
                        space.add_instance(choice, args, c, &env)?;
                    }
                }
                Item::Quotient(q) => {
                    let choice = space.choice_by_name[&q.flag];
                    let mut params = q.params.clone();
                    params.push(Param { var: q.var.clone(), set: q.set.clone() });
                    let mut bindings = Vec::new();
                    space.bindings(&params, &mut Vec::new(), &mut |env| bindings.push(env.clone()))?;
                    for env in bindings {
                        let args = env.iter().map(|(_, o)| *o).collect();
                        space.insert_instance(choice, args, vec![], 2);
                    }
                }
                _ => {}
            }
        }
        space.sort_instances();
        // Counters.
        for item in def.items.iter() {
            if let Item::Choice(c) = item {
                if let ChoiceKind::Counter(body) = &c.kind {
                    space.build_counter(c, body)?;
                }
            }
        }
        // Constraints, quotients and triggers.
        let mut seen = HashSet::new();
        let mut trigger_ordinal = 0u32;
        for (i, item) in def.items.iter().enumerate() {
            match item {
                Item::Require(r) => space.build_require(i, r, &mut seen)?,
                Item::Quotient(q) => space.build_quotient(i, q, &mut seen)?,
                Item::Trigger(t) => {
                    space.build_trigger(trigger_ordinal, t)?;
                    trigger_ordinal += 1;
                }
                _ => {}
            }
        }
        space.build_watches();
        Ok(space)
    }

    fn push_choice(&mut self, info: ChoiceInfo) {
        self.choice_by_name.insert(info.name.clone(), self.choices.len() as u32);
        self.choices.push(info);
    }

    fn insert_instance(&mut self, choice: u32, args: Vec<ObjectId>, ints: Vec<i64>, width: u32) {
        if self.choices[choice as usize].is_antisymmetric() && args[0] > args[1] {
            return;
        }
        self.instances.push(Instance { choice, args, ints, width });
    }

    fn add_instance(&mut self, choice: u32, args: Vec<ObjectId>, c: &ChoiceDecl, env: &Env) -> Result<(), SpaceError> {
        match &c.kind {
            ChoiceKind::Enum { values, .. } => {
                self.insert_instance(choice, args, vec![], values.len() as u32);
            }
            ChoiceKind::Integer { universe } => {
                let Some(u) = universe else {
                    return Err(SpaceError::Snippet(format!("integer choice `{}` has no universe", c.name)));
                };
                let mut ints = match self.eval_snippet(u, env)? {
                    (false, HostValue::Ints(v)) => v,
                    (false, HostValue::Int(v)) => vec![v],
                    _ => return Err(SpaceError::Type(format!("universe \"{u}\" is not a list of integers"))),
                };
                ints.sort_unstable();
                ints.dedup();
                if ints.len() > MAX_VALUES {
                    return Err(SpaceError::TooManyValues(c.name.clone()));
                }
                let width = ints.len() as u32;
                self.insert_instance(choice, args, ints, width);
            }
            ChoiceKind::Counter(_) => unreachable!(),
        }
        Ok(())
    }

    fn sort_instances(&mut self) {
        self.instances.sort_by(|a, b| (a.choice, &a.args).cmp(&(b.choice, &b.args)));
        self.index =
            self.instances.iter().enumerate().map(|(i, inst)| ((inst.choice, inst.args.clone()), i as Var)).collect();
    }

    /// Enumerates bindings of `params` with pairwise-distinct objects.
    fn bindings(&self, params: &[Param], env: &mut Env, f: &mut dyn FnMut(&Env)) -> Result<(), SpaceError> {
        let Some((first, rest)) = params.split_first() else {
            f(env);
            return Ok(());
        };
        let args = first.set.args.iter().map(|a| lookup(env, a)).collect::<Result<Vec<_>, _>>()?;
        for m in self.host.members(&first.set.name, &args)? {
            if env.iter().any(|(_, o)| *o == m) {
                continue;
            }
            env.push((first.var.clone(), m));
            self.bindings(rest, env, f)?;
            env.pop();
        }
        Ok(())
    }

    fn eval_snippet(&self, src: &str, env: &Env) -> Result<(bool, HostValue), SpaceError> {
        let s = Snippet::parse(src).map_err(SpaceError::Snippet)?;
        let objs = s.vars.iter().map(|v| lookup(env, v)).collect::<Result<Vec<_>, _>>()?;
        Ok((s.negated, self.host.eval(&s.method, &objs)?))
    }

    fn eval_bool(&self, src: &str, env: &Env) -> Result<bool, SpaceError> {
        match self.eval_snippet(src, env)? {
            (neg, HostValue::Bool(b)) => Ok(b != neg),
            _ => Err(SpaceError::Type(format!("\"{src}\" is not a boolean"))),
        }
    }

    fn eval_int(&self, src: &str, env: &Env) -> Result<i64, SpaceError> {
        match self.eval_snippet(src, env)? {
            (false, HostValue::Int(i)) => Ok(i),
            _ => Err(SpaceError::Type(format!("\"{src}\" is not an integer"))),
        }
    }

    pub fn choice_id(&self, name: &str) -> Option<u32> {
        self.choice_by_name.get(name).copied()
    }

    pub fn counter_id(&self, name: &str) -> Option<u32> {
        self.counter_by_name.get(name).copied()
    }

    /// Looks up the instance `name(args)`.
    pub fn var_ref(&self, name: &str, args: &[ObjectId]) -> Option<VarRef> {
        let choice = self.choice_id(name)?;
        self.var_ref_of(choice, args)
    }

    pub fn var_ref_of(&self, choice: u32, args: &[ObjectId]) -> Option<VarRef> {
        if self.choices[choice as usize].is_antisymmetric() && args.len() == 2 && args[0] > args[1] {
            let var = *self.index.get(&(choice, vec![args[1], args[0]]))?;
            Some(VarRef { var, swapped: true })
        } else {
            let var = *self.index.get(&(choice, args.to_vec()))?;
            Some(VarRef { var, swapped: false })
        }
    }

    pub fn var_of_key(&self, key: &ChoiceKey) -> Option<VarRef> {
        self.var_ref(&key.name, &key.args)
    }

    pub fn counter_of(&self, name: &str, args: &[ObjectId]) -> Option<usize> {
        let id = self.counter_id(name)?;
        self.counter_index.get(&(id, args.to_vec())).copied()
    }

    pub fn choice_of(&self, var: Var) -> &ChoiceInfo {
        &self.choices[self.instances[var as usize].choice as usize]
    }

    pub fn key_of(&self, var: Var) -> ChoiceKey {
        let inst = &self.instances[var as usize];
        ChoiceKey::new(self.choices[inst.choice as usize].name.clone(), inst.args.clone())
    }

    /// `name(obj, ...)` with host object names.
    pub fn describe(&self, var: Var) -> String {
        let inst = &self.instances[var as usize];
        let args: Vec<String> = inst.args.iter().map(|a| self.host.object_name(*a)).collect();
        format!("{}({})", self.choices[inst.choice as usize].name, args.join(", "))
    }

    pub fn describe_counter(&self, c: usize) -> String {
        let inst = &self.counters[c];
        let args: Vec<String> = inst.args.iter().map(|a| self.host.object_name(*a)).collect();
        format!("{}({})", self.counter_names[inst.counter as usize], args.join(", "))
    }

    /// Name of value `i` of a variable (integer values print as numbers).
    pub fn value_name(&self, var: Var, i: usize) -> String {
        let inst = &self.instances[var as usize];
        match &self.choices[inst.choice as usize].shape {
            ChoiceShape::Enum { values, .. } => values[i].clone(),
            ChoiceShape::Integer => inst.ints[i].to_string(),
        }
    }

    pub fn full_domains(&self) -> Vec<u32> {
        self.instances.iter().map(|i| i.full_mask()).collect()
    }

    /// Permutation applied when reading through a swapped reference.
    pub fn perm_of(&self, var: Var) -> Option<&[u8]> {
        match &self.choice_of(var).shape {
            ChoiceShape::Enum { perm: Some(p), .. } => Some(p),
            _ => None,
        }
    }

    /// Converts a mask between a reference's orientation and the canonical one
    /// (the permutation is an involution, so both directions agree).
    pub fn orient(&self, r: VarRef, mask: u32) -> u32 {
        match (r.swapped, self.perm_of(r.var)) {
            (true, Some(p)) => permute_mask(mask, p),
            _ => mask,
        }
    }

    /// Comparable value of canonical index `i` read through `r`.
    fn value_at(&self, r: VarRef, i: usize) -> i64 {
        let inst = &self.instances[r.var as usize];
        match &self.choices[inst.choice as usize].shape {
            ChoiceShape::Integer => inst.ints[i],
            ChoiceShape::Enum { perm, .. } => match (r.swapped, perm) {
                (true, Some(p)) => p[i] as i64,
                _ => i as i64,
            },
        }
    }

    fn resolve_var(&self, call: &ChoiceCall, env: &Env) -> Result<VarRef, SpaceError> {
        let args = call.args.iter().map(|a| lookup(env, a)).collect::<Result<Vec<_>, _>>()?;
        let choice = self.choice_id(&call.name).ok_or_else(|| SpaceError::UnknownChoice(call.name.clone()))?;
        self.var_ref_of(choice, &args).ok_or_else(|| {
            let names: Vec<String> = args.iter().map(|a| self.host.object_name(*a)).collect();
            SpaceError::MissingInstance(format!("{}({})", call.name, names.join(", ")))
        })
    }

    fn resolve_operand_const(&self, o: &Operand, env: &Env) -> Result<Option<i64>, SpaceError> {
        Ok(match o {
            Operand::Int(i) => Some(*i),
            Operand::Opaque(s) => Some(self.eval_int(s, env)?),
            Operand::Choice(_) => None,
        })
    }

    fn resolve_atom(&self, atom: &Atom, env: &Env) -> Result<Res, SpaceError> {
        match atom {
            Atom::Const(s) => Ok(Res::Const(self.eval_bool(s, env)?)),
            Atom::Is { call, negated, values } => {
                let r = self.resolve_var(call, env)?;
                let info = self.choice_of(r.var);
                let mut mask = 0u32;
                for v in values {
                    let i = info
                        .value_index(v)
                        .ok_or_else(|| SpaceError::Type(format!("`{}` has no value `{v}`", call.name)))?;
                    mask |= 1 << i;
                }
                let full = self.instances[r.var as usize].full_mask();
                if *negated {
                    mask = !mask & full;
                }
                Ok(Res::Lit(Lit::Unary { var: r.var, mask: self.orient(r, mask) }))
            }
            Atom::Bare(call) => {
                let r = self.resolve_var(call, env)?;
                let i = self
                    .choice_of(r.var)
                    .value_index("TRUE")
                    .ok_or_else(|| SpaceError::Type(format!("`{}` is not boolean", call.name)))?;
                Ok(Res::Lit(Lit::Unary { var: r.var, mask: self.orient(r, 1 << i) }))
            }
            Atom::Cmp { lhs, op, rhs } => {
                let lc = self.resolve_operand_const(lhs, env)?;
                let rc = self.resolve_operand_const(rhs, env)?;
                match (lhs, rhs, lc, rc) {
                    (_, _, Some(a), Some(b)) => Ok(Res::Const(op.eval(a, b))),
                    (Operand::Choice(c), _, None, Some(k)) => self.cmp_const(c, *op, k, env),
                    (_, Operand::Choice(c), Some(k), None) => self.cmp_const(c, op.flip(), k, env),
                    (Operand::Choice(a), Operand::Choice(b), None, None) => {
                        let x = self.resolve_var(a, env)?;
                        let y = self.resolve_var(b, env)?;
                        let wx = self.instances[x.var as usize].width as usize;
                        let wy = self.instances[y.var as usize].width as usize;
                        if x.var == y.var {
                            let mut mask = 0;
                            for i in 0..wx {
                                if op.eval(self.value_at(x, i), self.value_at(y, i)) {
                                    mask |= 1 << i;
                                }
                            }
                            return Ok(Res::Lit(Lit::Unary { var: x.var, mask }));
                        }
                        let table: Vec<u32> = (0..wx)
                            .map(|i| {
                                (0..wy)
                                    .filter(|&j| op.eval(self.value_at(x, i), self.value_at(y, j)))
                                    .fold(0, |m, j| m | (1 << j))
                            })
                            .collect();
                        Ok(Res::Lit(Lit::Binary { x: x.var, y: y.var, table: Arc::new(table) }))
                    }
                    _ => unreachable!(),
                }
            }
        }
    }

    fn cmp_const(&self, call: &ChoiceCall, op: CmpOp, k: i64, env: &Env) -> Result<Res, SpaceError> {
        if let Some(cid) = self.counter_id(&call.name) {
            let args = call.args.iter().map(|a| lookup(env, a)).collect::<Result<Vec<_>, _>>()?;
            let counter =
                *self.counter_index.get(&(cid, args)).ok_or_else(|| SpaceError::MissingInstance(call.name.clone()))?;
            return Ok(Res::Counter { counter, op, k });
        }
        let r = self.resolve_var(call, env)?;
        if !matches!(self.choice_of(r.var).shape, ChoiceShape::Integer) {
            return Err(SpaceError::Type(format!("`{}` is not an integer choice", call.name)));
        }
        let inst = &self.instances[r.var as usize];
        let mask = inst.ints.iter().enumerate().filter(|(_, &v)| op.eval(v, k)).fold(0, |m, (i, _)| m | (1 << i));
        Ok(Res::Lit(Lit::Unary { var: r.var, mask }))
    }

    fn build_counter(&mut self, c: &ChoiceDecl, body: &CounterBody) -> Result<(), SpaceError> {
        let counter = self.counter_by_name[&c.name];
        let mut bindings = Vec::new();
        self.bindings(&c.params, &mut Vec::new(), &mut |env| bindings.push(env.clone()))?;
        for env in bindings {
            let args: Vec<ObjectId> = env.iter().map(|(_, o)| *o).collect();
            let mut item_envs = Vec::new();
            self.bindings(&body.foralls, &mut env.clone(), &mut |e| item_envs.push(e.clone()))?;
            let mut items = Vec::new();
            for e in item_envs {
                let guard = match &body.guard {
                    None => None,
                    Some(g) => match self.resolve_atom(g, &e)? {
                        Res::Const(true) => None,
                        Res::Const(false) => continue,
                        Res::Lit(Lit::Unary { var, mask }) => Some((var, mask)),
                        _ => return Err(SpaceError::Type(format!("guard of `{}` must test one choice", c.name))),
                    },
                };
                let term = match &body.term {
                    Operand::Int(i) => Term::Const(*i),
                    Operand::Choice(call) => {
                        let r = self.resolve_var(call, &e)?;
                        if !matches!(self.choice_of(r.var).shape, ChoiceShape::Integer) {
                            return Err(SpaceError::Type(format!("term of `{}` must be an integer choice", c.name)));
                        }
                        Term::Value(r.var)
                    }
                    Operand::Opaque(s) => match self.eval_snippet(s, &e)? {
                        (false, HostValue::Int(i)) => Term::Const(i),
                        (false, HostValue::Term(t)) => t.map(&mut |k: &ChoiceKey| {
                            self.var_of_key(k)
                                .map(|r| r.var)
                                .ok_or_else(|| SpaceError::MissingInstance(format!("{}{:?}", k.name, k.args)))
                        })?,
                        _ => return Err(SpaceError::Type(format!("\"{s}\" is not an integer term"))),
                    },
                };
                items.push(CounterItem { guard, term });
            }
            self.counter_index.insert((counter, args.clone()), self.counters.len());
            self.counters.push(CounterInst { counter, args, op: body.op, items, upper: None, lower: None });
        }
        Ok(())
    }

    fn build_require(
        &mut self,
        item: usize,
        r: &ConstraintDecl,
        seen: &mut HashSet<Vec<Vec<Lit>>>,
    ) -> Result<(), SpaceError> {
        let mut bindings = Vec::new();
        self.bindings(&r.foralls, &mut Vec::new(), &mut |env| bindings.push(env.clone()))?;
        'binding: for env in bindings {
            // Constants first: a true constant disables the clause before any
            // choice instance needs to exist.
            for a in &r.body {
                if let Atom::Const(s) = a {
                    if self.eval_bool(s, &env)? {
                        continue 'binding;
                    }
                }
            }
            let mut terms = Vec::new();
            for a in &r.body {
                if matches!(a, Atom::Const(_)) {
                    continue;
                }
                match self.resolve_atom(a, &env)? {
                    Res::Counter { counter, op, k } => {
                        if r.body.len() != 1 {
                            return Err(SpaceError::Type("counter bounds must stand alone".into()));
                        }
                        self.add_counter_bound(counter, op, k)?;
                        continue 'binding;
                    }
                    Res::Const(true) => continue 'binding,
                    Res::Const(false) => {}
                    Res::Lit(l) => terms.push(vec![l]),
                }
            }
            self.push_clause(terms, Origin::Item(item), seen);
        }
        Ok(())
    }

    fn add_counter_bound(&mut self, counter: usize, op: CmpOp, k: i64) -> Result<(), SpaceError> {
        let c = &mut self.counters[counter];
        let (lo, hi) = match op {
            CmpOp::Lt => (None, Some(k - 1)),
            CmpOp::Le => (None, Some(k)),
            CmpOp::Gt => (Some(k + 1), None),
            CmpOp::Ge => (Some(k), None),
            CmpOp::Eq => (Some(k), Some(k)),
            CmpOp::Ne => return Err(SpaceError::Type("counters cannot be bounded with `!=`".into())),
        };
        if let Some(hi) = hi {
            c.upper = Some(c.upper.map_or(hi, |u| u.min(hi)));
        }
        if let Some(lo) = lo {
            c.lower = Some(c.lower.map_or(lo, |l| l.max(lo)));
        }
        Ok(())
    }

    /// Simplifies and records a clause given as a disjunction of conjunctions.
    fn push_clause(&mut self, terms: Vec<Vec<Lit>>, origin: Origin, seen: &mut HashSet<Vec<Vec<Lit>>>) {
        let mut unary: Vec<(Var, u32)> = Vec::new();
        let mut rest: Vec<Vec<Lit>> = Vec::new();
        for mut t in terms {
            if t.is_empty() {
                return; // an empty conjunction is true
            }
            if t.len() == 1 {
                match t.pop().unwrap() {
                    Lit::Unary { var, mask } => match unary.iter_mut().find(|(v, _)| *v == var) {
                        Some((_, m)) => *m |= mask,
                        None => unary.push((var, mask)),
                    },
                    Lit::Binary { x, y, table } => {
                        let full_y = self.instances[y as usize].full_mask();
                        if table.iter().all(|m| *m & full_y == full_y) {
                            return;
                        }
                        if table.iter().any(|m| *m != 0) {
                            rest.push(vec![Lit::Binary { x, y, table }]);
                        }
                    }
                }
                continue;
            }
            if t.iter().any(|l| matches!(l, Lit::Unary { mask: 0, .. })) {
                continue;
            }
            t.retain(|l| match l {
                Lit::Unary { var, mask } => *mask != self.instances[*var as usize].full_mask(),
                Lit::Binary { .. } => true,
            });
            if t.is_empty() {
                return;
            }
            t.sort();
            rest.push(t);
        }
        let mut out: Vec<Vec<Lit>> = Vec::new();
        for (var, mask) in unary {
            if mask == self.instances[var as usize].full_mask() {
                return;
            }
            if mask != 0 {
                out.push(vec![Lit::Unary { var, mask }]);
            }
        }
        out.extend(rest);
        out.sort();
        out.dedup();
        if out.is_empty() {
            if self.infeasible.is_none() {
                self.infeasible = Some(format!("constraint {origin:?} has no satisfiable atom"));
            }
            return;
        }
        if seen.insert(out.clone()) {
            self.clauses.push(Clause { terms: out, origin });
        }
    }

    fn negate(&self, l: &Lit) -> Lit {
        match l {
            Lit::Unary { var, mask } => {
                Lit::Unary { var: *var, mask: !mask & self.instances[*var as usize].full_mask() }
            }
            Lit::Binary { x, y, table } => {
                let full = self.instances[*y as usize].full_mask();
                Lit::Binary { x: *x, y: *y, table: Arc::new(table.iter().map(|m| !m & full).collect()) }
            }
        }
    }

    fn build_quotient(
        &mut self,
        item: usize,
        q: &QuotientDecl,
        seen: &mut HashSet<Vec<Vec<Lit>>>,
    ) -> Result<(), SpaceError> {
        let flag_choice = self.choice_by_name[&q.flag];
        let equiv = self.choice_id(&q.equiv_choice).ok_or_else(|| SpaceError::UnknownChoice(q.equiv_choice.clone()))?;
        let equiv_value = self.choices[equiv as usize]
            .value_index(&q.equiv_value)
            .ok_or_else(|| SpaceError::Type(format!("`{}` has no value `{}`", q.equiv_choice, q.equiv_value)))?;
        let mut bindings = Vec::new();
        self.bindings(&q.params, &mut Vec::new(), &mut |env| bindings.push(env.clone()))?;
        let member_param = [Param { var: q.var.clone(), set: q.set.clone() }];
        for env in bindings {
            let mut members = Vec::new();
            self.bindings(&member_param, &mut env.clone(), &mut |e| members.push(e.last().unwrap().1))?;
            // Membership of each member: Ok(Some(lit)), Ok(None) for constant false, or a constant true.
            let mut membership = Vec::new();
            for &m in &members {
                let mut e = env.clone();
                e.push((q.var.clone(), m));
                membership.push(match self.resolve_atom(&q.membership, &e)? {
                    Res::Const(b) => Err(b),
                    Res::Lit(l) => Ok(l),
                    Res::Counter { .. } => return Err(SpaceError::Type("counter in quotient membership".into())),
                });
            }
            let objs: Vec<ObjectId> = env.iter().map(|(_, o)| *o).collect();
            for (i, &x) in members.iter().enumerate() {
                let mut args = objs.clone();
                args.push(x);
                let flag = self.var_ref_of(flag_choice, &args).expect("flag instance").var;
                let is_false = Lit::Unary { var: flag, mask: 1 };
                let is_true = Lit::Unary { var: flag, mask: 2 };
                let lit_or_const = |r: &Result<Lit, bool>| -> Vec<Vec<Lit>> {
                    match r {
                        Ok(l) => vec![vec![l.clone()]],
                        Err(true) => vec![vec![]],
                        Err(false) => vec![],
                    }
                };
                // flag => member
                let mut c1 = vec![vec![is_false.clone()]];
                c1.extend(lit_or_const(&membership[i]));
                self.push_clause(c1, Origin::Item(item), seen);
                let mut c3 = vec![vec![is_true.clone()]];
                match &membership[i] {
                    Ok(l) => c3.push(vec![self.negate(l)]),
                    Err(true) => {}
                    Err(false) => c3.push(vec![]),
                }
                for (j, &y) in members[..i].iter().enumerate() {
                    let e = self
                        .var_ref_of(equiv, &[y, x])
                        .ok_or_else(|| SpaceError::MissingInstance(format!("{}({}, {})", q.equiv_choice, y, x)))?;
                    let e_lit = Lit::Unary { var: e.var, mask: self.orient(e, 1 << equiv_value) };
                    // flag => not (member(y) and equivalent(x, y))
                    let mut c2 = vec![vec![is_false.clone()], vec![self.negate(&e_lit)]];
                    match &membership[j] {
                        Ok(l) => c2.push(vec![self.negate(l)]),
                        Err(true) => {}
                        Err(false) => continue,
                    }
                    self.push_clause(c2, Origin::Item(item), seen);
                    // member(x) and not flag => some lower equivalent member
                    match &membership[j] {
                        Ok(l) => c3.push(vec![l.clone(), e_lit]),
                        Err(true) => c3.push(vec![e_lit]),
                        Err(false) => {}
                    }
                }
                self.push_clause(c3, Origin::Item(item), seen);
            }
        }
        Ok(())
    }

    fn build_trigger(&mut self, ordinal: u32, t: &TriggerDecl) -> Result<(), SpaceError> {
        let callback = Snippet::parse(&t.callback).map_err(SpaceError::Snippet)?;
        let mut bindings = Vec::new();
        self.bindings(&t.foralls, &mut Vec::new(), &mut |env| bindings.push(env.clone()))?;
        'binding: for env in bindings {
            let mut condition = Vec::new();
            for clause in &t.condition {
                let mut lits = Vec::new();
                let mut holds = false;
                for a in clause {
                    if let Atom::Const(s) = a {
                        if self.eval_bool(s, &env)? {
                            holds = true;
                        }
                    }
                }
                if holds {
                    continue;
                }
                for a in clause {
                    if matches!(a, Atom::Const(_)) {
                        continue;
                    }
                    match self.resolve_atom(a, &env)? {
                        Res::Const(true) => {
                            holds = true;
                            break;
                        }
                        Res::Const(false) => {}
                        Res::Lit(l) => lits.push(l),
                        Res::Counter { .. } => {
                            return Err(SpaceError::Type("counters cannot condition triggers".into()))
                        }
                    }
                }
                if holds {
                    continue;
                }
                if lits.is_empty() {
                    continue 'binding; // never fires
                }
                lits.sort();
                condition.push(lits);
            }
            let objs = callback.vars.iter().map(|v| lookup(&env, v)).collect::<Result<Vec<_>, _>>()?;
            self.triggers.push(TriggerInst {
                trigger: ordinal,
                args: env.iter().map(|(_, o)| *o).collect(),
                condition,
                callback: callback.method.clone(),
                callback_objects: objs,
            });
        }
        Ok(())
    }

    fn build_watches(&mut self) {
        let n = self.instances.len();
        self.watch_clauses = vec![Vec::new(); n];
        self.watch_counters = vec![Vec::new(); n];
        for (ci, c) in self.clauses.iter().enumerate() {
            let mut vars: Vec<Var> = c.terms.iter().flatten().flat_map(|l| l.vars()).collect();
            vars.sort_unstable();
            vars.dedup();
            for &v in &vars {
                self.watch_clauses[v as usize].push(ci as u32);
            }
            self.clause_vars.push(vars);
        }
        for (ci, c) in self.counters.iter().enumerate() {
            let mut vars: Vec<Var> = Vec::new();
            for item in &c.items {
                vars.extend(item.guard.map(|g| g.0));
                vars.extend(item.term.deps().into_iter().copied());
            }
            vars.sort_unstable();
            vars.dedup();
            for v in vars {
                self.watch_counters[v as usize].push(ci as u32);
            }
        }
    }
}
