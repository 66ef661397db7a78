//! Exhaustive reference semantics, independent of the propagation engine.
//!
//! The oracle enumerates full assignments by plain backtracking. Each
//! constraint, counter bound and quotient flag is evaluated directly from the
//! definition on assigned values, as soon as every instance it reads is
//! assigned. No domain reasoning is involved, so it can serve as ground truth
//! for propagation on small spaces.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::candidate::Candidate;
use crate::host::{ChoiceKey, Host, HostValue, ObjectId, Snippet};
use crate::ir::*;
use crate::space::{ChoiceShape, FiredKey, Space, SpaceError, Var, VarRef};
use crate::term::Term;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("more than {0} full assignments")]
    TooMany(usize),
}

/// A fully specified implementation: one value per choice instance of the
/// final (lowered) space, plus the triggers that fired.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FullAssignment {
    pub fired: Vec<FiredKey>,
    pub values: BTreeMap<ChoiceKey, String>,
}

impl FullAssignment {
    /// Reads a fully specified candidate.
    pub fn from_candidate(c: &Candidate) -> FullAssignment {
        assert!(c.is_fully_specified(), "candidate is not fully specified");
        let space = c.space();
        let values = (0..space.instances.len() as Var)
            .map(|v| (space.key_of(v), space.value_name(v, c.domain(v).trailing_zeros() as usize)))
            .collect();
        FullAssignment { fired: c.fired().to_vec(), values }
    }
}

type Env = Vec<(String, ObjectId)>;

#[derive(Clone, Debug)]
enum OAtom {
    Const(bool),
    Is { r: VarRef, names: Vec<String>, negated: bool },
    CmpVV { x: VarRef, op: CmpOp, y: VarRef },
    CmpVK { x: VarRef, op: CmpOp, k: i64 },
}

#[derive(Clone, Debug)]
struct OCounter {
    op: CounterOp,
    items: Vec<(Option<OAtom>, Term<VarRef>)>,
}

#[derive(Clone, Debug)]
enum Check {
    Clause(Vec<OAtom>),
    Bound { counter: Arc<OCounter>, op: CmpOp, k: i64 },
    Flag { flag: Var, member: OAtom, lower: Vec<(OAtom, OAtom)> },
}

struct Trig {
    key: FiredKey,
    condition: Vec<Vec<OAtom>>,
    callback: String,
    objects: Vec<ObjectId>,
}

/// Direct evaluation of a definition over a space's instances.
struct Model<'a> {
    space: &'a Space,
    checks: Vec<(Check, Vec<Var>)>,
    triggers: Vec<Trig>,
}

fn lookup(env: &Env, v: &str) -> Result<ObjectId, SpaceError> {
    env.iter()
        .rev()
        .find(|(n, _)| n == v)
        .map(|(_, o)| *o)
        .ok_or_else(|| SpaceError::Snippet(format!("unbound `${v}`")))
}

impl<'a> Model<'a> {
    fn new(space: &'a Space) -> Result<Model<'a>, SpaceError> {
        let mut m = Model { space, checks: Vec::new(), triggers: Vec::new() };
        let def = space.def.clone();
        let mut counters: HashMap<(String, Vec<ObjectId>), Arc<OCounter>> = HashMap::new();
        for c in def.choices() {
            if let ChoiceKind::Counter(body) = &c.kind {
                for env in m.bindings(&c.params, vec![])? {
                    let args = env.iter().map(|(_, o)| *o).collect();
                    let mut items = Vec::new();
                    for e in m.bindings(&body.foralls, env.clone())? {
                        let guard = body.guard.as_ref().map(|g| m.atom(g, &e)).transpose()?;
                        let term = match &body.term {
                            Operand::Int(i) => Term::Const(*i),
                            Operand::Choice(call) => Term::Value(m.var(call, &e)?),
                            Operand::Opaque(s) => match m.snippet(s, &e)? {
                                (_, HostValue::Int(i)) => Term::Const(i),
                                (_, HostValue::Term(t)) => t.map(&mut |k: &ChoiceKey| {
                                    space.var_of_key(k).ok_or_else(|| SpaceError::MissingInstance(k.name.clone()))
                                })?,
                                _ => return Err(SpaceError::Type(format!("bad term \"{s}\""))),
                            },
                        };
                        items.push((guard, term));
                    }
                    counters.insert((c.name.clone(), args), Arc::new(OCounter { op: body.op, items }));
                }
            }
        }
        let mut trigger_ordinal = 0u32;
        for item in &def.items {
            match item {
                Item::Require(r) => {
                    for env in m.bindings(&r.foralls, vec![])? {
                        if let [Atom::Cmp { lhs: Operand::Choice(call), op, rhs }] = r.body.as_slice() {
                            if space.counter_id(&call.name).is_some() {
                                let args = call.args.iter().map(|a| lookup(&env, a)).collect::<Result<Vec<_>, _>>()?;
                                let counter = counters[&(call.name.clone(), args)].clone();
                                let k = m.constant(rhs, &env)?;
                                m.push(Check::Bound { counter, op: *op, k });
                                continue;
                            }
                        }
                        if let [Atom::Cmp { lhs, op, rhs: Operand::Choice(call) }] = r.body.as_slice() {
                            if space.counter_id(&call.name).is_some() {
                                let args = call.args.iter().map(|a| lookup(&env, a)).collect::<Result<Vec<_>, _>>()?;
                                let counter = counters[&(call.name.clone(), args)].clone();
                                let k = m.constant(lhs, &env)?;
                                m.push(Check::Bound { counter, op: op.flip(), k });
                                continue;
                            }
                        }
                        // Constants are evaluated first so disabled clauses
                        // never resolve their choice atoms.
                        let mut atoms = Vec::new();
                        let mut holds = false;
                        for a in &r.body {
                            if let Atom::Const(_) = a {
                                if let OAtom::Const(true) = m.atom(a, &env)? {
                                    holds = true;
                                }
                            }
                        }
                        if holds {
                            continue;
                        }
                        for a in &r.body {
                            if !matches!(a, Atom::Const(_)) {
                                atoms.push(m.atom(a, &env)?);
                            }
                        }
                        m.push(Check::Clause(atoms));
                    }
                }
                Item::Quotient(q) => {
                    let equiv = space
                        .choice_id(&q.equiv_choice)
                        .ok_or_else(|| SpaceError::UnknownChoice(q.equiv_choice.clone()))?;
                    for env in m.bindings(&q.params, vec![])? {
                        let member_param = [Param { var: q.var.clone(), set: q.set.clone() }];
                        let members: Vec<ObjectId> =
                            m.bindings(&member_param, env.clone())?.iter().map(|e| e.last().unwrap().1).collect();
                        let mut memberships = Vec::new();
                        for &x in &members {
                            let mut e = env.clone();
                            e.push((q.var.clone(), x));
                            memberships.push(m.atom(&q.membership, &e)?);
                        }
                        let objs: Vec<ObjectId> = env.iter().map(|(_, o)| *o).collect();
                        for (i, &x) in members.iter().enumerate() {
                            let mut args = objs.clone();
                            args.push(x);
                            let flag = space.var_ref(&q.flag, &args).expect("flag instance").var;
                            let mut lower = Vec::new();
                            for (j, &y) in members[..i].iter().enumerate() {
                                let r = space
                                    .var_ref_of(equiv, &[y, x])
                                    .ok_or_else(|| SpaceError::MissingInstance(q.equiv_choice.clone()))?;
                                let e = OAtom::Is { r, names: vec![q.equiv_value.clone()], negated: false };
                                lower.push((memberships[j].clone(), e));
                            }
                            m.push(Check::Flag { flag, member: memberships[i].clone(), lower });
                        }
                    }
                }
                Item::Trigger(t) => {
                    let cb = Snippet::parse(&t.callback).map_err(SpaceError::Snippet)?;
                    'b: for env in m.bindings(&t.foralls, vec![])? {
                        let mut condition = Vec::new();
                        for clause in &t.condition {
                            let mut atoms = Vec::new();
                            for a in clause.iter().filter(|a| matches!(a, Atom::Const(_))) {
                                atoms.push(m.atom(a, &env)?);
                            }
                            if atoms.iter().any(|a| matches!(a, OAtom::Const(true))) {
                                continue;
                            }
                            atoms.clear();
                            for a in clause.iter().filter(|a| !matches!(a, Atom::Const(_))) {
                                atoms.push(m.atom(a, &env)?);
                            }
                            if atoms.is_empty() {
                                continue 'b;
                            }
                            condition.push(atoms);
                        }
                        let objects = cb.vars.iter().map(|v| lookup(&env, v)).collect::<Result<Vec<_>, _>>()?;
                        m.triggers.push(Trig {
                            key: (trigger_ordinal, env.iter().map(|(_, o)| *o).collect()),
                            condition,
                            callback: cb.method.clone(),
                            objects,
                        });
                    }
                    trigger_ordinal += 1;
                }
                _ => {}
            }
        }
        Ok(m)
    }

    fn push(&mut self, check: Check) {
        let mut vars = Vec::new();
        let atom_vars = |a: &OAtom, vars: &mut Vec<Var>| match a {
            OAtom::Const(_) => {}
            OAtom::Is { r, .. } | OAtom::CmpVK { x: r, .. } => vars.push(r.var),
            OAtom::CmpVV { x, y, .. } => {
                vars.push(x.var);
                vars.push(y.var);
            }
        };
        match &check {
            Check::Clause(atoms) => atoms.iter().for_each(|a| atom_vars(a, &mut vars)),
            Check::Bound { counter, .. } => {
                for (g, t) in &counter.items {
                    if let Some(g) = g {
                        atom_vars(g, &mut vars);
                    }
                    vars.extend(t.deps().iter().map(|r| r.var));
                }
            }
            Check::Flag { flag, member, lower } => {
                vars.push(*flag);
                atom_vars(member, &mut vars);
                for (a, b) in lower {
                    atom_vars(a, &mut vars);
                    atom_vars(b, &mut vars);
                }
            }
        }
        vars.sort_unstable();
        vars.dedup();
        self.checks.push((check, vars));
    }

    fn bindings(&self, params: &[Param], env: Env) -> Result<Vec<Env>, SpaceError> {
        let mut out = vec![env];
        for p in params {
            let mut next = Vec::new();
            for env in out {
                let args = p.set.args.iter().map(|a| lookup(&env, a)).collect::<Result<Vec<_>, _>>()?;
                for o in self.space.host.members(&p.set.name, &args)? {
                    if env.iter().all(|(_, e)| *e != o) {
                        let mut e = env.clone();
                        e.push((p.var.clone(), o));
                        next.push(e);
                    }
                }
            }
            out = next;
        }
        Ok(out)
    }

    fn snippet(&self, s: &str, env: &Env) -> Result<(bool, HostValue), SpaceError> {
        let sn = Snippet::parse(s).map_err(SpaceError::Snippet)?;
        let objs = sn.vars.iter().map(|v| lookup(env, v)).collect::<Result<Vec<_>, _>>()?;
        Ok((sn.negated, self.space.host.eval(&sn.method, &objs)?))
    }

    fn constant(&self, o: &Operand, env: &Env) -> Result<i64, SpaceError> {
        match o {
            Operand::Int(i) => Ok(*i),
            Operand::Opaque(s) => match self.snippet(s, env)? {
                (false, HostValue::Int(i)) => Ok(i),
                _ => Err(SpaceError::Type(format!("\"{s}\" is not an integer"))),
            },
            Operand::Choice(_) => Err(SpaceError::Type("expected a constant".into())),
        }
    }

    fn var(&self, call: &ChoiceCall, env: &Env) -> Result<VarRef, SpaceError> {
        let args = call.args.iter().map(|a| lookup(env, a)).collect::<Result<Vec<_>, _>>()?;
        self.space.var_ref(&call.name, &args).ok_or_else(|| SpaceError::MissingInstance(call.name.clone()))
    }

    fn atom(&self, a: &Atom, env: &Env) -> Result<OAtom, SpaceError> {
        Ok(match a {
            Atom::Const(s) => match self.snippet(s, env)? {
                (neg, HostValue::Bool(b)) => OAtom::Const(b != neg),
                _ => return Err(SpaceError::Type(format!("\"{s}\" is not a boolean"))),
            },
            Atom::Is { call, negated, values } => {
                OAtom::Is { r: self.var(call, env)?, names: values.clone(), negated: *negated }
            }
            Atom::Bare(call) => OAtom::Is { r: self.var(call, env)?, names: vec!["TRUE".into()], negated: false },
            Atom::Cmp { lhs, op, rhs } => match (lhs, rhs) {
                (Operand::Choice(a), Operand::Choice(b)) => {
                    OAtom::CmpVV { x: self.var(a, env)?, op: *op, y: self.var(b, env)? }
                }
                (Operand::Choice(a), k) => OAtom::CmpVK { x: self.var(a, env)?, op: *op, k: self.constant(k, env)? },
                (k, Operand::Choice(b)) => {
                    OAtom::CmpVK { x: self.var(b, env)?, op: op.flip(), k: self.constant(k, env)? }
                }
                (a, b) => OAtom::Const(op.eval(self.constant(a, env)?, self.constant(b, env)?)),
            },
        })
    }

    /// Value name read through a reference, and its comparable key.
    fn read(&self, r: VarRef, vals: &[u32]) -> (String, i64) {
        let v = vals[r.var as usize] as usize;
        let inst = &self.space.instances[r.var as usize];
        match &self.space.choices[inst.choice as usize].shape {
            ChoiceShape::Integer => (inst.ints[v].to_string(), inst.ints[v]),
            ChoiceShape::Enum { values, perm } => {
                let actual = match (r.swapped, perm) {
                    (true, Some(p)) => p[v] as usize,
                    _ => v,
                };
                (values[actual].clone(), actual as i64)
            }
        }
    }

    fn eval_atom(&self, a: &OAtom, vals: &[u32]) -> bool {
        match a {
            OAtom::Const(b) => *b,
            OAtom::Is { r, names, negated } => names.contains(&self.read(*r, vals).0) != *negated,
            OAtom::CmpVV { x, op, y } => op.eval(self.read(*x, vals).1, self.read(*y, vals).1),
            OAtom::CmpVK { x, op, k } => op.eval(self.read(*x, vals).1, *k),
        }
    }

    fn term_value(&self, t: &Term<VarRef>, vals: &[u32]) -> i64 {
        match t {
            Term::Const(c) => *c,
            Term::Value(r) => self.read(*r, vals).1,
            Term::Mul(ts) => ts.iter().map(|t| self.term_value(t, vals)).product(),
            Term::Div(n, ts) => n / ts.iter().map(|t| self.term_value(t, vals)).product::<i64>().max(1),
            Term::Select { key, values, then, otherwise } => {
                if values.contains(&self.read(*key, vals).0) {
                    self.term_value(then, vals)
                } else {
                    self.term_value(otherwise, vals)
                }
            }
        }
    }

    fn eval_check(&self, c: &Check, vals: &[u32]) -> bool {
        match c {
            Check::Clause(atoms) => atoms.iter().any(|a| self.eval_atom(a, vals)),
            Check::Bound { counter, op, k } => {
                let mut acc = match counter.op {
                    CounterOp::Sum => 0i64,
                    CounterOp::Product => 1,
                };
                for (g, t) in &counter.items {
                    if g.as_ref().is_none_or(|g| self.eval_atom(g, vals)) {
                        let v = self.term_value(t, vals);
                        acc = match counter.op {
                            CounterOp::Sum => acc + v,
                            CounterOp::Product => acc * v,
                        };
                    }
                }
                op.eval(acc, *k)
            }
            Check::Flag { flag, member, lower } => {
                let representative = self.eval_atom(member, vals)
                    && !lower.iter().any(|(m, e)| self.eval_atom(m, vals) && self.eval_atom(e, vals));
                let flag_true = self.read(VarRef { var: *flag, swapped: false }, vals).0 == "TRUE";
                flag_true == representative
            }
        }
    }
}

/// Whether a full assignment of `space` satisfies every constraint, counter
/// bound and quotient definition, evaluated directly.
pub fn check_assignment(space: &Space, vals: &[u32]) -> Result<bool, SpaceError> {
    let model = Model::new(space)?;
    Ok(model.checks.iter().all(|(c, _)| model.eval_check(c, vals)))
}

/// Checks a fully specified candidate against the direct semantics,
/// including that no enabled trigger was left unfired.
pub fn check_candidate(c: &Candidate) -> Result<bool, SpaceError> {
    let space = c.space();
    let vals: Vec<u32> = c.domains().iter().map(|d| d.trailing_zeros()).collect();
    let model = Model::new(space)?;
    let valid = model.checks.iter().all(|(ch, _)| model.eval_check(ch, &vals));
    let pending = model.triggers.iter().any(|t| {
        !c.fired().contains(&t.key) && t.condition.iter().all(|cl| cl.iter().any(|a| model.eval_atom(a, &vals)))
    });
    Ok(valid && !pending)
}

/// Enumerates every valid full assignment, following triggers. Fails if
/// more than `limit` exist.
pub fn enumerate(
    def: Arc<SpaceDefinition>,
    host: Arc<dyn Host>,
    limit: usize,
) -> Result<Vec<FullAssignment>, OracleError> {
    let space = Space::build(def, host)?;
    let mut out = Vec::new();
    let mut memo: HashMap<[u8; 32], Arc<Space>> = HashMap::new();
    explore(&space, &HashMap::new(), &[], &mut out, limit, &mut memo)?;
    out.sort();
    Ok(out)
}

fn explore(
    space: &Space,
    fixed: &HashMap<(u32, Vec<ObjectId>), u32>,
    fired: &[FiredKey],
    out: &mut Vec<FullAssignment>,
    limit: usize,
    memo: &mut HashMap<[u8; 32], Arc<Space>>,
) -> Result<(), OracleError> {
    let model = Model::new(space)?;
    let n = space.instances.len();
    let mut vals = vec![u32::MAX; n];
    let mut free = Vec::new();
    for (v, inst) in space.instances.iter().enumerate() {
        match fixed.get(&(inst.choice, inst.args.clone())) {
            Some(&x) => vals[v] = x,
            None => free.push(v),
        }
    }
    // Attach each check to the last free variable it reads.
    let mut position = vec![usize::MAX; n];
    for (i, &v) in free.iter().enumerate() {
        position[v] = i;
    }
    let mut attached: Vec<Vec<usize>> = vec![Vec::new(); free.len()];
    for (ci, (check, vars)) in model.checks.iter().enumerate() {
        match vars.iter().filter(|v| position[**v as usize] != usize::MAX).map(|v| position[*v as usize]).max() {
            Some(p) => attached[p].push(ci),
            None => {
                if !model.eval_check(check, &vals) {
                    return Ok(());
                }
            }
        }
    }
    let mut leaves = Vec::new();
    backtrack(&model, &free, &attached, 0, &mut vals, &mut leaves, limit)?;
    for vals in leaves {
        let pending: Vec<&Trig> = model
            .triggers
            .iter()
            .filter(|t| {
                !fired.contains(&t.key) && t.condition.iter().all(|cl| cl.iter().any(|a| model.eval_atom(a, &vals)))
            })
            .collect();
        if pending.is_empty() {
            if out.len() >= limit {
                return Err(OracleError::TooMany(limit));
            }
            let values =
                (0..n as Var).map(|v| (space.key_of(v), space.value_name(v, vals[v as usize] as usize))).collect();
            let mut fired = fired.to_vec();
            fired.sort();
            out.push(FullAssignment { fired, values });
            continue;
        }
        let mut host = space.host.clone();
        let mut next_fired = fired.to_vec();
        for t in &pending {
            host = host.lower(&t.callback, &t.objects).map_err(SpaceError::from)?;
            next_fired.push(t.key.clone());
        }
        let digest = host.digest();
        let next = match memo.get(&digest) {
            Some(s) => s.clone(),
            None => {
                let s = Arc::new(Space::build(space.def.clone(), host)?);
                memo.insert(digest, s.clone());
                s
            }
        };
        let fixed: HashMap<(u32, Vec<ObjectId>), u32> =
            space.instances.iter().enumerate().map(|(v, inst)| ((inst.choice, inst.args.clone()), vals[v])).collect();
        explore(&next, &fixed, &next_fired, out, limit, memo)?;
    }
    Ok(())
}

fn backtrack(
    model: &Model,
    free: &[usize],
    attached: &[Vec<usize>],
    depth: usize,
    vals: &mut Vec<u32>,
    leaves: &mut Vec<Vec<u32>>,
    limit: usize,
) -> Result<(), OracleError> {
    if depth == free.len() {
        if leaves.len() >= limit {
            return Err(OracleError::TooMany(limit));
        }
        leaves.push(vals.clone());
        return Ok(());
    }
    let v = free[depth];
    for x in 0..model.space.instances[v].width {
        vals[v] = x;
        if attached[depth].iter().all(|&c| model.eval_check(&model.checks[c].0, vals)) {
            backtrack(model, free, attached, depth + 1, vals, leaves, limit)?;
        }
    }
    vals[v] = u32::MAX;
    Ok(())
}

/// Enumerates full assignments by depth-first descent with propagation:
/// branch on each value of the first open instance, drop dead ends.
pub fn enumerate_by_propagation(root: &Candidate, limit: usize) -> Result<Vec<FullAssignment>, OracleError> {
    let mut out = Vec::new();
    let mut stack = vec![root.clone()];
    while let Some(c) = stack.pop() {
        let Some(&v) = c.open_choices().first() else {
            if out.len() >= limit {
                return Err(OracleError::TooMany(limit));
            }
            out.push(FullAssignment::from_candidate(&c));
            continue;
        };
        let dom = c.domain(v);
        for i in (0..32).rev().filter(|i| dom & (1 << i) != 0) {
            if let Ok(child) = c.apply_decision(VarRef { var: v, swapped: false }, 1 << i) {
                stack.push(child);
            }
        }
    }
    out.sort();
    Ok(out)
}
