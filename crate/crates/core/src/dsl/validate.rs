use std::collections::{HashMap, HashSet};

use super::printer;
use super::{DiagCode, Diagnostic};
use crate::ir::*;

/// Kind of a declared choice, as seen by atoms.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Kind {
    Enum,
    Integer,
    Counter,
}

struct ChoiceSig<'a> {
    params: Vec<&'a str>,
    kind: Kind,
    values: Vec<String>,
}

struct Ctx<'a> {
    sets: HashMap<&'a str, &'a SetDecl>,
    choices: HashMap<&'a str, ChoiceSig<'a>>,
    diags: Vec<Diagnostic>,
}

/// Checks name resolution, arities, set typing, enum values, antisymmetry
/// maps, quotient and counter shapes. Returns one diagnostic per violation.
pub fn validate(def: &SpaceDefinition) -> Vec<Diagnostic> {
    let mut ctx = Ctx { sets: HashMap::new(), choices: HashMap::new(), diags: Vec::new() };
    for s in def.sets() {
        if ctx.sets.insert(&s.name, s).is_some() {
            ctx.err(DiagCode::DuplicateDecl, format!("duplicate declaration of set `{}`", s.name));
        }
    }
    for c in def.choices() {
        let (kind, values) = match &c.kind {
            ChoiceKind::Enum { values, .. } => (Kind::Enum, values.clone()),
            ChoiceKind::Integer { .. } => (Kind::Integer, vec![]),
            ChoiceKind::Counter(_) => (Kind::Counter, vec![]),
        };
        let sig = ChoiceSig { params: c.params.iter().map(|p| p.set.name.as_str()).collect(), kind, values };
        if ctx.choices.insert(&c.name, sig).is_some() {
            ctx.err(DiagCode::DuplicateDecl, format!("duplicate declaration of choice `{}`", c.name));
        }
    }
    for q in def.quotients() {
        let mut params: Vec<&str> = q.params.iter().map(|p| p.set.name.as_str()).collect();
        params.push(&q.set.name);
        let sig = ChoiceSig { params, kind: Kind::Enum, values: vec!["FALSE".into(), "TRUE".into()] };
        if ctx.choices.insert(&q.flag, sig).is_some() {
            ctx.err(DiagCode::DuplicateDecl, format!("duplicate declaration of choice `{}`", q.flag));
        }
    }
    ctx.check_set_cycles(def);
    for item in &def.items {
        match item {
            Item::Set(s) => ctx.check_set(s),
            Item::Choice(c) => ctx.check_choice(c),
            Item::Require(r) => {
                let scope = ctx.bind(&[], &r.foralls, "require");
                let counters = r.body.iter().filter(|a| ctx.mentions_counter(a)).count();
                if counters > 0 && r.body.len() > 1 {
                    ctx.err(
                        DiagCode::BadCounter,
                        format!(
                            "counter bound `{}` must be the only atom of its constraint",
                            printer::disjunction(&r.body)
                        ),
                    );
                }
                for a in &r.body {
                    ctx.check_atom(a, &scope, true);
                }
            }
            Item::Quotient(q) => ctx.check_quotient(q),
            Item::Trigger(t) => {
                let scope = ctx.bind(&[], &t.foralls, "trigger");
                if t.callback.trim().is_empty() {
                    ctx.err(DiagCode::Syntax, "trigger callback name is empty");
                }
                for a in t.condition.iter().flatten() {
                    ctx.check_atom(a, &scope, false);
                }
            }
        }
    }
    ctx.diags
}

impl<'a> Ctx<'a> {
    fn err(&mut self, code: DiagCode, msg: impl Into<String>) {
        self.diags.push(Diagnostic::unlocated(code, msg));
    }

    fn check_set_cycles(&mut self, def: &'a SpaceDefinition) {
        let mut reported = HashSet::new();
        for s in def.sets() {
            let mut seen = vec![s.name.as_str()];
            let mut cur = s;
            while let Some(sup) = cur.superset.as_deref() {
                if sup == s.name {
                    let mut cycle = seen.clone();
                    cycle.sort_unstable();
                    if reported.insert(cycle) {
                        self.err(DiagCode::SetCycle, format!("subsetof cycle through `{}`", s.name));
                    }
                    break;
                }
                if seen.contains(&sup) {
                    break;
                }
                seen.push(sup);
                match self.sets.get(sup) {
                    Some(next) => cur = next,
                    None => break,
                }
            }
        }
    }

    /// Whether `sub` reaches `sup` through `subsetof` edges.
    fn is_subset(&self, sub: &str, sup: &str) -> bool {
        let mut cur = sub;
        for _ in 0..=self.sets.len() {
            if cur == sup {
                return true;
            }
            match self.sets.get(cur).and_then(|s| s.superset.as_deref()) {
                Some(next) => cur = next,
                None => return false,
            }
        }
        false
    }

    fn related(&self, a: &str, b: &str) -> bool {
        self.is_subset(a, b) || self.is_subset(b, a)
    }

    fn check_set_ref(&mut self, r: &SetRef, scope: &HashMap<String, String>, ctx: &str) {
        let Some(decl) = self.sets.get(r.name.as_str()).copied() else {
            self.err(DiagCode::UnknownSet, format!("{ctx}: unknown set `{}`", r.name));
            return;
        };
        if decl.params.len() != r.args.len() {
            self.err(
                DiagCode::ArityMismatch,
                format!("{ctx}: set `{}` takes {} argument(s), got {}", r.name, decl.params.len(), r.args.len()),
            );
            return;
        }
        for (arg, p) in r.args.iter().zip(&decl.params) {
            match scope.get(arg) {
                None => self.err(DiagCode::UnboundVariable, format!("{ctx}: unbound variable `${arg}`")),
                Some(set) => {
                    if self.sets.contains_key(set.as_str()) && !self.related(set, &p.set.name) {
                        self.err(
                            DiagCode::TypeMismatch,
                            format!("{ctx}: `${arg}` ranges over `{set}`, not `{}`", p.set.name),
                        );
                    }
                }
            }
        }
    }

    /// Binds `params` then `foralls` in order, reporting unknown sets and
    /// shadowing. Returns the variable → set-name scope.
    fn bind(&mut self, params: &[Param], foralls: &[Param], ctx: &str) -> HashMap<String, String> {
        let mut scope = HashMap::new();
        for p in params.iter().chain(foralls) {
            self.check_set_ref(&p.set, &scope, ctx);
            if scope.insert(p.var.clone(), p.set.name.clone()).is_some() {
                self.err(DiagCode::ShadowedVariable, format!("{ctx}: variable `${}` bound twice", p.var));
            }
        }
        scope
    }

    fn check_set(&mut self, s: &SetDecl) {
        let ctx = format!("set `{}`", s.name);
        self.bind(&s.params, &[], &ctx);
        if let Some(sup) = &s.superset {
            if !self.sets.contains_key(sup.as_str()) {
                self.err(DiagCode::UnknownSet, format!("{ctx}: unknown superset `{sup}`"));
            }
        }
    }

    fn check_choice(&mut self, c: &ChoiceDecl) {
        let ctx = format!("choice `{}`", c.name);
        let scope = self.bind(&c.params, &[], &ctx);
        match &c.kind {
            ChoiceKind::Enum { values, antisymmetric } => {
                let mut seen = HashSet::new();
                for v in values {
                    if !seen.insert(v) {
                        self.err(DiagCode::DuplicateDecl, format!("{ctx}: duplicate value `{v}`"));
                    }
                }
                if !antisymmetric.is_empty() {
                    if c.params.len() != 2 || c.params[0].set != c.params[1].set {
                        self.err(
                            DiagCode::BadAntisymmetry,
                            format!("{ctx}: antisymmetric choices need two parameters over the same set"),
                        );
                    }
                    let mut mapped = HashSet::new();
                    for (a, b) in antisymmetric {
                        for v in [a, b] {
                            if !values.contains(v) && !c.elided {
                                self.err(DiagCode::UnknownValue, format!("{ctx}: unknown value `{v}`"));
                            }
                        }
                        if a == b || !mapped.insert(a.clone()) || !mapped.insert(b.clone()) {
                            self.err(DiagCode::BadAntisymmetry, format!("{ctx}: `{a} -> {b}` breaks the involution"));
                        }
                    }
                }
            }
            ChoiceKind::Integer { universe } => {
                if let Some(u) = universe {
                    self.check_snippet(u, &scope, &ctx);
                }
            }
            ChoiceKind::Counter(body) => {
                let mut scope = scope;
                for p in &body.foralls {
                    self.check_set_ref(&p.set, &scope, &ctx);
                    if scope.insert(p.var.clone(), p.set.name.clone()).is_some() {
                        self.err(DiagCode::ShadowedVariable, format!("{ctx}: variable `${}` bound twice", p.var));
                    }
                }
                match &body.term {
                    Operand::Choice(call) => {
                        if let Some(Kind::Enum | Kind::Counter) = self.check_call(call, &scope, &ctx) {
                            self.err(DiagCode::TypeMismatch, format!("{ctx}: counter terms must be integer choices"));
                        }
                    }
                    Operand::Opaque(s) => self.check_snippet(s, &scope, &ctx),
                    Operand::Int(_) => {}
                }
                if let Some(g) = &body.guard {
                    self.check_atom(g, &scope, false);
                }
            }
        }
    }

    fn check_quotient(&mut self, q: &QuotientDecl) {
        let ctx = format!("quotient `{}`", q.name);
        let member = Param { var: q.var.clone(), set: q.set.clone() };
        let scope = self.bind(&q.params, std::slice::from_ref(&member), &ctx);
        self.check_atom(&q.membership, &scope, false);
        match self.choices.get(q.equiv_choice.as_str()) {
            None => self.err(DiagCode::UnknownChoice, format!("{ctx}: unknown choice `{}`", q.equiv_choice)),
            Some(sig) => {
                let (kind, n, has) = (sig.kind, sig.params.len(), sig.values.contains(&q.equiv_value));
                let related = n == 2 && self.related(sig.params[0], &q.set.name);
                if kind != Kind::Enum || n != 2 || !related {
                    self.err(
                        DiagCode::BadQuotient,
                        format!("{ctx}: `{}` must be an enum choice over pairs of `{}`", q.equiv_choice, q.set.name),
                    );
                } else if !has {
                    self.err(
                        DiagCode::UnknownValue,
                        format!("{ctx}: `{}` has no value `{}`", q.equiv_choice, q.equiv_value),
                    );
                }
            }
        }
    }

    fn check_snippet(&mut self, snippet: &str, scope: &HashMap<String, String>, ctx: &str) {
        for var in snippet_vars(snippet) {
            if !scope.contains_key(&var) {
                self.err(DiagCode::UnboundVariable, format!("{ctx}: unbound variable `${var}` in \"{snippet}\""));
            }
        }
    }

    fn mentions_counter(&self, a: &Atom) -> bool {
        a.calls().iter().any(|c| self.choices.get(c.name.as_str()).is_some_and(|s| s.kind == Kind::Counter))
    }

    /// Checks a choice application; returns its kind when it resolves.
    fn check_call(&mut self, call: &ChoiceCall, scope: &HashMap<String, String>, ctx: &str) -> Option<Kind> {
        let Some(sig) = self.choices.get(call.name.as_str()) else {
            self.err(DiagCode::UnknownChoice, format!("{ctx}: unknown choice `{}`", call.name));
            return None;
        };
        let kind = sig.kind;
        let params: Vec<String> = sig.params.iter().map(|s| s.to_string()).collect();
        if params.len() != call.args.len() {
            self.err(
                DiagCode::ArityMismatch,
                format!("{ctx}: `{}` takes {} argument(s), got {}", call.name, params.len(), call.args.len()),
            );
            return Some(kind);
        }
        for (i, arg) in call.args.iter().enumerate() {
            match scope.get(arg) {
                None => self.err(DiagCode::UnboundVariable, format!("{ctx}: unbound variable `${arg}`")),
                Some(set) => {
                    if self.sets.contains_key(set.as_str())
                        && self.sets.contains_key(params[i].as_str())
                        && !self.related(set, &params[i])
                    {
                        self.err(
                            DiagCode::TypeMismatch,
                            format!("{ctx}: `${arg}` ranges over `{set}` but `{}` expects `{}`", call.name, params[i]),
                        );
                    }
                }
            }
        }
        Some(kind)
    }

    fn check_atom(&mut self, a: &Atom, scope: &HashMap<String, String>, counters_allowed: bool) {
        let ctx = format!("`{}`", printer::atom(a));
        match a {
            Atom::Const(s) => self.check_snippet(s, scope, &ctx),
            Atom::Is { call, values, .. } => match self.check_call(call, scope, &ctx) {
                Some(Kind::Enum) => {
                    let known = self.choices[call.name.as_str()].values.clone();
                    for v in values {
                        if !known.contains(v) {
                            self.err(DiagCode::UnknownValue, format!("{ctx}: `{}` has no value `{v}`", call.name));
                        }
                    }
                }
                Some(_) => self.err(DiagCode::TypeMismatch, format!("{ctx}: `is` applies to enum choices only")),
                None => {}
            },
            Atom::Bare(call) => {
                if let Some(kind) = self.check_call(call, scope, &ctx) {
                    let boolean =
                        kind == Kind::Enum && self.choices[call.name.as_str()].values.iter().any(|v| v == "TRUE");
                    if !boolean {
                        self.err(DiagCode::TypeMismatch, format!("{ctx}: a bare choice must have a TRUE value"));
                    }
                }
            }
            Atom::Cmp { lhs, op, rhs } => {
                let mut kinds = Vec::new();
                for o in [lhs, rhs] {
                    match o {
                        Operand::Choice(c) => kinds.push(self.check_call(c, scope, &ctx)),
                        Operand::Opaque(s) => self.check_snippet(s, scope, &ctx),
                        Operand::Int(_) => {}
                    }
                }
                let choices: Vec<&ChoiceCall> = a.calls();
                if kinds.contains(&Some(Kind::Counter)) {
                    if !counters_allowed || choices.len() != 1 {
                        self.err(
                            DiagCode::BadCounter,
                            format!("{ctx}: counters may only be bounded by constants in `require`"),
                        );
                    }
                } else if kinds.contains(&Some(Kind::Enum)) {
                    let same = choices.len() == 2 && choices[0].name == choices[1].name;
                    if !same || !matches!(op, CmpOp::Eq | CmpOp::Ne) {
                        self.err(
                            DiagCode::TypeMismatch,
                            format!("{ctx}: enum choices compare only with `==`/`!=` against the same choice"),
                        );
                    }
                } else if choices.is_empty() {
                    self.err(DiagCode::TypeMismatch, format!("{ctx}: comparison without any choice"));
                }
            }
        }
    }
}

/// `$name` occurrences inside a host snippet.
pub(crate) fn snippet_vars(snippet: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut chars = snippet.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if c != '$' {
            continue;
        }
        let start = i + 1;
        let mut end = start;
        while let Some(&(j, d)) = chars.peek() {
            if d.is_ascii_alphanumeric() || d == '_' {
                end = j + d.len_utf8();
                chars.next();
            } else {
                break;
            }
        }
        if end > start {
            out.push(snippet[start..end].to_string());
        }
    }
    out
}
