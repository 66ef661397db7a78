use std::fmt::Write;

use crate::ir::*;

/// Prints a definition in canonical form. `parse(pretty_print(d)) == d`.
pub fn pretty_print(def: &SpaceDefinition) -> String {
    let mut out = String::new();
    for (i, item) in def.items.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        match item {
            Item::Set(s) => print_set(&mut out, s),
            Item::Choice(c) => print_choice(&mut out, c),
            Item::Require(r) => {
                out.push_str("require ");
                print_foralls(&mut out, &r.foralls);
                out.push_str(&disjunction(&r.body));
                out.push('\n');
            }
            Item::Quotient(q) => print_quotient(&mut out, q),
            Item::Trigger(t) => {
                out.push_str("trigger ");
                print_foralls(&mut out, &t.foralls);
                let clauses: Vec<String> = t
                    .condition
                    .iter()
                    .map(|c| if c.len() == 1 { atom(&c[0]) } else { format!("({})", disjunction(c)) })
                    .collect();
                let _ = writeln!(out, "when {} call \"{}\"", clauses.join(" && "), t.callback);
            }
        }
    }
    out
}

pub(crate) fn set_ref(s: &SetRef) -> String {
    if s.args.is_empty() {
        s.name.clone()
    } else {
        let args: Vec<String> = s.args.iter().map(|a| format!("${a}")).collect();
        format!("{}({})", s.name, args.join(", "))
    }
}

fn params(ps: &[Param]) -> String {
    let ps: Vec<String> = ps.iter().map(|p| format!("${} in {}", p.var, set_ref(&p.set))).collect();
    format!("({})", ps.join(", "))
}

fn print_foralls(out: &mut String, foralls: &[Param]) {
    for p in foralls {
        let _ = write!(out, "forall ${} in {}: ", p.var, set_ref(&p.set));
    }
}

pub(crate) fn call(c: &ChoiceCall) -> String {
    let args: Vec<String> = c.args.iter().map(|a| format!("${a}")).collect();
    format!("{}({})", c.name, args.join(", "))
}

pub(crate) fn operand(o: &Operand) -> String {
    match o {
        Operand::Choice(c) => call(c),
        Operand::Opaque(s) => format!("\"{s}\""),
        Operand::Int(i) => i.to_string(),
    }
}

pub(crate) fn atom(a: &Atom) -> String {
    match a {
        Atom::Const(s) => format!("\"{s}\""),
        Atom::Is { call: c, negated, values } => {
            format!("{} is {}{}", call(c), if *negated { "not " } else { "" }, values.join(" | "))
        }
        Atom::Cmp { lhs, op, rhs } => format!("{} {} {}", operand(lhs), op.symbol(), operand(rhs)),
        Atom::Bare(c) => call(c),
    }
}

pub(crate) fn disjunction(atoms: &[Atom]) -> String {
    atoms.iter().map(atom).collect::<Vec<_>>().join(" || ")
}

fn print_set(out: &mut String, s: &SetDecl) {
    out.push_str("set ");
    out.push_str(&s.name);
    if !s.params.is_empty() {
        out.push_str(&params(&s.params));
    }
    if let Some(sup) = &s.superset {
        let _ = write!(out, " subsetof {sup}");
    }
    out.push_str(":\n");
    for item in &s.body {
        match item {
            SetBodyItem::Key { key, value } => match value {
                KeyValue::Quoted(v) => {
                    let _ = writeln!(out, "  {key} = \"{v}\"");
                }
                KeyValue::Elided => {
                    let _ = writeln!(out, "  {key} = ...");
                }
            },
            SetBodyItem::Elided => out.push_str("  ...\n"),
        }
    }
    out.push_str("end\n");
}

fn print_choice(out: &mut String, c: &ChoiceDecl) {
    let kind = match c.kind {
        ChoiceKind::Enum { .. } => "enum",
        ChoiceKind::Integer { .. } => "integer",
        ChoiceKind::Counter(_) => "counter",
    };
    let _ = writeln!(out, "choice {kind} {}{}:", c.name, params(&c.params));
    match &c.kind {
        ChoiceKind::Enum { values, antisymmetric } => {
            for v in values {
                let _ = writeln!(out, "  value {v}:");
            }
            if !antisymmetric.is_empty() {
                out.push_str("  antisymmetric:\n");
                for (a, b) in antisymmetric {
                    let _ = writeln!(out, "    {a} -> {b}");
                }
            }
        }
        ChoiceKind::Integer { universe } => {
            if let Some(u) = universe {
                let _ = writeln!(out, "  \"{u}\"");
            }
        }
        ChoiceKind::Counter(body) => {
            for p in &body.foralls {
                let _ = writeln!(out, "  forall ${} in {}:", p.var, set_ref(&p.set));
            }
            let op = match body.op {
                CounterOp::Sum => "sum",
                CounterOp::Product => "product",
            };
            let _ = write!(out, "  {op} {}", operand(&body.term));
            if let Some(g) = &body.guard {
                let _ = write!(out, " when{} {}", if body.when_colon { ":" } else { "" }, atom(g));
            }
            out.push('\n');
        }
    }
    if c.elided {
        out.push_str("  ...\n");
    }
    out.push_str("end\n");
}

fn print_quotient(out: &mut String, q: &QuotientDecl) {
    let _ = write!(out, "quotient {}", q.name);
    if !q.params.is_empty() {
        out.push_str(&params(&q.params));
    }
    let _ = writeln!(out, " of ${}{} {}:", q.var, if q.with_in { " in" } else { "" }, set_ref(&q.set));
    let _ = writeln!(out, "  {} = {} / {} is {}", q.flag, atom(&q.membership), q.equiv_choice, q.equiv_value);
    if q.elided {
        out.push_str("  ...\n");
    }
    out.push_str("end\n");
}
