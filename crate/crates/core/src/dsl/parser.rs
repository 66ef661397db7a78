use std::collections::HashSet;

use super::lexer::{lex, Tok, Token};
use super::{DiagCode, Diagnostic};
use crate::ir::*;

const TOP_LEVEL: [&str; 5] = ["set", "choice", "require", "quotient", "trigger"];

/// Parses a `.space` source into a [`SpaceDefinition`].
///
/// Syntax errors do not stop the parse: the parser resynchronizes on the next
/// top-level keyword so that every error in the file is reported.
pub fn parse(src: &str) -> Result<SpaceDefinition, Vec<Diagnostic>> {
    let tokens = lex(src).map_err(|d| vec![d])?;
    let mut parser = Parser { tokens, pos: 0 };
    let mut def = SpaceDefinition::default();
    let mut diags = Vec::new();
    let mut seen = HashSet::new();
    while !parser.at_eof() {
        let start = parser.peek().clone();
        match parser.item() {
            Ok(item) => {
                let name = match &item {
                    Item::Set(s) => Some(("set", s.name.clone())),
                    Item::Choice(c) => Some(("choice", c.name.clone())),
                    Item::Quotient(q) => Some(("quotient", q.name.clone())),
                    _ => None,
                };
                if let Some((kind, name)) = name {
                    // Choices and quotient flags share a namespace.
                    let ns = if kind == "set" { "set" } else { "choice" };
                    let mut names = vec![name.clone()];
                    if let Item::Quotient(q) = &item {
                        names.push(q.flag.clone());
                    }
                    for n in names {
                        if !seen.insert((ns, n.clone())) {
                            diags.push(Diagnostic::new(
                                start.line,
                                start.col,
                                DiagCode::DuplicateDecl,
                                format!("duplicate declaration of {kind} `{n}`"),
                            ));
                        }
                    }
                }
                def.items.push(item);
            }
            Err(d) => {
                diags.push(d);
                parser.recover();
            }
        }
    }
    if diags.is_empty() {
        Ok(def)
    } else {
        Err(diags)
    }
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

type PResult<T> = Result<T, Diagnostic>;

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn peek_at(&self, offset: usize) -> &Tok {
        let i = (self.pos + offset).min(self.tokens.len() - 1);
        &self.tokens[i].tok
    }

    fn at_eof(&self) -> bool {
        self.peek().tok == Tok::Eof
    }

    fn next(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, msg: impl Into<String>) -> Diagnostic {
        let t = self.peek();
        Diagnostic::new(t.line, t.col, DiagCode::Syntax, msg)
    }

    fn describe(tok: &Tok) -> String {
        match tok {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Var(s) => format!("`${s}`"),
            Tok::Str(s) => format!("\"{s}\""),
            Tok::Int(i) => format!("`{i}`"),
            Tok::Eof => "end of file".into(),
            other => format!("{other:?}"),
        }
    }

    fn expect(&mut self, tok: Tok) -> PResult<()> {
        if self.peek().tok == tok {
            self.next();
            Ok(())
        } else {
            Err(self.error(format!("expected {}, found {}", Self::describe(&tok), Self::describe(&self.peek().tok))))
        }
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s == kw)
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.next();
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.error(format!("expected `{kw}`, found {}", Self::describe(&self.peek().tok))))
        }
    }

    fn at_top_level(&self) -> bool {
        self.at_eof() || TOP_LEVEL.iter().any(|kw| self.is_kw(kw))
    }

    fn ident(&mut self) -> PResult<String> {
        match &self.peek().tok {
            Tok::Ident(s) => {
                let s = s.clone();
                self.next();
                Ok(s)
            }
            other => Err(self.error(format!("expected an identifier, found {}", Self::describe(other)))),
        }
    }

    fn var(&mut self) -> PResult<String> {
        match &self.peek().tok {
            Tok::Var(s) => {
                let s = s.clone();
                self.next();
                Ok(s)
            }
            other => Err(self.error(format!("expected a `$variable`, found {}", Self::describe(other)))),
        }
    }

    fn recover(&mut self) {
        // Always make progress, then skip to the next declaration.
        self.next();
        while !self.at_top_level() {
            self.next();
        }
    }

    fn item(&mut self) -> PResult<Item> {
        let kw = self.ident()?;
        match kw.as_str() {
            "set" => self.set_decl().map(Item::Set),
            "choice" => self.choice_decl().map(Item::Choice),
            "require" => self.require().map(Item::Require),
            "quotient" => self.quotient().map(Item::Quotient),
            "trigger" => self.trigger().map(Item::Trigger),
            other => {
                self.pos -= 1;
                Err(self.error(format!("expected a declaration, found `{other}`")))
            }
        }
    }

    fn set_ref(&mut self) -> PResult<SetRef> {
        let name = self.ident()?;
        let mut args = Vec::new();
        if self.peek().tok == Tok::LParen {
            self.next();
            if self.peek().tok != Tok::RParen {
                loop {
                    args.push(self.var()?);
                    if self.peek().tok == Tok::Comma {
                        self.next();
                    } else {
                        break;
                    }
                }
            }
            self.expect(Tok::RParen)?;
        }
        Ok(SetRef { name, args })
    }

    fn params(&mut self) -> PResult<Vec<Param>> {
        let mut params = Vec::new();
        if self.peek().tok != Tok::LParen {
            return Ok(params);
        }
        self.next();
        if self.peek().tok != Tok::RParen {
            loop {
                let var = self.var()?;
                self.expect_kw("in")?;
                let set = self.set_ref()?;
                params.push(Param { var, set });
                if self.peek().tok == Tok::Comma {
                    self.next();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RParen)?;
        Ok(params)
    }

    fn set_decl(&mut self) -> PResult<SetDecl> {
        let name = self.ident()?;
        let params = self.params()?;
        let superset = if self.eat_kw("subsetof") { Some(self.ident()?) } else { None };
        self.expect(Tok::Colon)?;
        let mut body = Vec::new();
        loop {
            if self.eat_kw("end") {
                break;
            }
            if self.at_top_level() {
                break;
            }
            match self.peek().tok.clone() {
                Tok::Ellipsis => {
                    self.next();
                    body.push(SetBodyItem::Elided);
                }
                Tok::Ident(key) => {
                    self.next();
                    self.expect(Tok::Assign)?;
                    let value = match self.next().tok {
                        Tok::Str(s) => KeyValue::Quoted(s),
                        Tok::Ellipsis => KeyValue::Elided,
                        other => {
                            self.pos -= 1;
                            return Err(self
                                .error(format!("expected a quoted value or `...`, found {}", Self::describe(&other))));
                        }
                    };
                    body.push(SetBodyItem::Key { key, value });
                }
                other => return Err(self.error(format!("unexpected {} in set body", Self::describe(&other)))),
            }
        }
        Ok(SetDecl { name, params, superset, body })
    }

    fn choice_decl(&mut self) -> PResult<ChoiceDecl> {
        let kind = self.ident()?;
        let name = self.ident()?;
        let params = self.params()?;
        self.expect(Tok::Colon)?;
        let mut elided = false;
        let kind = match kind.as_str() {
            "enum" => {
                let mut values = Vec::new();
                let mut antisymmetric = Vec::new();
                loop {
                    if self.eat_kw("end") || self.at_top_level() {
                        break;
                    }
                    if self.peek().tok == Tok::Ellipsis {
                        self.next();
                        elided = true;
                    } else if self.eat_kw("value") {
                        values.push(self.ident()?);
                        self.expect(Tok::Colon)?;
                    } else if self.eat_kw("antisymmetric") {
                        self.expect(Tok::Colon)?;
                        while matches!(self.peek().tok, Tok::Ident(_)) && *self.peek_at(1) == Tok::Arrow {
                            let a = self.ident()?;
                            self.expect(Tok::Arrow)?;
                            let b = self.ident()?;
                            antisymmetric.push((a, b));
                        }
                    } else {
                        return Err(self.error(format!(
                            "expected `value`, `antisymmetric`, `...` or `end`, found {}",
                            Self::describe(&self.peek().tok)
                        )));
                    }
                }
                ChoiceKind::Enum { values, antisymmetric }
            }
            "integer" => {
                let mut universe = None;
                loop {
                    if self.eat_kw("end") || self.at_top_level() {
                        break;
                    }
                    match self.next().tok {
                        Tok::Str(s) if universe.is_none() => universe = Some(s),
                        Tok::Ellipsis => elided = true,
                        other => {
                            self.pos -= 1;
                            return Err(self.error(format!(
                                "expected a quoted universe, `...` or `end`, found {}",
                                Self::describe(&other)
                            )));
                        }
                    }
                }
                ChoiceKind::Integer { universe }
            }
            "counter" => {
                let mut foralls = Vec::new();
                while self.eat_kw("forall") {
                    foralls.push(self.forall_tail()?);
                }
                let op = if self.eat_kw("sum") {
                    CounterOp::Sum
                } else if self.eat_kw("product") {
                    CounterOp::Product
                } else {
                    return Err(self.error("expected `sum` or `product`"));
                };
                let term = self.operand()?;
                let (guard, when_colon) = if self.eat_kw("when") {
                    let colon = if self.peek().tok == Tok::Colon {
                        self.next();
                        true
                    } else {
                        false
                    };
                    (Some(self.atom()?), colon)
                } else {
                    (None, false)
                };
                loop {
                    if self.eat_kw("end") || self.at_top_level() {
                        break;
                    }
                    if self.peek().tok == Tok::Ellipsis {
                        self.next();
                        elided = true;
                    } else {
                        return Err(self.error("expected `end` after the counter body"));
                    }
                }
                ChoiceKind::Counter(CounterBody { foralls, op, term, guard, when_colon })
            }
            other => {
                return Err(self.error(format!("unknown choice kind `{other}` (expected enum, integer or counter)")))
            }
        };
        Ok(ChoiceDecl { name, params, kind, elided })
    }

    /// Parses `$v in Set(args):` after the `forall` keyword.
    fn forall_tail(&mut self) -> PResult<Param> {
        let var = self.var()?;
        self.expect_kw("in")?;
        let set = self.set_ref()?;
        self.expect(Tok::Colon)?;
        Ok(Param { var, set })
    }

    fn require(&mut self) -> PResult<ConstraintDecl> {
        let mut foralls = Vec::new();
        while self.eat_kw("forall") {
            foralls.push(self.forall_tail()?);
        }
        let body = self.disjunction()?;
        Ok(ConstraintDecl { foralls, body })
    }

    fn disjunction(&mut self) -> PResult<Vec<Atom>> {
        let mut atoms = vec![self.atom()?];
        while self.peek().tok == Tok::OrOr {
            self.next();
            atoms.push(self.atom()?);
        }
        Ok(atoms)
    }

    fn call(&mut self) -> PResult<ChoiceCall> {
        let name = self.ident()?;
        self.expect(Tok::LParen)?;
        let mut args = Vec::new();
        if self.peek().tok != Tok::RParen {
            loop {
                args.push(self.var()?);
                if self.peek().tok == Tok::Comma {
                    self.next();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RParen)?;
        Ok(ChoiceCall { name, args })
    }

    fn operand(&mut self) -> PResult<Operand> {
        match self.peek().tok.clone() {
            Tok::Str(s) => {
                self.next();
                Ok(Operand::Opaque(s))
            }
            Tok::Int(i) => {
                self.next();
                Ok(Operand::Int(i))
            }
            Tok::Ident(_) => Ok(Operand::Choice(self.call()?)),
            other => Err(self.error(format!("expected an operand, found {}", Self::describe(&other)))),
        }
    }

    fn cmp_op(&self) -> Option<CmpOp> {
        Some(match self.peek().tok {
            Tok::EqEq => CmpOp::Eq,
            Tok::Ne => CmpOp::Ne,
            Tok::Lt => CmpOp::Lt,
            Tok::Le => CmpOp::Le,
            Tok::Gt => CmpOp::Gt,
            Tok::Ge => CmpOp::Ge,
            _ => return None,
        })
    }

    fn atom(&mut self) -> PResult<Atom> {
        let lhs = self.operand()?;
        if let Some(op) = self.cmp_op() {
            self.next();
            let rhs = self.operand()?;
            return Ok(Atom::Cmp { lhs, op, rhs });
        }
        match lhs {
            Operand::Opaque(s) => Ok(Atom::Const(s)),
            Operand::Int(_) => Err(self.error("an integer literal is not a condition")),
            Operand::Choice(call) => {
                if self.eat_kw("is") {
                    let negated = self.eat_kw("not");
                    let mut values = vec![self.ident()?];
                    while self.peek().tok == Tok::Pipe {
                        self.next();
                        values.push(self.ident()?);
                    }
                    Ok(Atom::Is { call, negated, values })
                } else {
                    Ok(Atom::Bare(call))
                }
            }
        }
    }

    fn quotient(&mut self) -> PResult<QuotientDecl> {
        let name = self.ident()?;
        let params = self.params()?;
        self.expect_kw("of")?;
        let var = self.var()?;
        let with_in = self.eat_kw("in");
        let set = self.set_ref()?;
        self.expect(Tok::Colon)?;
        let flag = self.ident()?;
        self.expect(Tok::Assign)?;
        let membership = self.atom()?;
        self.expect(Tok::Slash)?;
        let equiv_choice = self.ident()?;
        self.expect_kw("is")?;
        let equiv_value = self.ident()?;
        let mut elided = false;
        loop {
            if self.eat_kw("end") || self.at_top_level() {
                break;
            }
            if self.peek().tok == Tok::Ellipsis {
                self.next();
                elided = true;
            } else {
                return Err(self.error("expected `...` or `end` in quotient body"));
            }
        }
        Ok(QuotientDecl { name, params, var, set, with_in, flag, membership, equiv_choice, equiv_value, elided })
    }

    fn clause(&mut self) -> PResult<Vec<Atom>> {
        if self.peek().tok == Tok::LParen {
            self.next();
            let atoms = self.disjunction()?;
            self.expect(Tok::RParen)?;
            Ok(atoms)
        } else {
            Ok(vec![self.atom()?])
        }
    }

    fn trigger(&mut self) -> PResult<TriggerDecl> {
        let mut foralls = Vec::new();
        while self.eat_kw("forall") {
            foralls.push(self.forall_tail()?);
        }
        self.expect_kw("when")?;
        let mut condition = vec![self.clause()?];
        while self.peek().tok == Tok::AndAnd {
            self.next();
            condition.push(self.clause()?);
        }
        self.expect_kw("call")?;
        let callback = match self.next().tok {
            Tok::Str(s) => s,
            other => {
                self.pos -= 1;
                return Err(self.error(format!("expected a quoted callback, found {}", Self::describe(&other))));
            }
        };
        Ok(TriggerDecl { foralls, condition, callback })
    }
}
