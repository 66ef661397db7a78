//! Intermediate representation of a space definition.
//!
//! The IR mirrors the surface language closely so that printing and reparsing
//! is a structural fixpoint. Semantic resolution against a backbone happens
//! later, in [`crate::space`].

use serde::{Deserialize, Serialize};

/// A complete space definition: sets, choices, constraints, counters,
/// quotients and triggers, in source order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpaceDefinition {
    pub items: Vec<Item>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Item {
    Set(SetDecl),
    Choice(ChoiceDecl),
    Require(ConstraintDecl),
    Quotient(QuotientDecl),
    Trigger(TriggerDecl),
}

/// `$var in Set(args)`
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Param {
    pub var: String,
    pub set: SetRef,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetRef {
    pub name: String,
    /// Variables passed to a parametrized set.
    pub args: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetDecl {
    pub name: String,
    pub params: Vec<Param>,
    pub superset: Option<String>,
    pub body: Vec<SetBodyItem>,
}

/// Host-binding keys are stored but never interpreted.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SetBodyItem {
    Key { key: String, value: KeyValue },
    Elided,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum KeyValue {
    Quoted(String),
    Elided,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChoiceDecl {
    pub name: String,
    pub params: Vec<Param>,
    pub kind: ChoiceKind,
    /// The body contained `...` lines.
    pub elided: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChoiceKind {
    Enum { values: Vec<String>, antisymmetric: Vec<(String, String)> },
    Integer { universe: Option<String> },
    Counter(CounterBody),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterBody {
    pub foralls: Vec<Param>,
    pub op: CounterOp,
    pub term: Operand,
    pub guard: Option<Atom>,
    /// Whether `when` was followed by a colon; kept for faithful printing.
    pub when_colon: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CounterOp {
    Sum,
    Product,
}

/// `require forall ...: a || b || c`
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintDecl {
    pub foralls: Vec<Param>,
    pub body: Vec<Atom>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuotientDecl {
    pub name: String,
    pub params: Vec<Param>,
    pub var: String,
    pub set: SetRef,
    /// Whether the header used `of $v in Set` rather than `of $v Set`.
    pub with_in: bool,
    pub flag: String,
    pub membership: Atom,
    pub equiv_choice: String,
    pub equiv_value: String,
    pub elided: bool,
}

/// `trigger forall ...: when <cnf> call "callback"`
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriggerDecl {
    pub foralls: Vec<Param>,
    /// Conjunction of disjunctions.
    pub condition: Vec<Vec<Atom>>,
    pub callback: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChoiceCall {
    pub name: String,
    pub args: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Atom {
    /// A quoted host snippet evaluated to a boolean at instantiation.
    Const(String),
    /// `choice(args) is [not] V1 | V2`
    Is {
        call: ChoiceCall,
        negated: bool,
        values: Vec<String>,
    },
    Cmp {
        lhs: Operand,
        op: CmpOp,
        rhs: Operand,
    },
    /// A bare choice reference, as printed in some elided quotient headers.
    Bare(ChoiceCall),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Operand {
    Choice(ChoiceCall),
    Opaque(String),
    Int(i64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    pub fn eval(self, lhs: i64, rhs: i64) -> bool {
        match self {
            CmpOp::Eq => lhs == rhs,
            CmpOp::Ne => lhs != rhs,
            CmpOp::Lt => lhs < rhs,
            CmpOp::Le => lhs <= rhs,
            CmpOp::Gt => lhs > rhs,
            CmpOp::Ge => lhs >= rhs,
        }
    }

    /// The operator obtained by swapping operands.
    pub fn flip(self) -> CmpOp {
        match self {
            CmpOp::Lt => CmpOp::Gt,
            CmpOp::Le => CmpOp::Ge,
            CmpOp::Gt => CmpOp::Lt,
            CmpOp::Ge => CmpOp::Le,
            other => other,
        }
    }
}

impl SpaceDefinition {
    pub fn sets(&self) -> impl Iterator<Item = &SetDecl> {
        self.items.iter().filter_map(|i| match i {
            Item::Set(s) => Some(s),
            _ => None,
        })
    }

    pub fn choices(&self) -> impl Iterator<Item = &ChoiceDecl> {
        self.items.iter().filter_map(|i| match i {
            Item::Choice(c) => Some(c),
            _ => None,
        })
    }

    pub fn constraints(&self) -> impl Iterator<Item = &ConstraintDecl> {
        self.items.iter().filter_map(|i| match i {
            Item::Require(c) => Some(c),
            _ => None,
        })
    }

    pub fn quotients(&self) -> impl Iterator<Item = &QuotientDecl> {
        self.items.iter().filter_map(|i| match i {
            Item::Quotient(q) => Some(q),
            _ => None,
        })
    }

    pub fn triggers(&self) -> impl Iterator<Item = &TriggerDecl> {
        self.items.iter().filter_map(|i| match i {
            Item::Trigger(t) => Some(t),
            _ => None,
        })
    }

    pub fn set(&self, name: &str) -> Option<&SetDecl> {
        self.sets().find(|s| s.name == name)
    }

    pub fn choice(&self, name: &str) -> Option<&ChoiceDecl> {
        self.choices().find(|c| c.name == name)
    }

    /// Concatenates two definitions.
    pub fn extend(&mut self, other: SpaceDefinition) {
        self.items.extend(other.items);
    }
}

impl ChoiceDecl {
    pub fn is_counter(&self) -> bool {
        matches!(self.kind, ChoiceKind::Counter(_))
    }

    pub fn enum_values(&self) -> Option<&[String]> {
        match &self.kind {
            ChoiceKind::Enum { values, .. } => Some(values),
            _ => None,
        }
    }
}

impl Atom {
    /// Choice applications referenced by this atom.
    pub fn calls(&self) -> Vec<&ChoiceCall> {
        match self {
            Atom::Const(_) => vec![],
            Atom::Is { call, .. } | Atom::Bare(call) => vec![call],
            Atom::Cmp { lhs, rhs, .. } => [lhs, rhs]
                .into_iter()
                .filter_map(|o| match o {
                    Operand::Choice(c) => Some(c),
                    _ => None,
                })
                .collect(),
        }
    }
}
