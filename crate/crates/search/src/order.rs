//! The fixed order in which open choice instances are decided.

use ispace_core::{Candidate, DeadEnd, ObjectId, Var, VarRef};
use serde::{Deserialize, Serialize};

/// Choices decided first, most important first.
pub const DEFAULT_PRIORITY: [&str; 6] = ["size", "dim_kind", "thread_level", "mem_space", "order", "cache"];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionOrder {
    pub choices: Vec<String>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum OrderError {
    #[error("unknown choice `{0}`")]
    Unknown(String),
    #[error("choice `{0}` listed twice")]
    Duplicate(String),
}

impl DecisionOrder {
    /// [`DEFAULT_PRIORITY`] restricted to the space, then its remaining
    /// choices in declaration order.
    pub fn default_for(c: &Candidate) -> DecisionOrder {
        let names: Vec<&str> = c.space().choices.iter().map(|ch| ch.name.as_str()).collect();
        let mut choices: Vec<String> =
            DEFAULT_PRIORITY.iter().filter(|p| names.contains(p)).map(|p| p.to_string()).collect();
        for n in names {
            if !choices.iter().any(|x| x == n) {
                choices.push(n.to_string());
            }
        }
        DecisionOrder { choices }
    }

    pub fn reversed(&self) -> DecisionOrder {
        DecisionOrder { choices: self.choices.iter().rev().cloned().collect() }
    }

    /// A user-given order: listed choices first, then the remaining ones in
    /// declaration order.
    pub fn from_list(c: &Candidate, list: &[String]) -> Result<DecisionOrder, OrderError> {
        let names: Vec<&str> = c.space().choices.iter().map(|ch| ch.name.as_str()).collect();
        let mut choices: Vec<String> = Vec::new();
        for n in list {
            if !names.contains(&n.as_str()) {
                return Err(OrderError::Unknown(n.clone()));
            }
            if choices.contains(n) {
                return Err(OrderError::Duplicate(n.clone()));
            }
            choices.push(n.clone());
        }
        for n in names {
            if !choices.iter().any(|x| x == n) {
                choices.push(n.to_string());
            }
        }
        Ok(DecisionOrder { choices })
    }

    fn rank(&self, name: &str) -> usize {
        self.choices.iter().position(|x| x == name).unwrap_or(self.choices.len())
    }

    /// The next instance to decide: the open instance of the earliest
    /// choice, lowest instance first.
    pub fn next_open(&self, c: &Candidate) -> Option<Var> {
        let space = c.space();
        c.open_choices()
            .into_iter()
            .min_by_key(|&v| (self.rank(&space.choices[space.instances[v as usize].choice as usize].name), v))
    }
}

/// One decision: an instance of a choice restricted to a single value.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub choice: String,
    pub args: Vec<u32>,
    pub value: String,
}

impl Decision {
    pub fn of(c: &Candidate, var: Var, bit: u32) -> Decision {
        let space = c.space();
        let inst = &space.instances[var as usize];
        Decision {
            choice: space.choices[inst.choice as usize].name.clone(),
            args: inst.args.iter().map(|a| a.0).collect(),
            value: space.value_name(var, bit as usize),
        }
    }

    pub fn apply(&self, c: &Candidate) -> Result<Candidate, DeadEnd> {
        let args: Vec<_> = self.args.iter().map(|&a| ObjectId(a)).collect();
        let r = c.lookup(&self.choice, &args).ok_or_else(|| DeadEnd { reason: format!("no instance {self:?}") })?;
        let mask = c.mask_of(r, &[&self.value]).ok_or_else(|| DeadEnd { reason: format!("no value {self:?}") })?;
        c.apply_decision(r, mask)
    }
}

/// A value of an instance and the candidate it leads to.
pub type Branch = (u32, Result<Candidate, DeadEnd>);

/// Children of a candidate: one per value of the next open instance, in
/// value order. `None` for fully specified candidates.
pub fn expand(c: &Candidate, order: &DecisionOrder) -> Option<(Var, Vec<Branch>)> {
    let var = order.next_open(c)?;
    let dom = c.domain(var);
    let r = VarRef { var, swapped: false };
    let children = (0..32u32).filter(|b| dom & (1 << b) != 0).map(|b| (b, c.apply_decision(r, 1 << b))).collect();
    Some((var, children))
}

/// Replays decisions from a root.
pub fn replay(root: &Candidate, path: &[Decision]) -> Result<Candidate, DeadEnd> {
    path.iter().try_fold(root.clone(), |c, d| d.apply(&c))
}
