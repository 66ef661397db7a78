//! The interface between a space definition and a concrete backbone.
//!
//! Quoted snippets in a definition (`"$dim.possible_sizes()"`,
//! `"gpu.local_mem_size"`) are never executed. They are parsed into a method
//! name plus bound objects and resolved by a [`Host`].

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::term::Term;

/// Identifier of a basic object of a backbone.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ObjectId(pub u32);

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// A choice instance named by choice and arguments, as hosts see them.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ChoiceKey {
    pub name: String,
    pub args: Vec<ObjectId>,
}

impl ChoiceKey {
    pub fn new(name: impl Into<String>, args: Vec<ObjectId>) -> Self {
        ChoiceKey { name: name.into(), args }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum HostValue {
    Bool(bool),
    Int(i64),
    /// An integer universe.
    Ints(Vec<i64>),
    /// An integer expression that may depend on choices.
    Term(Term<ChoiceKey>),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HostError {
    #[error("unknown set `{0}`")]
    UnknownSet(String),
    #[error("unknown host method `{0}`")]
    UnknownMethod(String),
    #[error("host method `{method}` failed: {message}")]
    Failed { method: String, message: String },
}

/// A semantic backbone seen through the names used by a space definition.
pub trait Host: Send + Sync {
    /// Members of `set` (parametrized by `args`), in ascending id order.
    fn members(&self, set: &str, args: &[ObjectId]) -> Result<Vec<ObjectId>, HostError>;

    /// Resolves a snippet method applied to objects (receiver first).
    fn eval(&self, method: &str, objects: &[ObjectId]) -> Result<HostValue, HostError>;

    /// Runs a trigger callback, returning the extended host. Callbacks may
    /// only add objects and must commute with each other.
    fn lower(&self, callback: &str, objects: &[ObjectId]) -> Result<Arc<dyn Host>, HostError>;

    fn object_name(&self, id: ObjectId) -> String;

    /// Identifies the backbone contents; equal digests mean equal hosts.
    fn digest(&self) -> [u8; 32];

    /// Access to the concrete host type.
    fn as_any(&self) -> &dyn std::any::Any;
}

/// A parsed host snippet: `[!]$recv.method($a, ...)`, `[!]name($a, ...)` or
/// `[!]dotted.path`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Snippet {
    pub negated: bool,
    pub method: String,
    /// Variables bound to the call, receiver first.
    pub vars: Vec<String>,
}

impl Snippet {
    pub fn parse(src: &str) -> Result<Snippet, String> {
        let mut s = src.trim();
        let negated = s.starts_with('!');
        if negated {
            s = s[1..].trim_start();
        }
        let mut vars = Vec::new();
        let (head, args) = match s.find('(') {
            Some(open) => {
                if !s.ends_with(')') {
                    return Err(format!("malformed snippet \"{src}\""));
                }
                (&s[..open], Some(&s[open + 1..s.len() - 1]))
            }
            None => (s, None),
        };
        let method = if let Some(rest) = head.strip_prefix('$') {
            let (var, method) = rest.split_once('.').ok_or_else(|| format!("malformed snippet \"{src}\""))?;
            vars.push(var.to_string());
            method.to_string()
        } else {
            head.to_string()
        };
        let ident_ok = |t: &str| !t.is_empty() && t.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.');
        if !ident_ok(&method) {
            return Err(format!("malformed snippet \"{src}\""));
        }
        if let Some(args) = args {
            for a in args.split(',').map(str::trim).filter(|a| !a.is_empty()) {
                let v =
                    a.strip_prefix('$').ok_or_else(|| format!("snippet arguments must be variables in \"{src}\""))?;
                vars.push(v.to_string());
            }
        }
        Ok(Snippet { negated, method, vars })
    }
}

type EvalFn = Arc<dyn Fn(&[ObjectId]) -> Option<HostValue> + Send + Sync>;
type LowerFn = Arc<dyn Fn(&TableHost, &[ObjectId]) -> TableHost + Send + Sync>;

/// An in-memory host built from explicit tables and closures.
///
/// Closures must be defined for every object a lowering may create, so the
/// digest only covers the set contents, names and the applied lowerings.
#[derive(Clone, Default)]
pub struct TableHost {
    pub tag: String,
    sets: BTreeMap<(String, Vec<ObjectId>), Vec<ObjectId>>,
    names: BTreeMap<ObjectId, String>,
    methods: BTreeMap<String, EvalFn>,
    lowerings: BTreeMap<String, LowerFn>,
    applied: Vec<(String, Vec<ObjectId>)>,
}

impl TableHost {
    pub fn new(tag: impl Into<String>) -> Self {
        TableHost { tag: tag.into(), ..Default::default() }
    }

    pub fn object(&mut self, id: u32, name: impl Into<String>) -> ObjectId {
        let id = ObjectId(id);
        self.names.insert(id, name.into());
        id
    }

    /// Adds members to a (possibly parametrized) set.
    pub fn add_to_set(&mut self, set: &str, args: &[ObjectId], members: &[ObjectId]) {
        let entry = self.sets.entry((set.to_string(), args.to_vec())).or_default();
        entry.extend_from_slice(members);
        entry.sort_unstable();
        entry.dedup();
    }

    pub fn method(&mut self, name: &str, f: impl Fn(&[ObjectId]) -> Option<HostValue> + Send + Sync + 'static) {
        self.methods.insert(name.to_string(), Arc::new(f));
    }

    pub fn constant(&mut self, name: &str, value: HostValue) {
        self.method(name, move |_| Some(value.clone()));
    }

    pub fn lowering(&mut self, name: &str, f: impl Fn(&TableHost, &[ObjectId]) -> TableHost + Send + Sync + 'static) {
        self.lowerings.insert(name.to_string(), Arc::new(f));
    }
}

impl Host for TableHost {
    fn members(&self, set: &str, args: &[ObjectId]) -> Result<Vec<ObjectId>, HostError> {
        match self.sets.get(&(set.to_string(), args.to_vec())) {
            Some(m) => Ok(m.clone()),
            None if self.sets.keys().any(|(s, _)| s == set) => Ok(vec![]),
            None => Err(HostError::UnknownSet(set.to_string())),
        }
    }

    fn eval(&self, method: &str, objects: &[ObjectId]) -> Result<HostValue, HostError> {
        let f = self.methods.get(method).ok_or_else(|| HostError::UnknownMethod(method.to_string()))?;
        f(objects).ok_or_else(|| HostError::Failed {
            method: method.to_string(),
            message: format!("undefined for {objects:?}"),
        })
    }

    fn lower(&self, callback: &str, objects: &[ObjectId]) -> Result<Arc<dyn Host>, HostError> {
        let f = self.lowerings.get(callback).ok_or_else(|| HostError::UnknownMethod(callback.to_string()))?;
        let mut next = f(self, objects);
        next.applied.push((callback.to_string(), objects.to_vec()));
        next.applied.sort();
        Ok(Arc::new(next))
    }

    fn object_name(&self, id: ObjectId) -> String {
        self.names.get(&id).cloned().unwrap_or_else(|| id.to_string())
    }

    fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.tag.as_bytes());
        for ((set, args), members) in &self.sets {
            h.update(set.as_bytes());
            for a in args.iter().chain([&ObjectId(u32::MAX)]).chain(members) {
                h.update(a.0.to_le_bytes());
            }
        }
        for (id, name) in &self.names {
            h.update(id.0.to_le_bytes());
            h.update(name.as_bytes());
        }
        for (cb, args) in &self.applied {
            h.update(cb.as_bytes());
            for a in args {
                h.update(a.0.to_le_bytes());
            }
        }
        h.finalize().into()
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }
}
