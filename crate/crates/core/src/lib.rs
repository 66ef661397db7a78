//! Implementation spaces as partially instantiated decision vectors.
//!
//! A [`ir::SpaceDefinition`] (usually parsed from a `.space` file by
//! [`dsl::parse`]) declares choices, constraints, counters, quotient sets and
//! triggers over named object sets. A [`host::Host`] supplies the objects of a
//! concrete backbone. [`Family::root`] instantiates and propagates the
//! decision vector; [`Candidate::apply_decision`] restricts it further.

pub mod candidate;
pub mod dsl;
pub mod host;
pub mod ir;
pub mod oracle;
pub mod propagate;
pub mod space;
pub mod term;

pub use candidate::{Candidate, DecodeError, Family};
pub use host::{ChoiceKey, Host, HostError, HostValue, ObjectId, TableHost};
pub use propagate::{DeadEnd, TraceEvent};
pub use space::{Space, SpaceError, Var, VarRef};
