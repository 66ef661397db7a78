//! Search over partially specified implementation spaces: Monte-Carlo tree
//! search guided by a lower-bound model, uniform random walks and
//! search-tree size estimators.

pub mod estimate;
pub mod mcts;
pub mod model;
pub mod order;
pub mod prune;
pub mod stats;
pub mod walk;

pub use mcts::{explore, ExploreResult, SearchConfig};
pub use model::{CostModel, GpuModel};
pub use order::{Decision, DecisionOrder};
