use std::path::{Path, PathBuf};

use ispace_gpu::kernel::KernelSpec;
use ispace_gpu::MachineParams;
use ispace_search::estimate::Count;
use ispace_search::stats::CiMethod;
use ispace_search::SearchConfig;
use serde::{Deserialize, Serialize};

/// An invalid configuration or command line; exits with status 2.
#[derive(Debug, thiserror::Error)]
#[error("configuration error: {0}")]
pub struct ConfigError(pub String);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kernel: KernelSpec,
    #[serde(default)]
    pub machine: MachineParams,
    /// Choices decided first; "reversed" flips the default order.
    #[serde(default)]
    pub order: Option<OrderSpec>,
    #[serde(default)]
    pub search: SearchConfig,
    #[serde(default)]
    pub estimate: EstimateConfig,
    #[serde(default)]
    pub deadend: DeadEndConfig,
    #[serde(default)]
    pub order_compare: OrderCompareConfig,
    #[serde(default)]
    pub enumerate: EnumerateConfig,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OrderSpec {
    /// `"default"` or `"reversed"`.
    Named(String),
    List(Vec<String>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateConfig {
    pub knuth_iterations: u64,
    pub chen_iterations: u64,
    pub count: Count,
    pub knuth_ci: CiMethod,
    pub chen_ci: CiMethod,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        EstimateConfig {
            knuth_iterations: 100_000,
            chen_iterations: 1_000,
            count: Count::Leaves,
            knuth_ci: CiMethod::LogNormal,
            chen_ci: CiMethod::Normal,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeadEndConfig {
    pub trials: u64,
}

impl Default for DeadEndConfig {
    fn default() -> Self {
        DeadEndConfig { trials: 10_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrderCompareConfig {
    /// Compare at the first depth holding this many nodes.
    pub min_nodes: u64,
    /// Reference cost; found by an exploration with `explore_budget`
    /// evaluations when absent.
    pub reference: Option<u64>,
    pub explore_budget: u64,
    /// Maximal number of tree nodes visited per order.
    pub node_budget: u64,
}

impl Default for OrderCompareConfig {
    fn default() -> Self {
        OrderCompareConfig { min_nodes: 1_000, reference: None, explore_budget: 500, node_budget: 10_000_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnumerateConfig {
    pub node_budget: u64,
}

impl Default for EnumerateConfig {
    fn default() -> Self {
        EnumerateConfig { node_budget: 10_000_000 }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        ExperimentConfig::parse(&text).map_err(|e| ConfigError(format!("{}: {}", path.display(), e.0)))
    }

    pub fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError(e.to_string()))
    }
}
