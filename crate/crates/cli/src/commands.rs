use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use ispace_gpu::encoding::GpuSpace;
use ispace_gpu::nest::reconstruct;
use ispace_search::estimate::{chen_estimate, depth_open_key, exact_count, knuth_estimate, CandidateTree, Estimate};
use ispace_search::mcts::Event;
use ispace_search::order::replay as replay_path;
use ispace_search::prune::prune_profile;
use ispace_search::walk::deadend_rate;
use ispace_search::{explore as run_explore, CostModel, Decision, DecisionOrder, GpuModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, ExperimentConfig, OrderSpec};
use crate::Common;

pub const NO_IMPLEMENTATION: u8 = 3;

/// One line of an exploration log.
#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Record {
    Header { config: Box<ExperimentConfig>, order: DecisionOrder },
    Event(Event),
}

/// A stored implementation: the decisions leading to it from the root.
#[derive(Debug, Serialize, Deserialize)]
pub struct Stored {
    pub cost: u64,
    pub digest: String,
    pub path: Vec<Decision>,
}

struct Setup {
    config: ExperimentConfig,
    space: GpuSpace,
    order: DecisionOrder,
}

fn load(c: &Common) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::load(&c.config)?;
    if let Some(seed) = c.seed {
        config.search.seed = seed;
    }
    if let Some(budget) = c.budget {
        config.search.budget = budget;
    }
    if let Some(order) = &c.order {
        config.order = Some(if order == "default" || order == "reversed" {
            OrderSpec::Named(order.clone())
        } else {
            OrderSpec::List(order.split(',').map(|s| s.trim().to_string()).collect())
        });
    }
    if let Some(out) = &c.out {
        config.out = out.clone();
    }
    Ok(config)
}

fn setup_with(config: ExperimentConfig) -> Result<Setup> {
    let space = GpuSpace::from_spec(&config.kernel, config.machine.clone()).map_err(|e| ConfigError(e.to_string()))?;
    let default = DecisionOrder::default_for(&space.root);
    let order = match &config.order {
        None => default,
        Some(OrderSpec::Named(n)) if n == "default" => default,
        Some(OrderSpec::Named(n)) if n == "reversed" => default.reversed(),
        Some(OrderSpec::Named(n)) => return Err(ConfigError(format!("unknown order `{n}`")).into()),
        Some(OrderSpec::List(l)) => DecisionOrder::from_list(&space.root, l).map_err(|e| ConfigError(e.to_string()))?,
    };
    Ok(Setup { config, space, order })
}

fn setup(c: &Common) -> Result<Setup> {
    setup_with(load(c)?)
}

fn out_dir(config: &ExperimentConfig) -> Result<&Path> {
    fs::create_dir_all(&config.out).with_context(|| format!("creating {}", config.out.display()))?;
    Ok(&config.out)
}

fn write(path: PathBuf, text: &str) -> Result<()> {
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

fn report<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string(value)?);
    Ok(())
}

pub fn explore(c: &Common) -> Result<ExitCode> {
    let s = setup(c)?;
    let dir = out_dir(&s.config)?;
    let result = run_explore(&s.space.root, &s.order, &GpuModel, &s.config.search);
    // The output location is not part of the experiment.
    let mut logged = s.config.clone();
    logged.out = PathBuf::new();
    let mut log = String::new();
    let header = Record::Header { config: Box::new(logged), order: s.order.clone() };
    writeln!(log, "{}", serde_json::to_string(&header)?)?;
    let mut csv = String::from("evaluations,cost,best\n");
    for e in &result.log {
        writeln!(log, "{}", serde_json::to_string(&Record::Event(e.clone()))?)?;
        if let (Some(cost), Some(best)) = (e.cost, e.best) {
            writeln!(csv, "{},{cost},{best}", e.evaluations)?;
        }
    }
    write(dir.join("explore.jsonl"), &log)?;
    write(dir.join("progress.csv"), &csv)?;
    let summary = serde_json::json!({
        "command": "explore",
        "best_cost": result.best_cost,
        "evaluations": result.evaluations,
        "iterations": result.iterations,
        "exhausted": result.exhausted,
    });
    let Some(best) = result.best else {
        report(&summary)?;
        eprintln!("no implementation found");
        return Ok(ExitCode::from(NO_IMPLEMENTATION));
    };
    let stored = Stored { cost: result.best_cost.unwrap(), digest: best.digest_hex(), path: result.best_path };
    write(dir.join("best.json"), &serde_json::to_string_pretty(&stored)?)?;
    write(dir.join("best.src"), &reconstruct(&best)?.emit_source())?;
    report(&summary)?;
    Ok(ExitCode::SUCCESS)
}

fn tighter(a: &Estimate, b: &Estimate) -> &'static str {
    let rel = |e: &Estimate| if e.point > 0.0 { e.ci.width() / e.point } else { f64::INFINITY };
    if rel(a) <= rel(b) {
        "knuth"
    } else {
        "chen"
    }
}

pub fn estimate(c: &Common) -> Result<ExitCode> {
    let s = setup(c)?;
    let dir = out_dir(&s.config)?;
    let e = &s.config.estimate;
    let seed = s.config.search.seed;
    let tree = CandidateTree { root: s.space.root.clone(), order: s.order.clone() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let knuth = knuth_estimate(&tree, e.knuth_iterations, e.count, e.knuth_ci, seed, &mut rng);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let chen = chen_estimate(&tree, e.chen_iterations, &depth_open_key, e.count, e.chen_ci, seed, &mut rng)?;
    let out = serde_json::json!({
        "command": "estimate",
        "tighter": tighter(&knuth, &chen),
        "knuth": knuth,
        "chen": chen,
    });
    write(dir.join("estimate.json"), &serde_json::to_string_pretty(&out)?)?;
    report(&out)?;
    Ok(ExitCode::SUCCESS)
}

pub fn deadend(c: &Common) -> Result<ExitCode> {
    let s = setup(c)?;
    let dir = out_dir(&s.config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(s.config.search.seed);
    let r = deadend_rate(&s.space.root, &s.order, s.config.deadend.trials, &mut rng);
    let out = serde_json::json!({ "command": "deadend", "seed": s.config.search.seed, "result": r });
    write(dir.join("deadend.json"), &serde_json::to_string_pretty(&out)?)?;
    report(&out)?;
    Ok(ExitCode::SUCCESS)
}

pub fn order_compare(c: &Common) -> Result<ExitCode> {
    let s = setup(c)?;
    let dir = out_dir(&s.config)?;
    let oc = &s.config.order_compare;
    let default = DecisionOrder::default_for(&s.space.root);
    let reference = match oc.reference {
        Some(r) => r,
        None => {
            let search = ispace_search::SearchConfig { budget: oc.explore_budget, ..s.config.search.clone() };
            match run_explore(&s.space.root, &default, &GpuModel, &search).best_cost {
                Some(r) => r,
                None => {
                    eprintln!("no implementation found for the reference cost");
                    return Ok(ExitCode::from(NO_IMPLEMENTATION));
                }
            }
        }
    };
    let mut csv = String::from("order,depth,nodes,pruned,fraction\n");
    let mut matched = Vec::new();
    for (name, order) in [("default", default.clone()), ("reversed", default.reversed())] {
        let p = prune_profile(&s.space.root, &order, &GpuModel, reference, oc.min_nodes, oc.node_budget)?;
        for l in &p.levels {
            writeln!(csv, "{name},{},{},{},{}", l.depth, l.nodes, l.pruned, l.fraction())?;
        }
        let level = p.matched(oc.min_nodes).or(p.levels.last()).cloned();
        matched.push(serde_json::json!({
            "order": name,
            "depth": level.as_ref().map(|l| l.depth),
            "nodes": level.as_ref().map(|l| l.nodes),
            "pruned": level.as_ref().map(|l| l.pruned),
            "fraction": level.as_ref().map(|l| l.fraction()),
            "factor": level.as_ref().map(|l| l.factor()),
        }));
    }
    write(dir.join("order_compare.csv"), &csv)?;
    let out = serde_json::json!({ "command": "order-compare", "reference": reference, "levels": matched });
    write(dir.join("order_compare.json"), &serde_json::to_string_pretty(&out)?)?;
    report(&out)?;
    Ok(ExitCode::SUCCESS)
}

pub fn enumerate(c: &Common) -> Result<ExitCode> {
    let s = setup(c)?;
    let dir = out_dir(&s.config)?;
    let tree = CandidateTree { root: s.space.root.clone(), order: s.order.clone() };
    let counts = exact_count(&tree, s.config.enumerate.node_budget).context("enumeration refused")?;
    let mut csv = String::from("depth,nodes\n");
    for (d, n) in counts.per_depth.iter().enumerate() {
        writeln!(csv, "{d},{n}")?;
    }
    write(dir.join("enumerate.csv"), &csv)?;
    let out = serde_json::json!({ "command": "enumerate", "counts": counts });
    report(&out)?;
    Ok(ExitCode::SUCCESS)
}

fn load_stored(s: &Setup, input: &Path) -> Result<ispace_core::Candidate> {
    let text = fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let stored: Stored = serde_json::from_str(&text).with_context(|| format!("parsing {}", input.display()))?;
    let c =
        replay_path(&s.space.root, &stored.path).map_err(|e| anyhow::anyhow!("replaying {}: {e}", input.display()))?;
    if c.digest_hex() != stored.digest {
        bail!("{}: candidate digest differs from the stored one", input.display());
    }
    Ok(c)
}

pub fn codegen(c: &Common, input: &Path) -> Result<ExitCode> {
    let s = setup(c)?;
    let cand = load_stored(&s, input)?;
    let src = reconstruct(&cand)?.emit_source();
    std::io::stdout().write_all(src.as_bytes())?;
    Ok(ExitCode::SUCCESS)
}

pub fn bound(c: &Common, input: Option<&Path>) -> Result<ExitCode> {
    let s = setup(c)?;
    let cand = match input {
        Some(p) => load_stored(&s, p)?,
        None => s.space.root.clone(),
    };
    let (compute, memory) = ispace_gpu::bound::bound_parts(&cand);
    let mut out = serde_json::json!({
        "command": "bound",
        "bound": compute.max(memory),
        "compute": compute,
        "memory": memory,
        "fully_specified": cand.is_fully_specified(),
    });
    if cand.is_fully_specified() {
        out["cost"] = serde_json::to_value(ispace_gpu::cost::evaluate(&reconstruct(&cand)?))?;
    }
    report(&out)?;
    Ok(ExitCode::SUCCESS)
}

/// Rebuilds the space from the log header and re-evaluates every event.
pub fn replay(_: &Common, log: &Path) -> Result<ExitCode> {
    let file = fs::File::open(log).with_context(|| format!("opening {}", log.display()))?;
    let mut lines = BufReader::new(file).lines();
    let first = lines.next().context("empty log")??;
    let Record::Header { config, order } = serde_json::from_str(&first)? else { bail!("the log has no header") };
    let s = setup_with(*config)?;
    let mut checked = 0u64;
    let mut mismatches = Vec::new();
    for (k, line) in lines.enumerate() {
        let Record::Event(e) = serde_json::from_str(&line?)? else { bail!("line {}: second header", k + 2) };
        let ok = match replay_path(&s.space.root, &e.path) {
            Err(_) => false,
            Ok(c) => {
                let bound_ok = e.bounds.last().is_none_or(|&b| b == GpuModel.bound(&c));
                let cost_ok = match e.cost {
                    Some(cost) => c.is_fully_specified() && GpuModel.evaluate(&c).ok() == Some(cost),
                    None => true,
                };
                bound_ok && cost_ok
            }
        };
        checked += 1;
        if !ok {
            mismatches.push(e.iteration);
        }
    }
    let out = serde_json::json!({
        "command": "replay",
        "order": order.choices,
        "events": checked,
        "mismatches": mismatches,
    });
    report(&out)?;
    Ok(if mismatches.is_empty() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
