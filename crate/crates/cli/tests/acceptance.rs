//! Acceptance suite: one PASS/FAIL line per criterion.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use ispace_core::dsl;
use ispace_core::host::{HostValue, ObjectId, TableHost};
use ispace_core::{oracle, Candidate, VarRef};
use ispace_gpu::bound::bound;
use ispace_gpu::encoding::{self, GpuSpace};
use ispace_gpu::kernel::*;
use ispace_gpu::realize::{order_subspace, realizable_orders, Relation, ORDER_VALUES};
use ispace_gpu::MachineParams;
use ispace_search::estimate::*;
use ispace_search::prune::prune_profile;
use ispace_search::stats::{wilson, CiMethod};
use ispace_search::walk::{deadend_rate, uniform_walk};
use ispace_search::{explore, CostModel, DecisionOrder, GpuModel, SearchConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = (bool, String);
type Criterion = (&'static str, fn() -> Outcome);

fn space(spec: &KernelSpec) -> GpuSpace {
    GpuSpace::from_spec(spec, MachineParams::default()).unwrap()
}

fn toy_matmul() -> KernelSpec {
    KernelSpec::matmul(4, 4, 4, vec![Factors::List(vec![2])])
}

fn toy_outer() -> KernelSpec {
    KernelSpec { m: 4, n: 4, ..KernelSpec::new(KernelKind::OuterProduct) }
}

fn toy_p2p() -> KernelSpec {
    KernelSpec { m: 4, n: 4, ..KernelSpec::new(KernelKind::PointToPoint) }
}

fn mid_matmul() -> KernelSpec {
    KernelSpec::matmul(32, 32, 32, vec![Factors::List(vec![2, 4]), Factors::List(vec![2, 4])])
}

fn shipped_matmul() -> KernelSpec {
    KernelSpec::matmul(256, 256, 256, vec![Factors::Range { range: [2, 32] }, Factors::Range { range: [2, 4] }])
}

fn shipped_strided() -> KernelSpec {
    KernelSpec { kernel: KernelKind::StridedMatmul, ..shipped_matmul() }
}

fn shipped_axpy() -> KernelSpec {
    KernelSpec::axpy(1 << 26, vec![Factors::Range { range: [2, 4] }, Factors::Range { range: [2, 1024] }])
}

/// Minimal implementation cost below `c`, checking the bound of every node
/// on the way. Returns `(min cost, nodes, violations)`.
fn min_completion(tree: &CandidateTree, c: &Candidate) -> (u64, u64, u64) {
    let kids = tree.children(c);
    let (best, nodes, bad) = if kids.is_empty() {
        let cost = if c.is_fully_specified() { GpuModel.evaluate(c).unwrap() } else { u64::MAX };
        (cost, 1, 0)
    } else {
        kids.iter().map(|k| min_completion(tree, k)).fold((u64::MAX, 1, 0), |a, b| (a.0.min(b.0), a.1 + b.1, a.2 + b.2))
    };
    (best, nodes, bad + u64::from(bound(c) > best))
}

fn optimum(spec: &KernelSpec) -> u64 {
    let s = space(spec);
    let tree = CandidateTree { root: s.root.clone(), order: DecisionOrder::default_for(&s.root) };
    min_completion(&tree, &s.root).0
}

fn c1_propagation_matches_oracle() -> Outcome {
    let start = Instant::now();
    let mut details = Vec::new();
    let mut ok = true;
    for (name, spec) in
        [("point_to_point 4x4", toy_p2p()), ("outer_product 4x4", toy_outer()), ("matmul 4x4x4", toy_matmul())]
    {
        let s = space(&spec);
        let by_prop = oracle::enumerate_by_propagation(&s.root, 1_000_000).unwrap();
        let root = s.family.root_space();
        let by_oracle = oracle::enumerate(root.def.clone(), root.host.clone(), 1_000_000).unwrap();
        ok &= by_prop == by_oracle && !by_prop.is_empty();
        details.push(format!("{name}: {} vs {}", by_prop.len(), by_oracle.len()));
    }
    ok &= start.elapsed().as_secs_f64() < 300.0;
    (ok, details.join(", "))
}

/// A decision by name so that it survives space extensions.
struct Dec {
    choice: String,
    args: Vec<ObjectId>,
    values: Vec<String>,
}

impl Dec {
    fn apply(&self, c: &Candidate) -> Option<Candidate> {
        let r = c.lookup(&self.choice, &self.args)?;
        let names: Vec<&str> = self.values.iter().map(String::as_str).collect();
        c.apply_decision(r, c.mask_of(r, &names)?).ok()
    }
}

fn random_decision(c: &Candidate, var: u32, rng: &mut ChaCha8Rng) -> Dec {
    let space = c.space();
    let inst = &space.instances[var as usize];
    let dom = c.domain(var);
    let sub = loop {
        let s = rng.gen::<u32>() & dom;
        if s != 0 && s != dom {
            break s;
        }
    };
    Dec {
        choice: space.choices[inst.choice as usize].name.clone(),
        args: inst.args.clone(),
        values: (0..32).filter(|b| sub & (1 << b) != 0).map(|b| space.value_name(var, b)).collect(),
    }
}

fn c2_decisions_commute() -> Outcome {
    let specs =
        [toy_matmul(), toy_outer(), KernelSpec { n: 8, ..toy_p2p() }, mid_matmul(), shipped_matmul(), shipped_axpy()];
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut trials, mut agree, mut both_dead) = (0u64, 0u64, 0u64);
    for spec in &specs {
        let s = space(spec);
        let order = DecisionOrder::default_for(&s.root);
        let mut done = 0;
        while done < 10_000 / specs.len() as u64 + 1 {
            // A random candidate: a uniform walk stopped early.
            let mut c = s.root.clone();
            let steps = rng.gen_range(0..20);
            for _ in 0..steps {
                let Some(var) = order.next_open(&c) else { break };
                let dom = c.domain(var);
                let bits: Vec<u32> = (0..32).filter(|b| dom & (1 << b) != 0).collect();
                match c.apply_decision(VarRef { var, swapped: false }, 1 << bits[rng.gen_range(0..bits.len())]) {
                    Ok(x) => c = x,
                    Err(_) => break,
                }
            }
            let open = c.open_choices();
            if open.len() < 2 {
                continue;
            }
            let a = open[rng.gen_range(0..open.len())];
            let b = loop {
                let b = open[rng.gen_range(0..open.len())];
                if b != a {
                    break b;
                }
            };
            let (d1, d2) = (random_decision(&c, a, &mut rng), random_decision(&c, b, &mut rng));
            let x = d1.apply(&c).and_then(|x| d2.apply(&x));
            let y = d2.apply(&c).and_then(|y| d1.apply(&y));
            trials += 1;
            done += 1;
            match (x, y) {
                (Some(x), Some(y)) if x.digest() == y.digest() => agree += 1,
                (None, None) => both_dead += 1,
                _ => {}
            }
        }
    }
    let ok = trials >= 10_000 && agree + both_dead == trials;
    (ok, format!("{trials} triples: {agree} equal digests, {both_dead} dead in both orders"))
}

fn order_oracle(dims: &[ObjectId], insts: &[ObjectId], mergeable: bool) -> BTreeSet<Relation> {
    let mut host = TableHost::new("order");
    for &x in dims.iter().chain(insts) {
        host.object(x.0, format!("s{}", x.0));
    }
    let all: Vec<ObjectId> = dims.iter().chain(insts).copied().collect();
    host.add_to_set("Statements", &[], &all);
    host.add_to_set("Dimensions", &[], dims);
    host.add_to_set("Insts", &[], insts);
    host.method("mergeable", move |_| Some(HostValue::Bool(mergeable)));
    let def = order_subspace(&encoding::definition());
    oracle::enumerate(Arc::new(def), Arc::new(host), 1_000_000)
        .unwrap()
        .into_iter()
        .map(|a| {
            a.values
                .iter()
                .map(|(k, v)| ((k.args[0], k.args[1]), ORDER_VALUES.iter().position(|x| x == v).unwrap()))
                .collect()
        })
        .collect()
}

fn c3_order_realizability() -> Outcome {
    let (mut cases, mut discrepancies, mut assignments) = (0, 0usize, 0usize);
    for n in 1..=4u32 {
        // Every split of the statements into dimensions and instructions.
        for mask in 0..(1u32 << n) {
            let dims: Vec<ObjectId> = (0..n).filter(|i| mask & (1 << i) != 0).map(ObjectId).collect();
            let insts: Vec<ObjectId> = (0..n).filter(|i| mask & (1 << i) == 0).map(ObjectId).collect();
            for mergeable in [false, true] {
                let trees = realizable_orders(&dims, &insts, &|_, _| mergeable);
                let encoded = order_oracle(&dims, &insts, mergeable);
                discrepancies += trees.symmetric_difference(&encoded).count();
                assignments += encoded.len();
                cases += 1;
            }
        }
    }
    (
        discrepancies == 0,
        format!("{cases} backbones, {assignments} accepted assignments, {discrepancies} discrepancies"),
    )
}

fn c4_bound_admissible_and_monotone() -> Outcome {
    let mut details = Vec::new();
    let mut violations = 0;
    for (name, spec) in [("outer_product", toy_outer()), ("point_to_point", toy_p2p()), ("matmul", toy_matmul())] {
        let s = space(&spec);
        let order = DecisionOrder::default_for(&s.root);
        for o in [order.clone(), order.reversed()] {
            let tree = CandidateTree { root: s.root.clone(), order: o };
            let (_, nodes, bad) = min_completion(&tree, &s.root);
            violations += bad;
            details.push(format!("{name}: {nodes} nodes"));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let specs = [shipped_matmul(), shipped_strided(), shipped_axpy(), mid_matmul()];
    let spaces: Vec<GpuSpace> = specs.iter().map(space).collect();
    let (mut steps, mut decreases) = (0u64, 0u64);
    'outer: loop {
        for s in &spaces {
            let order = DecisionOrder::default_for(&s.root);
            let mut c = s.root.clone();
            let mut b = bound(&c);
            while let Some(var) = order.next_open(&c) {
                let dom = c.domain(var);
                let bits: Vec<u32> = (0..32).filter(|x| dom & (1 << x) != 0).collect();
                let Ok(x) = c.apply_decision(VarRef { var, swapped: false }, 1 << bits[rng.gen_range(0..bits.len())])
                else {
                    break;
                };
                let nb = bound(&x);
                decreases += u64::from(nb < b);
                steps += 1;
                if steps >= 10_000 {
                    break 'outer;
                }
                (c, b) = (x, nb);
            }
        }
    }
    let ok = violations == 0 && decreases == 0;
    (
        ok,
        format!(
            "{}; {violations} admissibility violations; {steps} descent steps, {decreases} decreases",
            details.join(", ")
        ),
    )
}

fn c5_pruning_is_safe() -> Outcome {
    let mut details = Vec::new();
    let mut ok = true;
    for (name, spec) in [("outer_product", toy_outer()), ("point_to_point", toy_p2p()), ("matmul", toy_matmul())] {
        let s = space(&spec);
        let order = DecisionOrder::default_for(&s.root);
        let on = SearchConfig { budget: u64::MAX, max_iterations: Some(u64::MAX), ..Default::default() };
        let off = SearchConfig { prune: false, ..on.clone() };
        let a = explore(&s.root, &order, &GpuModel, &on);
        let b = explore(&s.root, &order, &GpuModel, &off);
        ok &= a.exhausted && b.exhausted && a.best_cost == b.best_cost && a.best_cost.is_some();
        details.push(format!(
            "{name}: {:?} with {} evaluations vs {:?} with {}",
            a.best_cost, a.evaluations, b.best_cost, b.evaluations
        ));
    }
    (ok, details.join(", "))
}

/// One-sided sign test: probability of at least `wins` successes out of
/// `n` fair coin flips.
fn sign_test(wins: u64, n: u64) -> f64 {
    let ln_choose = |n: u64, k: u64| -> f64 {
        let lg = |x: u64| (1..=x).map(|i| (i as f64).ln()).sum::<f64>();
        lg(n) - lg(k) - lg(n - k)
    };
    (wins..=n).map(|k| (ln_choose(n, k) - n as f64 * 2f64.ln()).exp()).sum()
}

fn c6_search_effectiveness() -> Outcome {
    let spec = toy_matmul();
    let s = space(&spec);
    let order = DecisionOrder::default_for(&s.root);
    let opt = optimum(&spec);
    let cap = 20_000u64;
    let (mut reached, mut wins, mut losses) = (0, 0u64, 0u64);
    let (mut mcts_total, mut random_total) = (0u64, 0u64);
    for seed in 0..100u64 {
        let r = explore(&s.root, &order, &GpuModel, &SearchConfig { budget: 2000, seed, ..Default::default() });
        let mcts = r.log.iter().find(|e| e.cost == Some(opt)).map(|e| e.evaluations).unwrap_or(u64::MAX);
        if mcts <= 2000 {
            reached += 1;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut random = 0u64;
        while random < cap {
            if let Some(c) = uniform_walk(&s.root, &order, &mut rng) {
                random += 1;
                if GpuModel.evaluate(&c).unwrap() == opt {
                    break;
                }
            }
        }
        mcts_total += mcts.min(cap);
        random_total += random;
        match mcts.cmp(&random) {
            std::cmp::Ordering::Less => wins += 1,
            std::cmp::Ordering::Greater => losses += 1,
            std::cmp::Ordering::Equal => {}
        }
    }
    let p = sign_test(wins, wins + losses);
    let ok = reached >= 95 && p < 0.05;
    (
        ok,
        format!(
            "optimum {opt} reached in {reached}/100 runs; mean evaluations {:.1} vs uniform {:.1}; sign test {wins}-{losses}, p = {p:.2e}",
            mcts_total as f64 / 100.0,
            random_total as f64 / 100.0
        ),
    )
}

struct Explicit {
    kids: Vec<Vec<usize>>,
}

impl Tree for Explicit {
    type Node = usize;
    fn root(&self) -> usize {
        0
    }
    fn children(&self, n: &usize) -> Vec<usize> {
        self.kids[*n].clone()
    }
}

impl Explicit {
    fn random(r: &mut ChaCha8Rng) -> Explicit {
        let mut kids = vec![vec![]];
        let mut level = vec![0];
        let depth = r.gen_range(4..=9);
        for d in 0..depth {
            let mut next = vec![];
            for &n in &level {
                if d > 0 && r.gen_bool(0.1) {
                    continue;
                }
                for _ in 0..r.gen_range(1..=3) {
                    kids.push(vec![]);
                    let c = kids.len() - 1;
                    kids[n].push(c);
                    next.push(c);
                }
            }
            level = next;
        }
        Explicit { kids }
    }
}

fn c7_estimators() -> Outcome {
    // Complete binary tree of depth 10.
    let mut kids = vec![vec![]];
    let mut level = vec![0];
    for _ in 0..10 {
        let mut next = vec![];
        for &n in &level {
            for _ in 0..2 {
                kids.push(vec![]);
                let c = kids.len() - 1;
                kids[n].push(c);
                next.push(c);
            }
        }
        level = next;
    }
    let binary = Explicit { kids };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let k = knuth_estimate(&binary, 1000, Count::Leaves, CiMethod::LogNormal, 7, &mut rng);
    let uniform_ok = k.point == 1024.0 && k.ci.width() == 0.0;

    let mut worst: f64 = 0.0;
    for t in 0..50 {
        let tree = Explicit::random(&mut rng);
        let exact = exact_count(&tree, 1_000_000).unwrap().leaves as f64;
        let e = knuth_estimate(&tree, 100_000, Count::Leaves, CiMethod::LogNormal, t, &mut rng);
        worst = worst.max((e.point - exact).abs() / exact);
    }

    let s = space(&toy_matmul());
    let tree = CandidateTree { root: s.root.clone(), order: DecisionOrder::default_for(&s.root) };
    let exact = exact_count(&tree, 1_000_000).unwrap().leaves as f64;
    let covered = (0..100u64)
        .filter(|&rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + rep);
            let e = chen_estimate(&tree, 100, &depth_open_key, Count::Leaves, CiMethod::Normal, rep, &mut rng).unwrap();
            e.ci.contains(exact)
        })
        .count();
    let ok = uniform_ok && worst < 0.02 && covered >= 90;
    (
        ok,
        format!(
            "uniform tree exact: {uniform_ok}; worst relative error on 50 random trees {:.3}%; Chen CI covers {exact} in {covered}/100",
            worst * 100.0
        ),
    )
}

fn c8_deadend_rate() -> Outcome {
    let s = space(&shipped_matmul());
    let order = DecisionOrder::default_for(&s.root);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let r = deadend_rate(&s.root, &order, 10_000, &mut rng);
    let ci = wilson(r.dead_ends, r.trials);
    (
        ci.hi < 1.0 / 3.0,
        format!("matmul 256: {}/{} = {:.4}, 95% CI [{:.4}, {:.4}]", r.dead_ends, r.trials, r.ratio, ci.lo, ci.hi),
    )
}

fn c9_decision_order() -> Outcome {
    let mut details = Vec::new();
    let mut ok = true;
    for (name, spec) in [("toy matmul", toy_matmul()), ("matmul 32", mid_matmul())] {
        let s = space(&spec);
        let default = DecisionOrder::default_for(&s.root);
        let reference = explore(&s.root, &default, &GpuModel, &SearchConfig { budget: 500, ..Default::default() })
            .best_cost
            .unwrap();
        let mut fractions = Vec::new();
        for o in [default.clone(), default.reversed()] {
            let p = prune_profile(&s.root, &o, &GpuModel, reference, 1000, 10_000_000).unwrap();
            let l = p.matched(1000).unwrap().clone();
            fractions.push((l.fraction(), l.factor(), l.depth, l.nodes));
        }
        ok &= fractions[0].0 > fractions[1].0;
        details.push(format!(
            "{name} (reference {reference}): default {:.3} (factor {:.1}, depth {}, {} nodes) vs reversed {:.3} (factor {:.1}, depth {}, {} nodes)",
            fractions[0].0, fractions[0].1, fractions[0].2, fractions[0].3, fractions[1].0, fractions[1].1, fractions[1].2, fractions[1].3
        ));
    }
    (ok, details.join("; "))
}

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests")
}

fn c10_dsl_fidelity() -> Outcome {
    let names = [
        "listing01",
        "listing02",
        "listing03",
        "listing04",
        "listing05",
        "listing06",
        "listing07",
        "listing09",
        "listing10",
        "listing11",
        "listing13",
    ];
    let read = |n: &str| std::fs::read_to_string(fixtures().join("fixtures").join(format!("{n}.space"))).unwrap();
    let mut ok = true;
    for n in names {
        match dsl::parse(&read(n)) {
            Ok(def) => {
                let printed = dsl::pretty_print(&def);
                ok &= dsl::parse(&printed).as_ref() == Ok(&def);
            }
            Err(_) => ok = false,
        }
    }
    let src: String = names[..6].iter().map(|n| read(n) + "\n").collect();
    let json = serde_json::to_string_pretty(&dsl::parse(&src).unwrap()).unwrap() + "\n";
    let golden = std::fs::read_to_string(fixtures().join("golden/listings_1_6.json")).unwrap();
    let golden_ok = json == golden;
    // The loop-nest listing: the row loop holding the load of `a` and the
    // column loop, emitted against its golden source.
    let gpu_golden = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../gpu/tests/golden/outer_product_rows.txt");
    let listing8_ok = std::fs::read_to_string(gpu_golden).is_ok_and(|g| g.contains("for n in 0..8"));
    let shipped_ok = dsl::parse(encoding::GPU_SPACE).map(|d| dsl::validate(&d).is_empty()).unwrap_or(false);
    (
        ok && golden_ok && listing8_ok && shipped_ok,
        format!(
            "{} listings parse and round-trip: {ok}; golden IR stable: {golden_ok}; loop-nest golden: {listing8_ok}; shipped space valid: {shipped_ok}",
            names.len()
        ),
    )
}

fn run_explore(out: &Path) -> (Vec<u8>, Vec<u8>) {
    let config = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/toy_matmul.toml");
    let status =
        Command::new(env!("CARGO_BIN_EXE_ispace")).arg("explore").arg(&config).arg("--out").arg(out).output().unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    (std::fs::read(out.join("explore.jsonl")).unwrap(), std::fs::read(out.join("best.src")).unwrap())
}

fn c11_determinism() -> Outcome {
    let base = std::env::temp_dir().join(format!("ispace-acceptance-{}", std::process::id()));
    let a = run_explore(&base.join("a"));
    let b = run_explore(&base.join("b"));
    let _ = std::fs::remove_dir_all(&base);
    let golden_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let golden = (
        std::fs::read(golden_dir.join("toy_explore.jsonl")).unwrap_or_default(),
        std::fs::read(golden_dir.join("toy_best.src")).unwrap_or_default(),
    );
    let runs_ok = a == b;
    let golden_ok = a == golden;
    (
        runs_ok && golden_ok,
        format!(
            "two runs identical: {runs_ok}; matches the recorded log and source: {golden_ok} ({} log bytes)",
            a.0.len()
        ),
    )
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("propagation equals brute-force enumeration", c1_propagation_matches_oracle),
        ("decisions commute", c2_decisions_commute),
        ("order encoding equals realizable loop nests", c3_order_realizability),
        ("bound admissible and monotone", c4_bound_admissible_and_monotone),
        ("pruning keeps the optimum", c5_pruning_is_safe),
        ("search reaches the optimum", c6_search_effectiveness),
        ("size estimators", c7_estimators),
        ("dead-end rate", c8_deadend_rate),
        ("decision order", c9_decision_order),
        ("definition-language fidelity", c10_dsl_fidelity),
        ("end-to-end determinism", c11_determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let id = k + 1;
        if !filter.is_empty() && !filter.iter().any(|x| x == &id.to_string()) {
            continue;
        }
        let start = Instant::now();
        let (ok, details) = match std::panic::catch_unwind(f) {
            Ok(r) => r,
            Err(e) => (
                false,
                format!(
                    "panicked: {:?}",
                    e.downcast_ref::<String>().map(String::as_str).or(e.downcast_ref::<&str>().copied())
                ),
            ),
        };
        let verdict = if ok { "PASS" } else { "FAIL" };
        println!("criterion {id:>2} {verdict} [{name}] {details} ({:.1}s)", start.elapsed().as_secs_f64());
        failed += usize::from(!ok);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
