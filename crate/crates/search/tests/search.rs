use ispace_core::{Candidate, VarRef};
use ispace_gpu::backbone::{Access, Backbone, Op, Operand};
use ispace_gpu::encoding::GpuSpace;
use ispace_gpu::kernel::*;
use ispace_gpu::MachineParams;
use ispace_search::estimate::{exact_count, exact_count_by_levels, CandidateTree};
use ispace_search::mcts::{Search, SearchConfig};
use ispace_search::order::{replay, DecisionOrder, OrderError};
use ispace_search::walk::deadend_rate;
use ispace_search::{explore, CostModel, GpuModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn toy_matmul() -> GpuSpace {
    GpuSpace::from_spec(&KernelSpec::matmul(4, 4, 4, vec![Factors::List(vec![2])]), MachineParams::default()).unwrap()
}

fn toy_outer() -> GpuSpace {
    let mut spec = KernelSpec::new(KernelKind::OuterProduct);
    spec.m = 4;
    spec.n = 4;
    GpuSpace::from_spec(&spec, MachineParams::default()).unwrap()
}

/// Minimal cost over every implementation, by exhaustive evaluation.
fn oracle_optimum(root: &Candidate) -> u64 {
    fn go(c: &Candidate, best: &mut u64) {
        let open = c.open_choices();
        let Some(&var) = open.first() else {
            *best = (*best).min(GpuModel.evaluate(c).unwrap());
            return;
        };
        let dom = c.domain(var);
        for b in (0..32).filter(|b| dom & (1 << b) != 0) {
            if let Ok(x) = c.apply_decision(VarRef { var, swapped: false }, 1 << b) {
                go(&x, best);
            }
        }
    }
    let mut best = u64::MAX;
    go(root, &mut best);
    best
}

#[test]
fn default_order_lists_priority_choices_first() {
    let s = toy_matmul();
    let o = DecisionOrder::default_for(&s.root);
    assert_eq!(&o.choices[..6], ["size", "dim_kind", "thread_level", "mem_space", "order", "cache"]);
    assert_eq!(o.reversed().choices.first(), o.choices.last());
    let custom = DecisionOrder::from_list(&s.root, &["cache".into()]).unwrap();
    assert_eq!(custom.choices[0], "cache");
    assert_eq!(custom.choices.len(), o.choices.len());
    assert_eq!(DecisionOrder::from_list(&s.root, &["nope".into()]), Err(OrderError::Unknown("nope".into())));
}

#[test]
fn explore_finds_the_toy_optimum_deterministically() {
    let s = toy_matmul();
    let order = DecisionOrder::default_for(&s.root);
    let optimum = oracle_optimum(&s.root);
    let config = SearchConfig { budget: 2000, seed: 3, ..Default::default() };
    let a = explore(&s.root, &order, &GpuModel, &config);
    let b = explore(&s.root, &order, &GpuModel, &config);
    assert_eq!(a.best_cost, Some(optimum));
    assert_eq!(serde_json::to_string(&a.log).unwrap(), serde_json::to_string(&b.log).unwrap());
    let best = a.best.unwrap();
    assert_eq!(replay(&s.root, &a.best_path).unwrap().digest(), best.digest());
    let mut last = u64::MAX;
    for e in &a.log {
        let best = e.best.unwrap_or(u64::MAX);
        assert!(best <= last);
        last = best;
        if let Some(cost) = e.cost {
            assert!(e.bounds.iter().all(|&b| b <= cost), "{e:?}");
            assert_eq!(e.bounds.len(), e.path.len() + 1);
            let leaf = replay(&s.root, &e.path).unwrap();
            assert_eq!(GpuModel.evaluate(&leaf).unwrap(), cost);
        }
    }
}

#[test]
fn pruning_keeps_the_optimum() {
    for s in [toy_outer(), toy_matmul()] {
        let order = DecisionOrder::default_for(&s.root);
        let on = SearchConfig { budget: u64::MAX, max_iterations: Some(u64::MAX), ..Default::default() };
        let off = SearchConfig { prune: false, ..on.clone() };
        let a = explore(&s.root, &order, &GpuModel, &on);
        let b = explore(&s.root, &order, &GpuModel, &off);
        assert!(a.exhausted && b.exhausted);
        assert_eq!(a.best_cost, b.best_cost);
        assert_eq!(a.best_cost, Some(oracle_optimum(&s.root)));
        assert!(a.evaluations < b.evaluations);
    }
}

#[test]
fn zero_budget_finds_nothing() {
    let s = toy_matmul();
    let r = explore(
        &s.root,
        &DecisionOrder::default_for(&s.root),
        &GpuModel,
        &SearchConfig { budget: 0, ..Default::default() },
    );
    assert_eq!((r.best_cost, r.evaluations, r.log.len()), (None, 0, 0));
}

#[test]
fn single_implementation_takes_one_rollout() {
    let mut b = Backbone::new("one");
    let r = b.add_region("X", 4, 1);
    b.add_inst("st", Op::Store, vec![Operand::Constant(1)], vec![], Some(Access { region: r, index: vec![] }));
    let fixed = vec![FixedDecision { choice: "cache".into(), args: vec!["*".into()], values: vec!["NONE".into()] }];
    let s = GpuSpace::new(b, MachineParams::default(), &fixed).unwrap();
    assert!(s.root.is_fully_specified());
    let r = explore(&s.root, &DecisionOrder::default_for(&s.root), &GpuModel, &SearchConfig::default());
    assert_eq!((r.evaluations, r.iterations), (1, 1));
    assert!(r.exhausted);
    assert_eq!(r.best_cost, Some(GpuModel.evaluate(&s.root).unwrap()));
}

#[test]
fn resumed_search_continues_identically() {
    let s = GpuSpace::from_spec(
        &KernelSpec::matmul(32, 32, 32, vec![Factors::List(vec![2, 4]), Factors::List(vec![2, 4])]),
        MachineParams::default(),
    )
    .unwrap();
    let order = DecisionOrder::default_for(&s.root);
    let config = SearchConfig { budget: 12, seed: 9, ..Default::default() };
    let full = explore(&s.root, &order, &GpuModel, &config);
    let mut first = Search::new(&s.root, order.clone(), &GpuModel, SearchConfig { budget: 5, ..config.clone() });
    first.run();
    let json = serde_json::to_string(&first.checkpoint()).unwrap();
    let mut cp: ispace_search::mcts::Checkpoint = serde_json::from_str(&json).unwrap();
    cp.config.budget = 12;
    let mut second = Search::resume(&s.root, &GpuModel, cp).unwrap();
    second.run();
    let mut log = first.log().to_vec();
    log.extend(second.log().iter().cloned());
    assert_eq!(log, full.log);
    assert_eq!(second.result().best_cost, full.best_cost);
    // A checkpoint of another space is refused.
    let other = toy_matmul();
    let cp = serde_json::from_str(&json).unwrap();
    assert!(Search::resume(&other.root, &GpuModel, cp).is_err());
}

/// Probability that a uniform walk meets a failing decision.
fn exact_deadend_probability(c: &Candidate, order: &DecisionOrder) -> f64 {
    let Some(var) = order.next_open(c) else { return 0.0 };
    let dom = c.domain(var);
    let bits: Vec<u32> = (0..32).filter(|b| dom & (1 << b) != 0).collect();
    let total: f64 = bits
        .iter()
        .map(|&b| match c.apply_decision(VarRef { var, swapped: false }, 1 << b) {
            Ok(x) => exact_deadend_probability(&x, order),
            Err(_) => 1.0,
        })
        .sum();
    total / bits.len() as f64
}

#[test]
fn deadend_rate_matches_exact_probability() {
    let s = toy_matmul();
    let order = DecisionOrder::default_for(&s.root);
    let exact = exact_deadend_probability(&s.root, &order);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let r = deadend_rate(&s.root, &order, 10_000, &mut rng);
    assert!(r.ci.contains(exact), "{r:?} vs {exact}");
    assert!(exact > 0.0);
}

#[test]
fn candidate_tree_counts_agree() {
    let s = toy_matmul();
    let tree = CandidateTree { root: s.root.clone(), order: DecisionOrder::default_for(&s.root) };
    let a = exact_count(&tree, 1_000_000).unwrap();
    let b = exact_count_by_levels(&tree, 1_000_000).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.leaves, 65_280);
    assert_eq!(a.dead_leaves, 0);
    assert_eq!(a.nodes, 95_160);
    assert!(exact_count(&tree, 1000).is_err());
}
