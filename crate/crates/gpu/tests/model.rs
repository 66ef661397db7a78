use std::collections::BTreeMap;

use ispace_core::candidate::Candidate;
use ispace_core::host::ObjectId;
use ispace_core::oracle;
use ispace_core::space::VarRef;
use ispace_gpu::backbone::{Backbone, BackboneError};
use ispace_gpu::bound::{bound, bound_parts};
use ispace_gpu::cost::evaluate;
use ispace_gpu::encoding::{self, GpuSpace};
use ispace_gpu::kernel::*;
use ispace_gpu::machine::MemSpace;
use ispace_gpu::nest::{reconstruct, DimKind, LoopNest, LoopNode, Node};
use ispace_gpu::MachineParams;

fn space(spec: &KernelSpec) -> GpuSpace {
    GpuSpace::from_spec(spec, MachineParams::default()).unwrap()
}

fn decide(c: &Candidate, choice: &str, args: &[&str], values: &[&str]) -> Candidate {
    let ids: Vec<ObjectId> = args.iter().map(|a| encoding::object(c, a).unwrap()).collect();
    let r = c.lookup(choice, &ids).unwrap();
    c.apply_decision(r, c.mask_of(r, values).unwrap()).unwrap()
}

/// Every fully specified descendant, smallest value first.
fn leaves(c: &Candidate, out: &mut Vec<Candidate>) {
    let open = c.open_choices();
    let Some(&var) = open.first() else {
        out.push(c.clone());
        return;
    };
    let r = VarRef { var, swapped: false };
    let dom = c.domain(var);
    for bit in 0..32 {
        if dom & (1 << bit) != 0 {
            if let Ok(child) = c.apply_decision(r, 1 << bit) {
                leaves(&child, out);
            }
        }
    }
}

/// First fully specified descendant in value order.
fn first_leaf(c: &Candidate) -> Option<Candidate> {
    let open = c.open_choices();
    let Some(&var) = open.first() else { return Some(c.clone()) };
    let r = VarRef { var, swapped: false };
    let dom = c.domain(var);
    (0..32).filter(|b| dom & (1 << b) != 0).find_map(|b| c.apply_decision(r, 1 << b).ok().and_then(|x| first_leaf(&x)))
}

#[test]
fn strip_mining_respects_divisibility() {
    let mut b = Backbone::new("t");
    let l = b.add_logical("x", 1024, 0).unwrap();
    b.strip_mine(l, &[vec![2, 32], vec![2, 4]]).unwrap();
    let names: Vec<&str> = b.dims.iter().map(|d| d.name.as_str()).collect();
    assert_eq!(names, ["x0", "x1", "x2"]);
    assert_eq!(b.universe(b.dims[1].id), Some(&[2, 32][..]));
    let mut b = Backbone::new("t");
    let l = b.add_logical("x", 48, 0).unwrap();
    assert!(matches!(b.strip_mine(l, &[vec![32]]), Err(BackboneError::NotDivisible { .. })));
    let mut b = Backbone::new("t");
    assert!(b.add_logical("x", 0, 0).is_err());
}

/// Outer product where the row loop holds the load of `a` and the column
/// loop, which holds everything else.
fn row_outer_nesting() -> (GpuSpace, Candidate) {
    let mut spec = KernelSpec::new(KernelKind::OuterProduct);
    spec.m = 4;
    spec.n = 8;
    let s = space(&spec);
    let c = decide(&s.root, "order", &["m", "n"], &["OUTER"]);
    let c = decide(&c, "order", &["ld_a", "n"], &["BEFORE"]);
    let c = decide(&c, "order", &["ld_b", "mul"], &["BEFORE"]);
    let c = decide(&c, "dim_kind", &["m"], &["LOOP"]);
    let c = decide(&c, "dim_kind", &["n"], &["LOOP"]);
    let c = decide(&c, "cache", &["ld_a"], &["L1"]);
    let c = decide(&c, "cache", &["ld_b"], &["L1"]);
    let c = decide(&c, "cache", &["st_c"], &["NONE"]);
    (s, c)
}

fn loop_(nest: &LoopNest, name: &str, kind: DimKind, size: u64, children: Vec<Node>) -> Node {
    let id = nest.backbone.object_by_name(name).unwrap();
    Node::Loop(LoopNode { dims: vec![id], kind, size, children })
}

fn inst(nest: &LoopNest, name: &str) -> Node {
    Node::Inst(nest.backbone.object_by_name(name).unwrap())
}

#[test]
fn row_outer_nesting_is_reconstructed_and_emitted() {
    let (_, c) = row_outer_nesting();
    assert!(c.is_fully_specified(), "{}", c.text_dump());
    let nest = reconstruct(&c).unwrap();
    let expected = vec![loop_(
        &nest,
        "m",
        DimKind::Loop,
        4,
        vec![
            inst(&nest, "ld_a"),
            loop_(&nest, "n", DimKind::Loop, 8, vec![inst(&nest, "ld_b"), inst(&nest, "mul"), inst(&nest, "st_c")]),
        ],
    )];
    assert_eq!(nest.roots, expected);
    let golden = include_str!("golden/outer_product_rows.txt");
    assert_eq!(nest.emit_source(), golden);
    // 4 + 32 instruction issues per statement of the inner loop, plus loops.
    let cost = evaluate(&nest);
    assert_eq!(cost.compute, 4 + 3 * 32 + 2 * 4 + 2 * 32);
    assert_eq!(cost.global_memory, 4 * 10 + 32 * 10 + 32 * 40);
    assert_eq!(cost.shared_memory, 0);
    assert_eq!(cost.sync, 0);
    assert_eq!(cost.total, cost.memory());
}

#[test]
fn loop_and_unroll_overheads() {
    let (_, c) = row_outer_nesting();
    let mut nest = reconstruct(&c).unwrap();
    // A single statement in a loop of 8: 8 issues and 8 loop iterations.
    let mul = nest.backbone.object_by_name("mul").unwrap();
    nest.roots = vec![loop_(&nest, "n", DimKind::Loop, 8, vec![Node::Inst(mul)])];
    assert_eq!(evaluate(&nest).compute, 24);
    nest.roots = vec![loop_(&nest, "n", DimKind::Unroll, 8, vec![Node::Inst(mul)])];
    assert_eq!(evaluate(&nest).compute, 8);
    nest.roots = vec![];
    assert_eq!(evaluate(&nest).total, 0);
    assert_eq!(nest.emit_source().lines().filter(|l| l.contains('=')).count(), 0);
}

#[test]
fn cost_grows_with_loop_sizes() {
    let (_, c) = row_outer_nesting();
    let mut nest = reconstruct(&c).unwrap();
    let base = evaluate(&nest).total;
    for grow in [1usize, 0] {
        let mut n = nest.clone();
        fn scale(nodes: &mut [Node], depth: usize, target: usize) {
            for node in nodes {
                if let Node::Loop(l) = node {
                    if depth == target {
                        l.size *= 2;
                    }
                    scale(&mut l.children, depth + 1, target);
                }
            }
        }
        scale(&mut n.roots, 0, grow);
        assert!(evaluate(&n).total > base);
    }
    nest.roots.clear();
    assert!(evaluate(&nest).total < base);
}

/// Pairwise order of statements recovered from the tree.
fn tree_orders(nest: &LoopNest) -> BTreeMap<(ObjectId, ObjectId), &'static str> {
    fn collect(nodes: &[Node], path: &mut Vec<usize>, out: &mut Vec<(Vec<ObjectId>, Vec<usize>, bool)>) {
        for (k, n) in nodes.iter().enumerate() {
            path.push(k);
            match n {
                Node::Inst(i) => out.push((vec![*i], path.clone(), false)),
                Node::Loop(l) => {
                    out.push((l.dims.clone(), path.clone(), true));
                    collect(&l.children, path, out);
                }
            }
            path.pop();
        }
    }
    let mut items = Vec::new();
    collect(&nest.roots, &mut Vec::new(), &mut items);
    let mut at = BTreeMap::new();
    for (ids, path, _) in &items {
        for id in ids {
            at.insert(*id, path.clone());
        }
    }
    let mut out = BTreeMap::new();
    for (&a, pa) in &at {
        for (&b, pb) in at.range(a..).skip(1) {
            let common = pa.iter().zip(pb).take_while(|(x, y)| x == y).count();
            let v = if pa == pb {
                "MERGED"
            } else if common == pa.len() {
                "OUTER"
            } else if common == pb.len() {
                "INNER"
            } else if pa[common] < pb[common] {
                "BEFORE"
            } else {
                "AFTER"
            };
            out.insert((a, b), v);
        }
    }
    out
}

fn check_leaves(spec: &KernelSpec) -> usize {
    let s = space(spec);
    let mut all = Vec::new();
    leaves(&s.root, &mut all);
    assert!(!all.is_empty());
    for c in &all {
        assert!(oracle::check_candidate(c).unwrap());
        let nest = reconstruct(c).unwrap();
        let orders = tree_orders(&nest);
        let b = encoding::backbone_of(c).backbone.clone();
        let stmts = b.statements();
        for (k, &a) in stmts.iter().enumerate() {
            for &bb in &stmts[k + 1..] {
                let r = c.lookup("order", &[a, bb]).unwrap();
                let decided = c.values(r);
                assert_eq!(decided, [orders[&(a, bb)]], "{a:?} {bb:?}");
            }
        }
        let threads: u64 = nest_threads(&nest.roots);
        assert!(threads <= nest.machine.max_threads_per_block as u64);
        let cost = evaluate(&nest);
        assert_eq!(bound(c), cost.compute.max(cost.memory()));
    }
    all.len()
}

/// Threads per block: product over distinct thread dimensions.
fn nest_threads(nodes: &[Node]) -> u64 {
    let mut best = 1;
    for n in nodes {
        if let Node::Loop(l) = n {
            let inner = nest_threads(&l.children);
            let here = if l.kind == DimKind::Thread { l.size * inner } else { inner };
            best = best.max(here);
        }
    }
    best
}

#[test]
fn toy_leaves_round_trip_and_bound_is_exact() {
    let mut p2p = KernelSpec::new(KernelKind::PointToPoint);
    p2p.m = 4;
    p2p.n = 4;
    assert_eq!(check_leaves(&p2p), 1032);
    let mut outer = KernelSpec::new(KernelKind::OuterProduct);
    outer.m = 4;
    outer.n = 4;
    assert_eq!(check_leaves(&outer), 768);
}

#[test]
fn bound_is_admissible_along_descents() {
    let s = space(&KernelSpec::matmul(4, 4, 4, vec![Factors::List(vec![2])]));
    // Walk the first branch of every open choice: bounds never decrease and
    // stay below the leaf cost.
    let mut c = s.root.clone();
    let mut path = vec![bound(&c)];
    while let Some(&var) = c.open_choices().first() {
        let r = VarRef { var, swapped: false };
        let dom = c.domain(var);
        c = (0..32).filter(|b| dom & (1 << b) != 0).find_map(|b| c.apply_decision(r, 1 << b).ok()).unwrap();
        path.push(bound(&c));
    }
    assert!(path.windows(2).all(|w| w[0] <= w[1]), "{path:?}");
    let cost = evaluate(&reconstruct(&c).unwrap());
    assert!(*path.last().unwrap() <= cost.total);
    let (compute, memory) = bound_parts(&s.root);
    assert!(compute > 0 && memory > 0);
}

#[test]
fn strided_load_shows_stride() {
    let mut spec = KernelSpec::matmul(4, 4, 4, vec![Factors::List(vec![2])]);
    spec.kernel = KernelKind::StridedMatmul;
    let s = space(&spec);
    let leaf = first_leaf(&s.root).unwrap();
    let src = reconstruct(&leaf).unwrap().emit_source();
    let line = src.lines().find(|l| l.contains("load") && l.contains(" A[")).unwrap();
    assert!(line.contains("32*"), "{line}");
    assert_eq!(src, reconstruct(&leaf).unwrap().emit_source());
}

#[test]
fn lone_instruction_is_a_leaf() {
    let mut b = Backbone::new("one");
    let r = b.add_region("X", 4, 1);
    b.add_inst(
        "st",
        ispace_gpu::backbone::Op::Store,
        vec![ispace_gpu::backbone::Operand::Constant(1)],
        vec![],
        Some(ispace_gpu::backbone::Access { region: r, index: vec![] }),
    );
    let s = GpuSpace::new(b, MachineParams::default(), &[]).unwrap();
    let leaf = first_leaf(&s.root).unwrap();
    let nest = reconstruct(&leaf).unwrap();
    assert_eq!(nest.roots.len(), 1);
    assert!(matches!(nest.roots[0], Node::Inst(_)));
    assert_eq!(nest.mem_space.values().copied().collect::<Vec<_>>(), [MemSpace::Global]);
}

proptest::proptest! {
    #![proptest_config(proptest::prelude::ProptestConfig::with_cases(48))]

    #[test]
    fn random_descents_keep_the_bound_below_the_cost(
        m in 2u32..7, n in 2u32..7, k in 2u32..7, f in 1u32..3, seed in 0u64..u64::MAX,
    ) {
        use rand::{Rng, SeedableRng};
        let spec = KernelSpec::matmul(1 << m, 1 << n, 1 << k, vec![Factors::List(vec![1 << f])]);
        let s = space(&spec);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut c = s.root.clone();
        let mut last = bound(&c);
        while let Some(&var) = c.open_choices().first() {
            let dom = c.domain(var);
            let bits: Vec<u32> = (0..32).filter(|b| dom & (1 << b) != 0).collect();
            let Ok(next) = c.apply_decision(VarRef { var, swapped: false }, 1 << bits[rng.gen_range(0..bits.len())]) else {
                return Ok(());
            };
            let b = bound(&next);
            proptest::prop_assert!(b >= last);
            last = b;
            c = next;
        }
        let cost = evaluate(&reconstruct(&c).unwrap());
        proptest::prop_assert_eq!(last, cost.compute.max(cost.memory()));
        proptest::prop_assert!(last <= cost.total);
    }
}
