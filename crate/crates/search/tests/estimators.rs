use ispace_search::estimate::*;
use ispace_search::stats::CiMethod;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Explicit tree: children lists indexed by node.
struct Explicit {
    kids: Vec<Vec<usize>>,
}

impl Explicit {
    fn add(&mut self) -> usize {
        self.kids.push(vec![]);
        self.kids.len() - 1
    }

    fn complete(arity: usize, depth: usize) -> Explicit {
        let mut t = Explicit { kids: vec![vec![]] };
        let mut level = vec![0];
        for _ in 0..depth {
            let mut next = vec![];
            for &n in &level {
                for _ in 0..arity {
                    let c = t.add();
                    t.kids[n].push(c);
                    next.push(c);
                }
            }
            level = next;
        }
        t
    }

    fn height(&self, n: usize) -> usize {
        self.kids[n].iter().map(|&c| 1 + self.height(c)).max().unwrap_or(0)
    }
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

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn uniform_trees_are_estimated_exactly() {
    let t = Explicit::complete(2, 10);
    let exact = exact_count(&t, 10_000).unwrap();
    assert_eq!((exact.leaves, exact.nodes), (1024, 2047));
    assert_eq!(exact, exact_count_by_levels(&t, 10_000).unwrap());
    let k = knuth_estimate(&t, 100, Count::Leaves, CiMethod::LogNormal, 1, &mut rng(1));
    assert_eq!((k.point, k.ci.lo, k.ci.hi), (1024.0, 1024.0, 1024.0));
    let k = knuth_estimate(&t, 100, Count::Nodes, CiMethod::Normal, 1, &mut rng(1));
    assert_eq!((k.point, k.ci.width()), (2047.0, 0.0));
    for iterations in [1, 7] {
        let c = chen_estimate(&t, iterations, &|_, d| -(d as i64), Count::Leaves, CiMethod::Normal, 2, &mut rng(2))
            .unwrap();
        assert_eq!((c.point, c.ci.width()), (1024.0, 0.0));
    }
}

#[test]
fn single_node_tree() {
    let t = Explicit { kids: vec![vec![]] };
    assert_eq!(knuth_estimate(&t, 10, Count::Leaves, CiMethod::LogNormal, 0, &mut rng(0)).point, 1.0);
    let e = exact_count(&t, 1).unwrap();
    assert_eq!((e.leaves, e.nodes, e.per_depth.clone()), (1, 1, vec![1]));
    assert_eq!(exact_count(&Explicit::complete(2, 3), 10), Err(TooLarge { budget: 10 }));
}

fn random_tree(r: &mut ChaCha8Rng) -> Explicit {
    let mut t = Explicit { kids: vec![vec![]] };
    let mut level = vec![0];
    let depth = r.gen_range(4..=9);
    for d in 0..depth {
        let mut next = vec![];
        for &n in &level {
            if d > 0 && r.gen_bool(0.1) {
                continue;
            }
            for _ in 0..r.gen_range(1..=3) {
                let c = t.add();
                t.kids[n].push(c);
                next.push(c);
            }
        }
        level = next;
    }
    t
}

#[test]
fn knuth_is_unbiased_on_random_trees() {
    let mut r = rng(11);
    for k in 0..50 {
        let t = random_tree(&mut r);
        let exact = exact_count(&t, 1_000_000).unwrap();
        assert!(exact.leaves <= 100_000);
        let e = knuth_estimate(&t, 100_000, Count::Leaves, CiMethod::LogNormal, k, &mut rng(k));
        let rel = (e.point - exact.leaves as f64).abs() / exact.leaves as f64;
        assert!(rel < 0.02, "tree {k}: {} vs {}", e.point, exact.leaves);
        let e = knuth_estimate(&t, 100_000, Count::Nodes, CiMethod::LogNormal, k, &mut rng(k));
        let rel = (e.point - exact.nodes as f64).abs() / exact.nodes as f64;
        assert!(rel < 0.02, "tree {k}: {} vs {}", e.point, exact.nodes);
    }
}

/// A spine of `len` nodes, each also carrying a complete binary bush.
fn caterpillar(len: usize, bush: usize) -> Explicit {
    let mut t = Explicit { kids: vec![vec![]] };
    let mut spine = 0;
    for _ in 0..len {
        let b = Explicit::complete(2, bush);
        let offset = t.kids.len();
        for ks in b.kids {
            t.kids.push(ks.into_iter().map(|c| c + offset).collect());
        }
        let next = t.add();
        t.kids[spine] = vec![next, offset];
        spine = next;
    }
    t
}

#[test]
fn strata_tame_skewed_trees() {
    let t = caterpillar(20, 6);
    let heights: Vec<usize> = (0..t.kids.len()).map(|n| t.height(n)).collect();
    let exact = exact_count(&t, 1_000_000).unwrap().leaves as f64;
    assert_eq!(exact, 1.0 + 20.0 * 64.0);
    let k = knuth_estimate(&t, 100_000, Count::Leaves, CiMethod::Normal, 3, &mut rng(3));
    let key = |n: &usize, d: usize| (-(d as i64), heights[*n]);
    let c = chen_estimate(&t, 1_000, &key, Count::Leaves, CiMethod::Normal, 3, &mut rng(3)).unwrap();
    assert!(k.ci.contains(exact) || (k.point - exact).abs() / exact < 0.05);
    assert!(c.ci.contains(exact));
    assert!(k.ci.width() > c.ci.width(), "knuth {:?} chen {:?}", k.ci, c.ci);
}

#[test]
fn stratifier_must_decrease() {
    let t = Explicit::complete(2, 3);
    let err = chen_probe(&t, &|_, _| 0, Count::Leaves, &mut rng(0)).unwrap_err();
    assert!(matches!(err, StratifierError::NotDecreasing { depth: 1, .. }));
    assert!(chen_probe(&t, &|_, d| usize::MAX - d, Count::Leaves, &mut rng(0)).is_ok());
}
