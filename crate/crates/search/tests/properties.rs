use ispace_gpu::encoding::GpuSpace;
use ispace_gpu::kernel::*;
use ispace_gpu::MachineParams;
use ispace_search::mcts::tag_score;
use ispace_search::order::replay;
use ispace_search::stats::wilson;
use ispace_search::{explore, CostModel, DecisionOrder, GpuModel, SearchConfig};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn explore_log_is_consistent(seed in 0u64..1_000_000, budget in 1u64..40, prune in any::<bool>()) {
        let spec = KernelSpec::matmul(8, 8, 8, vec![Factors::List(vec![2, 4])]);
        let s = GpuSpace::from_spec(&spec, MachineParams::default()).unwrap();
        let order = DecisionOrder::default_for(&s.root);
        let config = SearchConfig { budget, seed, prune, ..Default::default() };
        let r = explore(&s.root, &order, &GpuModel, &config);
        prop_assert!(r.evaluations <= budget);
        let mut best = None::<u64>;
        for e in &r.log {
            prop_assert!(e.bounds.windows(2).all(|w| w[0] <= w[1]));
            if let Some(cost) = e.cost {
                let leaf = replay(&s.root, &e.path).unwrap();
                prop_assert_eq!(GpuModel.evaluate(&leaf).unwrap(), cost);
                prop_assert!(*e.bounds.last().unwrap() <= cost);
                best = Some(best.map_or(cost, |b| b.min(cost)));
            }
            prop_assert_eq!(e.best, best);
        }
        prop_assert_eq!(r.best_cost, best);
    }

    #[test]
    fn wilson_interval_brackets_the_ratio(trials in 1u64..100_000, frac in 0.0f64..=1.0) {
        let successes = (trials as f64 * frac) as u64;
        let ci = wilson(successes, trials);
        let p = successes as f64 / trials as f64;
        prop_assert!(ci.lo >= -1e-12 && ci.hi <= 1.0 + 1e-12);
        prop_assert!(ci.lo <= p + 1e-12 && p <= ci.hi + 1e-12);
    }

    #[test]
    fn tag_score_prefers_more_successes(s in 0u64..1000, t in 1u64..1000, alpha in 0.0f64..20.0) {
        prop_assert!(tag_score(s + 1, t, alpha) > tag_score(s, t, alpha));
        prop_assert!(tag_score(s, t + 1, alpha) < tag_score(s, t, alpha));
    }
}
