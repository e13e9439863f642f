use proptest::prelude::*;

use allocbench::idea::{allocate_ball, SystemState};
use allocbench::multidim::MdDistribution;
use allocbench::report::ReportAggregate;
use allocbench::{simulate, Mode, RunOptions, SimConfig, SimRng, Variant, WeightModel};

fn cfg_strategy() -> impl Strategy<Value = SimConfig> {
    (1usize..=40, 0u64..=400, any::<u64>(), any::<bool>()).prop_flat_map(|(n, m, seed, sampled)| {
        (1..=n.min(4)).prop_map(move |d| {
            SimConfig::new(n, m, d)
                .with_seed(seed)
                .with_mode(if sampled {
                    Mode::Sampled
                } else {
                    Mode::Numbered
                })
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn outcomes_are_well_formed(cfg in cfg_strategy()) {
        let mut state = SystemState::new(cfg.n);
        let mut rng = SimRng::new(cfg.seed);
        for j in 1..=cfg.m {
            let o = allocate_ball(&mut state, j, &mut rng, &cfg);
            prop_assert!(o.retries_used >= 1 && o.retries_used <= cfg.gamma_max + 1);
            prop_assert_eq!(o.retries_used as usize, o.candidates.len());
            let last = o.candidates.last().unwrap();
            prop_assert!(last.contains(&o.destination));
            for set in &o.candidates {
                prop_assert_eq!(set.len(), cfg.d);
                let mut s = set.clone();
                s.sort_unstable();
                s.dedup();
                prop_assert_eq!(s.len(), cfg.d);
                prop_assert!(set.iter().all(|&b| b < cfg.n));
            }
            // conservation after every ball
            prop_assert_eq!(state.total_load(), j as f64);
            prop_assert!(state.bins.iter().all(|b| b.load >= 0.0 && b.est_avg >= 0.0));
            if cfg.mode == Mode::Numbered {
                let cap = j.div_ceil(cfg.n as u64) as f64 + 1.0 / cfg.d as f64;
                prop_assert!(state.bins.iter().all(|b| b.est_avg <= cap + 1e-9));
            }
            // estimates move in whole steps of 1/d
            for b in &state.bins {
                let steps = b.est_avg * cfg.d as f64;
                prop_assert!((steps - steps.round()).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn same_config_same_everything(cfg in cfg_strategy()) {
        let a = simulate(&cfg, &RunOptions::traced()).unwrap();
        let b = simulate(&cfg, &RunOptions::traced()).unwrap();
        prop_assert_eq!(a.trace, b.trace);
        prop_assert_eq!(a.report, b.report);
    }

    #[test]
    fn report_invariants(cfg in cfg_strategy()) {
        let r = simulate(&cfg, &RunOptions::default()).unwrap().report;
        prop_assert!(r.gap >= 0.0);
        if cfg.m > 0 {
            prop_assert!(r.min_load <= r.true_avg + 1e-9 && r.true_avg <= r.max_load + 1e-9);
        }
        prop_assert_eq!(r.retry_histogram.values().sum::<u64>(), cfg.m);
        prop_assert!((0.0..=1.0).contains(&r.nonpositive_gap_fraction));
    }

    #[test]
    fn weighted_conservation(seed in any::<u64>(), w in 0.5f64..5.0, frac in 0.0f64..0.99, m in 0u64..400) {
        let model = WeightModel::uniform(w, w * frac);
        let cfg = SimConfig::new(17, m, 2).with_seed(seed).with_variant(Variant::Weighted(model));
        let out = simulate(&cfg, &RunOptions::default()).unwrap();
        prop_assert!((out.report.true_avg * 17.0 - out.total_weight).abs() <= 1e-9 * (m.max(1) as f64) * w);
        prop_assert!(out.total_weight >= m as f64 * model.lower() - 1e-9);
        prop_assert!(out.total_weight <= m as f64 * model.upper() + 1e-9);
    }

    #[test]
    fn merge_order_does_not_matter(seeds in prop::collection::vec(any::<u64>(), 1..6), rot in 0usize..6) {
        let reports: Vec<_> = seeds
            .iter()
            .map(|&s| simulate(&SimConfig::new(20, 60, 2).with_seed(s), &RunOptions::default()).unwrap().report)
            .collect();
        let fold = |order: &[usize]| {
            order.iter().fold(ReportAggregate::default(), |acc, &i| acc.merge(&ReportAggregate::from_report(&reports[i])))
        };
        let forward: Vec<usize> = (0..reports.len()).collect();
        let mut rotated = forward.clone();
        rotated.rotate_left(rot % reports.len());
        rotated.reverse();
        prop_assert_eq!(fold(&forward), fold(&rotated));
    }

    #[test]
    fn md_scalar_load_is_multiple_of_f(seed in any::<u64>(), dims in 1usize..8, m in 0u64..200) {
        let populated = 1 + (seed as usize) % dims;
        let cfg = SimConfig::new(10, m, 2).with_seed(seed).with_variant(Variant::MultiDim {
            dims,
            populated,
            dist: MdDistribution::Uniform,
        });
        let out = simulate(&cfg, &RunOptions::default()).unwrap();
        prop_assert!((out.total_weight - (m as usize * populated) as f64).abs() < 1e-9);
        prop_assert!(out.md_gap.is_some());
    }
}
