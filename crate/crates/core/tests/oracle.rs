use proptest::prelude::*;

use allocbench::bench::{reference_allocate, reference_run};
use allocbench::multidim::MdDistribution;
use allocbench::trace::first_divergence;
use allocbench::{
    gap_report, simulate, Algorithm, Mode, RunOptions, SimConfig, Variant, WeightModel,
};

fn variant() -> impl Strategy<Value = Variant> {
    prop_oneof![
        Just(Variant::Unweighted),
        Just(Variant::Parallel),
        (0.5f64..4.0, 0.0f64..0.99)
            .prop_map(|(w, frac)| Variant::Weighted(WeightModel::uniform(w, w * frac))),
        (1usize..6)
            .prop_flat_map(|dims| (Just(dims), 1..=dims))
            .prop_map(|(dims, populated)| Variant::MultiDim {
                dims,
                populated,
                dist: MdDistribution::Uniform
            }),
    ]
}

fn config() -> impl Strategy<Value = SimConfig> {
    (
        1usize..=32,
        0u64..=512,
        any::<u64>(),
        any::<bool>(),
        1u32..5,
        any::<bool>(),
        variant(),
    )
        .prop_flat_map(|(n, m, seed, sampled, gamma, catch_up, variant)| {
            (1..=n.min(3)).prop_map(move |d| {
                let mut cfg = SimConfig::new(n, m, d)
                    .with_seed(seed)
                    .with_gamma_max(gamma)
                    .with_mode(if sampled {
                        Mode::Sampled
                    } else {
                        Mode::Numbered
                    })
                    .with_variant(variant.clone());
                cfg.catch_up = catch_up;
                cfg
            })
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn main_allocators_replay_the_reference(cfg in config()) {
        let main = simulate(&cfg, &RunOptions::traced()).unwrap().trace.unwrap();
        let reference = reference_allocate(&cfg).unwrap();
        prop_assert_eq!(first_divergence(&main, &reference), None);
    }
}

#[test]
fn pinned_small_run_matches_field_for_field() {
    let cfg = SimConfig::new(4, 8, 2).with_seed(42);
    let out = simulate(&cfg, &RunOptions::traced()).unwrap();
    let r = reference_run(&cfg).unwrap();
    let expected = gap_report(&r.bins, &[], 8.0).unwrap();
    let mut got = out.report.clone();
    // the reference report is built without outcomes
    got.retry_histogram.clear();
    got.mean_retries = expected.mean_retries;
    assert_eq!(got, expected);
    assert_eq!(out.trace.unwrap(), r.trace);
}

#[test]
fn baselines_replay_the_reference() {
    for (i, algorithm) in [
        Algorithm::OneChoice,
        Algorithm::GreedyD,
        Algorithm::GreedyDRetry,
        Algorithm::OnePlusBeta,
    ]
    .into_iter()
    .enumerate()
    {
        let mut cfg = SimConfig::new(16, 300, 2)
            .with_seed(i as u64)
            .with_algorithm(algorithm);
        if algorithm == Algorithm::OnePlusBeta {
            cfg.beta = Some(0.4);
        }
        let main = simulate(&cfg, &RunOptions::traced())
            .unwrap()
            .trace
            .unwrap();
        assert_eq!(
            first_divergence(&main, &reference_allocate(&cfg).unwrap()),
            None,
            "{algorithm}"
        );
    }
}

#[test]
fn a_perturbed_run_is_caught_at_its_first_ball() {
    let cfg = SimConfig::new(8, 50, 2).with_seed(1);
    let main = simulate(&cfg, &RunOptions::traced())
        .unwrap()
        .trace
        .unwrap();
    let other = reference_allocate(&cfg.clone().with_seed(2)).unwrap();
    assert!(first_divergence(&main, &other).is_some());
    let mut tampered = reference_allocate(&cfg).unwrap();
    tampered[20].state_hash ^= 1;
    assert_eq!(first_divergence(&main, &tampered), Some(20));
}
