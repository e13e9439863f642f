use allocbench::{simulate, Algorithm, RunOptions, SimConfig, Variant, WeightModel};

fn run(cfg: &SimConfig) -> allocbench::RunOutput {
    simulate(cfg, &RunOptions::default()).unwrap()
}

#[test]
fn one_choice_max_load_at_m_equals_n() {
    for seed in 0..100 {
        let cfg = SimConfig::new(1000, 1000, 1)
            .with_seed(seed)
            .with_algorithm(Algorithm::OneChoice);
        let max = run(&cfg).report.max_load;
        assert!((2.0..=6.0).contains(&max), "seed {seed}: {max}");
    }
}

/// The frequency of a max load of 7 or more matches the binomial tail.
#[test]
fn one_choice_tail_frequency_matches_binomial() {
    use statrs::distribution::{Binomial, DiscreteCDF};
    let n = 1000u64;
    let per_bin = 1.0 - Binomial::new(1.0 / n as f64, n).unwrap().cdf(6);
    let per_trial = 1.0 - (1.0 - per_bin).powi(n as i32);
    let trials = 400u64;
    let heavy = (0..trials)
        .filter(|&seed| {
            let cfg = SimConfig::new(n as usize, n, 1)
                .with_seed(seed)
                .with_algorithm(Algorithm::OneChoice);
            run(&cfg).report.max_load >= 7.0
        })
        .count() as f64;
    let expect = per_trial * trials as f64;
    let sd = (expect * (1.0 - per_trial)).sqrt();
    assert!(
        (heavy - expect).abs() <= 4.0 * sd,
        "observed {heavy}, expected {expect:.1} +- {sd:.1}"
    );
}

#[test]
fn greedy_two_max_load_at_m_equals_n() {
    let hits = (0..100)
        .filter(|&seed| {
            let cfg = SimConfig::new(10_000, 10_000, 2)
                .with_seed(seed)
                .with_algorithm(Algorithm::GreedyD);
            matches!(run(&cfg).report.max_load as u32, 3 | 4)
        })
        .count();
    assert!(hits >= 95, "{hits}/100");
}

#[test]
fn one_plus_beta_gap_sits_above_idea() {
    let mut beta_sum = 0.0;
    let mut idea_sum = 0.0;
    for seed in 0..20 {
        let base = SimConfig::new(1000, 100_000, 2).with_seed(seed);
        beta_sum += run(&base
            .clone()
            .with_algorithm(Algorithm::OnePlusBeta)
            .with_beta(0.5))
        .report
        .gap;
        idea_sum += run(&base).report.gap;
    }
    assert!(beta_sum > 2.0 * idea_sum, "beta {beta_sum} idea {idea_sum}");
}

#[test]
fn retry_cap_one_is_plain_greedy() {
    let cfg = SimConfig::new(64, 2000, 2).with_seed(9);
    let greedy = simulate(
        &cfg.clone().with_algorithm(Algorithm::GreedyD),
        &RunOptions::traced(),
    )
    .unwrap();
    let retry = simulate(
        &cfg.with_algorithm(Algorithm::GreedyDRetry)
            .with_gamma_max(1),
        &RunOptions::traced(),
    )
    .unwrap();
    assert_eq!(greedy.trace, retry.trace);
}

/// Retries alone should not reach the estimated-gap allocation: two sets of
/// two candidates keep a strictly larger gap in at least 90% of paired seeds.
#[test]
fn greedy_retry_cap_two_loses_to_idea_on_paired_seeds() {
    let trials = 50;
    let wins = (0..trials)
        .filter(|&seed| {
            let base = SimConfig::new(10_000, 1_000_000, 2).with_seed(seed);
            let idea = run(&base).report.gap;
            let retry = run(&base
                .with_algorithm(Algorithm::GreedyDRetry)
                .with_gamma_max(2))
            .report
            .gap;
            retry > idea
        })
        .count();
    assert!(
        wins * 10 >= trials as usize * 9,
        "greedy-retry above idea in {wins}/{trials}"
    );
}

#[test]
fn weighted_gap_does_not_grow_with_m() {
    let model = WeightModel::uniform(2.0, 1.0);
    let bound = 2.0 * (model.w_star + model.k);
    for seed in 0..5 {
        for ratio in [10, 100] {
            let cfg = SimConfig::new(1000, 1000 * ratio, 2)
                .with_seed(seed)
                .with_variant(Variant::Weighted(model));
            let gap = run(&cfg).report.gap;
            assert!(gap < bound, "seed {seed} m/n {ratio}: {gap} >= {bound}");
        }
    }
}
