//! Paired seeds across all allocators at a heavy load.

use allocbench::report::ReportAggregate;
use allocbench::{simulate, Algorithm, RunOptions, SimConfig};

fn main() -> allocbench::Result<()> {
    let (n, m) = (1000, 100_000);
    for algorithm in Algorithm::ALL {
        let mut agg = ReportAggregate::default();
        for seed in 0..10 {
            let mut cfg = SimConfig::new(n, m, 2)
                .with_seed(seed)
                .with_algorithm(algorithm);
            if algorithm == Algorithm::OnePlusBeta {
                cfg.beta = Some(0.5);
            }
            let out = simulate(&cfg, &RunOptions::default())?;
            agg = agg.merge(&ReportAggregate::from_report(&out.report));
        }
        println!(
            "{:<13} mean gap {:>6.2}  worst {:>5.1}",
            algorithm.as_str(),
            agg.mean_gap(),
            agg.max_gap()
        );
    }
    Ok(())
}
