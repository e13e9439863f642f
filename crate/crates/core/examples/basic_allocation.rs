//! Throw m balls into n bins with the estimated-gap allocator and print the
//! resulting load profile.

use allocbench::{simulate, RunOptions, SimConfig};

fn main() -> allocbench::Result<()> {
    let cfg = SimConfig::new(1000, 100_000, 2).with_seed(7);
    let out = simulate(&cfg, &RunOptions::default())?;
    let r = &out.report;
    println!("n={} m={} d={}", cfg.n, cfg.m, cfg.d);
    println!(
        "max {} min {} avg {} gap {}",
        r.max_load, r.min_load, r.true_avg, r.gap
    );
    println!("mean draws per ball {:.4}", r.mean_retries);
    for (draws, balls) in &r.retry_histogram {
        println!("  {draws} draw(s): {balls}");
    }
    Ok(())
}
