//! Record a per-ball trace and replay it against the slow reference
//! allocator. The first differing ball is reported if they disagree.

use allocbench::bench::reference_allocate;
use allocbench::trace::first_divergence;
use allocbench::{simulate, Mode, RunOptions, SimConfig};

fn main() -> allocbench::Result<()> {
    let cfg = SimConfig::new(32, 500, 3)
        .with_seed(99)
        .with_mode(Mode::Sampled);
    let trace = simulate(&cfg, &RunOptions::traced())?.trace.unwrap();
    for rec in trace.iter().take(3) {
        println!("{}", serde_json::to_string(rec).unwrap());
    }
    let reference = reference_allocate(&cfg)?;
    match first_divergence(&trace, &reference) {
        None => println!("{} balls replayed identically", trace.len()),
        Some(i) => println!("diverged at ball {}", i + 1),
    }
    let other = reference_allocate(&cfg.clone().with_seed(100))?;
    println!(
        "different seed diverges at index {:?}",
        first_divergence(&trace, &other)
    );
    Ok(())
}
