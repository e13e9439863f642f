//! The round-synchronous protocol: n balls at once, each bin accepts at most
//! one ball per round, everyone else retries next round.

use allocbench::parallel::{run_parallel, run_parallel_round, ParallelState};
use allocbench::{SimConfig, SimRng, Variant};

fn main() -> allocbench::Result<()> {
    let cfg = SimConfig::new(4096, 4096, 2)
        .with_seed(5)
        .with_variant(Variant::Parallel);

    let mut state = ParallelState::new(&cfg);
    let mut rng = SimRng::new(cfg.seed);
    while !state.unplaced.is_empty() {
        let r = run_parallel_round(&mut state, &mut rng, |_, _, _| {});
        println!(
            "round {}: placed {:>4}, left {:>4}, messages {:>6}",
            r.round,
            r.placed.len(),
            state.unplaced.len(),
            r.messages.total()
        );
    }
    println!("message totals {:?}", state.messages);

    let out = run_parallel(&cfg)?;
    println!("rounds {} gap {}", out.rounds.unwrap(), out.report.gap);
    Ok(())
}
