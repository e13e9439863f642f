//! Drive the allocator one ball at a time and watch the bins.

use allocbench::{allocate_ball, SimConfig, SimRng, SystemState};

fn main() {
    let cfg = SimConfig::new(6, 18, 2).with_seed(1);
    let mut state = SystemState::new(cfg.n);
    let mut rng = SimRng::new(cfg.seed);
    for j in 1..=cfg.m {
        let o = allocate_ball(&mut state, j, &mut rng, &cfg);
        let row: Vec<String> = state
            .bins
            .iter()
            .map(|b| format!("{}/{:.1}", b.load, b.est_avg))
            .collect();
        println!(
            "ball {j:>2} -> bin {} after {} draw(s)  [{}]",
            o.destination,
            o.retries_used,
            row.join(" ")
        );
    }
    // load/estimate pairs; bins at or below their estimate attract the next balls
    println!("non-positive bins: {}", state.nonpositive_bins());
}
