//! Same seeds, two estimate policies: the numbered gate knows the global
//! ball count, the sampled gate asks a few random peers instead.

use allocbench::{simulate, Mode, RunOptions, SimConfig};

fn main() -> allocbench::Result<()> {
    for mode in [Mode::Numbered, Mode::Sampled] {
        let mut gaps = Vec::new();
        let mut messages = 0;
        for seed in 0..5 {
            let cfg = SimConfig::new(2000, 40_000, 2)
                .with_seed(seed)
                .with_mode(mode);
            let out = simulate(&cfg, &RunOptions::default())?;
            gaps.push(out.report.gap);
            messages += out.report.messages;
        }
        println!(
            "{:<9} gaps {:?} sampling messages {}",
            mode.as_str(),
            gaps,
            messages
        );
    }
    Ok(())
}
