//! Balls with random positive weights. The gap is measured in weight units
//! and stays near a multiple of the mean weight.

use allocbench::{simulate, RunOptions, SimConfig, Variant, WeightModel, WeightShape};

fn main() -> allocbench::Result<()> {
    let models = [
        WeightModel::uniform(2.0, 1.0),
        WeightModel {
            w_star: 2.0,
            k: 1.0,
            shape: WeightShape::TruncatedNormal { sigma: 0.5 },
        },
        WeightModel {
            w_star: 2.0,
            k: 1.5,
            shape: WeightShape::TwoPoint { p: 0.2 },
        },
    ];
    for model in models {
        for ratio in [10, 100] {
            let cfg = SimConfig::new(1000, 1000 * ratio, 2)
                .with_seed(3)
                .with_variant(Variant::Weighted(model));
            let out = simulate(&cfg, &RunOptions::default())?;
            println!(
                "{:?} m/n={ratio:<3} total weight {:.1} gap {:.3}",
                model.shape, out.total_weight, out.report.gap
            );
        }
    }
    Ok(())
}
