//! Evaluate statistical claims over a grid and print PASS/FAIL lines.

use allocbench::bench::{run_experiment, CheckKind, ExperimentSpec, Sweep};
use allocbench::SimConfig;

fn main() -> allocbench::Result<()> {
    let spec = ExperimentSpec::single(SimConfig::new(1000, 1000, 2).with_seed(1), 5)
        .with_sweep(Sweep {
            m_over_n: Some(vec![1, 10, 100]),
            ..Sweep::default()
        })
        .with_checks([
            CheckKind::GapTheorem,
            CheckKind::ChoiceStatistics,
            CheckKind::RetryExpectation,
            CheckKind::NonpositiveAbundance,
            CheckKind::ZeroSum,
        ]);
    let result = run_experiment(&spec, None)?;
    for c in &result.checks {
        match c.cell_id {
            Some(cell) => println!("[cell {cell}] {}", c.line()),
            None => println!("{}", c.line()),
        }
        println!("    claim: {}", c.anchor);
    }
    println!("all passed: {}", result.passed());
    Ok(())
}
