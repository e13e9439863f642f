//! A swept experiment written to CSV, the same files the CLI produces.

use allocbench::bench::{run_experiment, ExperimentSpec, OutputFormat, OutputOptions, Sweep};
use allocbench::{Algorithm, SimConfig};

fn main() -> allocbench::Result<()> {
    let spec = ExperimentSpec::single(SimConfig::new(256, 256, 2).with_seed(42), 4)
        .with_sweep(Sweep {
            n: Some(vec![256, 1024]),
            m_over_n: Some(vec![1, 10, 50]),
            d: None,
            algorithms: Some(vec![Algorithm::Idea, Algorithm::GreedyD]),
        })
        .paired();
    let dir = std::env::temp_dir().join("allocbench-grid");
    let out = OutputOptions {
        dir: dir.clone(),
        format: OutputFormat::Csv,
        trace: false,
    };
    let result = run_experiment(&spec, Some(&out))?;
    println!(
        "{} cells, {} rows -> {}",
        result.cells.len(),
        result.rows.len(),
        dir.join("results.csv").display()
    );
    for (i, cell) in result.cells.iter().enumerate() {
        let gaps: Vec<f64> = result.runs_of(i).map(|r| r.output.report.gap).collect();
        println!(
            "  cell {i:>2} {:<7} n={:<5} m={:<6} gaps {gaps:?}",
            cell.algorithm.as_str(),
            cell.n,
            cell.m
        );
    }
    Ok(())
}
