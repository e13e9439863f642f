use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use allocbench::bench::{run_experiment, CheckKind, ExperimentSpec, OutputFormat, OutputOptions};
use allocbench::multidim::MdDistribution;
use allocbench::{Algorithm, ConfigError, Mode, SimConfig, Variant, WeightModel};

#[derive(Parser)]
#[command(
    name = "allocbench",
    version,
    about = "Balls-into-bins allocation benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a JSON config or from flags.
    Run(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment spec; excludes the simulation flags.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,

    #[arg(long, conflicts_with = "config")]
    n: Option<usize>,
    #[arg(long, conflicts_with = "config")]
    m: Option<u64>,
    #[arg(long, default_value_t = 2, conflicts_with = "config")]
    d: usize,
    /// Defaults to ceil(log2 n).
    #[arg(long, conflicts_with = "config")]
    gamma_max: Option<u32>,
    /// idea | one | greedy | beta | greedy-retry
    #[arg(long, default_value = "idea", conflicts_with = "config")]
    algorithm: Algorithm,
    /// numbered | sampled
    #[arg(long, default_value = "numbered", conflicts_with = "config")]
    mode: Mode,
    #[arg(long, conflicts_with = "config")]
    beta: Option<f64>,
    /// uniform:w_star,k | twopoint:w_star,k,p | tnormal:w_star,k,sigma
    #[arg(long, conflicts_with = "config")]
    weight_dist: Option<WeightModel>,
    #[arg(long, requires = "populated", conflicts_with = "config")]
    dims: Option<usize>,
    #[arg(long, requires = "dims", conflicts_with = "config")]
    populated: Option<usize>,
    /// uniform | custom:<file>
    #[arg(long, requires = "dims", conflicts_with = "config")]
    md_dist: Option<String>,
    #[arg(long, conflicts_with = "config")]
    parallel: bool,
    #[arg(long, default_value_t = 0, conflicts_with = "config")]
    seed: u64,
    #[arg(long, default_value_t = 1, conflicts_with = "config")]
    trials: u32,
    /// Comma-separated check names, e.g. gap_theorem,retry_expectation
    #[arg(long, value_delimiter = ',', conflicts_with = "config")]
    checks: Vec<String>,

    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Write one JSONL trace per trial under <out>/traces.
    #[arg(long)]
    trace: bool,
}

fn spec_from_flags(a: &RunArgs) -> Result<ExperimentSpec, Box<dyn std::error::Error>> {
    let n = a.n.ok_or("--n is required without --config")?;
    let m = a.m.ok_or("--m is required without --config")?;
    let mut cfg = SimConfig::new(n, m, a.d)
        .with_seed(a.seed)
        .with_mode(a.mode)
        .with_algorithm(a.algorithm)
        .with_trials(a.trials);
    if let Some(g) = a.gamma_max {
        cfg.gamma_max = g;
    }
    cfg.beta = a.beta;
    let variants = [a.weight_dist.is_some(), a.dims.is_some(), a.parallel];
    if variants.iter().filter(|&&v| v).count() > 1 {
        return Err("--weight-dist, --dims and --parallel are mutually exclusive".into());
    }
    if let Some(w) = a.weight_dist {
        cfg.variant = Variant::Weighted(w);
    }
    if let (Some(dims), Some(populated)) = (a.dims, a.populated) {
        let dist = match a.md_dist.as_deref() {
            None | Some("uniform") => MdDistribution::Uniform,
            Some(s) => match s.strip_prefix("custom:") {
                Some(file) => MdDistribution::from_file(file.as_ref())?,
                None => {
                    return Err(ConfigError::InvalidDimDistribution(format!(
                        "expected uniform or custom:<file>, got {s}"
                    ))
                    .into())
                }
            },
        };
        cfg.variant = Variant::MultiDim {
            dims,
            populated,
            dist,
        };
    }
    if a.parallel {
        cfg.variant = Variant::Parallel;
    }
    let checks = a
        .checks
        .iter()
        .map(|c| {
            CheckKind::ALL
                .into_iter()
                .find(|k| k.name() == c)
                .ok_or_else(|| format!("unknown check {c}"))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ExperimentSpec::single(cfg, a.trials).with_checks(checks))
}

fn run(a: RunArgs) -> Result<bool, Box<dyn std::error::Error>> {
    let spec = match &a.config {
        Some(path) => ExperimentSpec::from_json_file(path)?,
        None => spec_from_flags(&a)?,
    };
    let output = OutputOptions {
        dir: a.out.clone(),
        format: match a.format {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        },
        trace: a.trace,
    };
    let res = run_experiment(&spec, Some(&output))?;
    eprintln!(
        "{} cells, {} rows written to {}",
        res.cells.len(),
        res.rows.len(),
        a.out.display()
    );
    for c in &res.checks {
        match c.cell_id {
            Some(id) => println!("[cell {id}] {}", c.line()),
            None => println!("{}", c.line()),
        }
    }
    Ok(res.passed())
}

fn main() -> ExitCode {
    let Command::Run(args) = Cli::parse().command;
    match run(args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
