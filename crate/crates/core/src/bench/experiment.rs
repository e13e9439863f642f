//! Grid runner: expands an [`ExperimentSpec`] into cells, runs every trial
//! on its own stream, evaluates checks and writes result files.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::checks::*;
use crate::error::{Error, Result};
use crate::model::{Algorithm, SimConfig, Variant};
use crate::rng::mix_seed;
use crate::sim::{simulate, RunOptions, RunOutput};

/// Lists to cross with the base config. A missing list keeps the base
/// value; an empty list yields no cells.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Sweep {
    pub n: Option<Vec<usize>>,
    pub m_over_n: Option<Vec<u64>>,
    pub d: Option<Vec<usize>>,
    pub algorithms: Option<Vec<Algorithm>>,
}

fn one() -> u32 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub base: SimConfig,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    #[serde(default = "one")]
    pub trials_per_cell: u32,
    #[serde(default)]
    pub checks: Vec<CheckKind>,
    #[serde(default)]
    pub params: CheckParams,
    /// Trial `t` of every cell uses the same seed, pairing cells.
    #[serde(default)]
    pub paired: bool,
}

impl ExperimentSpec {
    pub fn single(base: SimConfig, trials: u32) -> Self {
        Self {
            base,
            sweep: None,
            trials_per_cell: trials,
            checks: Vec::new(),
            params: CheckParams::default(),
            paired: false,
        }
    }

    pub fn paired(mut self) -> Self {
        self.paired = true;
        self
    }

    pub fn with_sweep(mut self, sweep: Sweep) -> Self {
        self.sweep = Some(sweep);
        self
    }

    pub fn with_checks(mut self, checks: impl IntoIterator<Item = CheckKind>) -> Self {
        self.checks = checks.into_iter().collect();
        self
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            cell: None,
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_owned(),
            source,
        })
    }

    /// Configs of every grid cell, in cell-id order.
    pub fn cells(&self) -> Vec<SimConfig> {
        let base = &self.base;
        let sweep = self.sweep.clone().unwrap_or_default();
        let ns = sweep.n.unwrap_or_else(|| vec![base.n]);
        let ratios: Vec<Option<u64>> = match sweep.m_over_n {
            Some(r) => r.into_iter().map(Some).collect(),
            None => vec![None],
        };
        let ds = sweep.d.unwrap_or_else(|| vec![base.d]);
        let algs = sweep.algorithms.unwrap_or_else(|| vec![base.algorithm]);
        let mut out = Vec::new();
        for &n in &ns {
            for &ratio in &ratios {
                for &d in &ds {
                    for &algorithm in &algs {
                        let mut cfg = base.clone();
                        if n != base.n && sweep_sets_gamma(base) {
                            cfg.gamma_max = crate::model::ceil_log2(n);
                        }
                        cfg.n = n;
                        cfg.m = ratio.map_or(base.m, |r| r * n as u64);
                        cfg.d = d;
                        cfg.algorithm = algorithm;
                        cfg.trials = self.trials_per_cell;
                        out.push(cfg);
                    }
                }
            }
        }
        out
    }
}

// A base retry cap equal to the default for its n follows n across a sweep.
fn sweep_sets_gamma(base: &SimConfig) -> bool {
    base.gamma_max == crate::model::ceil_log2(base.n)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Clone, Debug)]
pub struct OutputOptions {
    pub dir: PathBuf,
    pub format: OutputFormat,
    pub trace: bool,
}

/// One results row; field order is the CSV column order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub cell_id: usize,
    pub algorithm: Algorithm,
    pub n: usize,
    pub m: u64,
    pub d: usize,
    pub mode: String,
    pub variant: String,
    pub trial: u32,
    pub seed: u64,
    pub max_load: f64,
    pub min_load: f64,
    pub gap: f64,
    pub mean_retries: f64,
    pub sum_est_gap: f64,
    pub est_avg_max_error: f64,
    pub nonpositive_gap_fraction: f64,
    pub messages: u64,
    pub rounds: Option<u32>,
}

pub const CSV_COLUMNS: [&str; 18] = [
    "cell_id",
    "algorithm",
    "n",
    "m",
    "d",
    "mode",
    "variant",
    "trial",
    "seed",
    "max_load",
    "min_load",
    "gap",
    "mean_retries",
    "sum_est_gap",
    "est_avg_max_error",
    "nonpositive_gap_fraction",
    "messages",
    "rounds",
];

#[derive(Clone, Debug)]
pub struct TrialRun {
    pub cell_id: usize,
    pub trial: u32,
    pub seed: u64,
    /// Trace already written out is dropped from here.
    pub output: RunOutput,
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub cells: Vec<SimConfig>,
    pub rows: Vec<ResultRow>,
    pub runs: Vec<TrialRun>,
    pub checks: Vec<CheckResult>,
}

impl ExperimentResult {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn runs_of(&self, cell: usize) -> impl Iterator<Item = &TrialRun> {
        self.runs.iter().filter(move |r| r.cell_id == cell)
    }
}

fn row(cell_id: usize, cfg: &SimConfig, trial: u32, seed: u64, out: &RunOutput) -> ResultRow {
    let r = &out.report;
    ResultRow {
        cell_id,
        algorithm: cfg.algorithm,
        n: cfg.n,
        m: cfg.m,
        d: cfg.d,
        mode: cfg.effective_mode().to_string(),
        variant: cfg.variant.label().to_owned(),
        trial,
        seed,
        max_load: r.max_load,
        min_load: r.min_load,
        gap: r.gap,
        mean_retries: r.mean_retries,
        sum_est_gap: r.sum_est_gap,
        est_avg_max_error: r.est_avg_max_error,
        nonpositive_gap_fraction: r.nonpositive_gap_fraction,
        messages: r.messages,
        rounds: out.rounds,
    }
}

fn io_err(path: &Path, cell: Option<usize>) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_owned(),
        cell,
        source,
    }
}

fn write_trace(path: &Path, cell: usize, out: &RunOutput) -> Result<()> {
    let file = File::create(path).map_err(io_err(path, Some(cell)))?;
    let mut w = BufWriter::new(file);
    for rec in out.trace.iter().flatten() {
        serde_json::to_writer(&mut w, rec).map_err(|source| Error::Json {
            path: path.to_owned(),
            source,
        })?;
        w.write_all(b"\n").map_err(io_err(path, Some(cell)))?;
    }
    w.flush().map_err(io_err(path, Some(cell)))
}

/// Runs every trial of every cell and evaluates the enabled checks. With
/// `output`, writes results, `checks.json`, `meta.json` and optional traces
/// under `output.dir`.
pub fn run_experiment(
    spec: &ExperimentSpec,
    output: Option<&OutputOptions>,
) -> Result<ExperimentResult> {
    let cells = spec.cells();
    for cfg in &cells {
        cfg.validate()?;
    }
    let trace_dir = match output {
        Some(o) => {
            fs::create_dir_all(&o.dir).map_err(io_err(&o.dir, None))?;
            if o.trace {
                let t = o.dir.join("traces");
                fs::create_dir_all(&t).map_err(io_err(&t, None))?;
                Some(t)
            } else {
                None
            }
        }
        None => None,
    };
    let opts = RunOptions {
        record_trace: trace_dir.is_some(),
        ..RunOptions::default()
    };

    let jobs: Vec<(usize, u32)> = (0..cells.len())
        .flat_map(|c| (0..spec.trials_per_cell).map(move |t| (c, t)))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(cell_id, trial)| {
            let cell_key = if spec.paired { 0 } else { cell_id as u64 };
            let seed = mix_seed(spec.base.seed, cell_key, trial as u64);
            let mut cfg = cells[cell_id].clone();
            cfg.seed = seed;
            let mut output = simulate(&cfg, &opts)?;
            if let Some(dir) = &trace_dir {
                let path = dir.join(format!("cell{cell_id}_trial{trial}.jsonl"));
                write_trace(&path, cell_id, &output)?;
                output.trace = None;
            }
            Ok(TrialRun {
                cell_id,
                trial,
                seed,
                output,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let rows: Vec<ResultRow> = runs
        .iter()
        .map(|r| row(r.cell_id, &cells[r.cell_id], r.trial, r.seed, &r.output))
        .collect();
    let mut result = ExperimentResult {
        cells,
        rows,
        runs,
        checks: Vec::new(),
    };
    result.checks = evaluate_checks(spec, &result);

    if let Some(o) = output {
        write_outputs(spec, &result, o)?;
    }
    Ok(result)
}

fn evaluate_checks(spec: &ExperimentSpec, res: &ExperimentResult) -> Vec<CheckResult> {
    let p = &spec.params;
    let mut out = Vec::new();
    for &kind in &spec.checks {
        match kind {
            CheckKind::GapTheorem => out.extend(gap_theorem_checks(res, p)),
            CheckKind::BaselineOrdering => out.extend(ordering_checks(res)),
            _ => {
                for (cell, cfg) in res.cells.iter().enumerate() {
                    let runs: Vec<&RunOutput> = res.runs_of(cell).map(|r| &r.output).collect();
                    if runs.is_empty() {
                        continue;
                    }
                    out.push(cell_check(kind, cfg, &runs, p).for_cell(cell));
                }
            }
        }
    }
    out
}

/// One cell-level check over the trials of `cfg`.
pub fn cell_check(
    kind: CheckKind,
    cfg: &SimConfig,
    runs: &[&RunOutput],
    p: &CheckParams,
) -> CheckResult {
    let collect = |f: &dyn Fn(&RunOutput) -> f64| runs.iter().map(|r| f(r)).collect::<Vec<f64>>();
    match kind {
        CheckKind::ChoiceStatistics => {
            let counts: Vec<Vec<u64>> = runs
                .iter()
                .map(|r| r.diagnostics.choice_counts.clone())
                .collect();
            check_choice_statistics(&counts, cfg.m, cfg.d, p)
        }
        CheckKind::RetryExpectation => {
            let mut hist = BTreeMap::new();
            for r in runs {
                for (k, v) in &r.report.retry_histogram {
                    *hist.entry(*k).or_insert(0) += v;
                }
            }
            let (chi2, dof) = retry_decay_chi_square(&hist, cfg.d);
            let r = check_retry_expectation(&collect(&|r| r.report.mean_retries), cfg.d, p);
            let detail = format!("{}; geometric decay chi2 {chi2:.1} on {dof} dof", r.detail);
            r.with_detail(detail)
        }
        CheckKind::SamplingCost => {
            let msgs: Vec<u64> = runs
                .iter()
                .map(|r| r.diagnostics.sampling_messages)
                .collect();
            check_sampling_cost(&msgs, cfg.n, cfg.d, p)
        }
        CheckKind::ZeroSum | CheckKind::WeightedZeroSum => check_zero_sum(
            kind,
            &collect(&|r| r.diagnostics.zero_sum_max_error),
            &collect(&|r| r.diagnostics.max_abs_checkpoint_sum()),
            cfg.n,
            p,
        ),
        CheckKind::NonpositiveAbundance => check_nonpositive_abundance(
            &collect(&|r| r.diagnostics.min_checkpoint_nonpositive().unwrap_or(1.0)),
            cfg.d,
        ),
        CheckKind::RetrySuccess => check_retry_success(
            runs.iter().map(|r| r.diagnostics.probe_successes).sum(),
            runs.iter().map(|r| r.diagnostics.probe_balls).sum(),
            p,
        ),
        CheckKind::EstimateMean => {
            let true_avg = runs[0].report.true_avg;
            check_estimate_mean(&collect(&|r| r.report.est_avg_mean), true_avg, p)
        }
        CheckKind::EstimateVariance => {
            check_estimate_variance(&collect(&|r| r.report.est_avg_variance), cfg.n, cfg.d, p)
        }
        CheckKind::WeightedGap => {
            let (w, k) = match &cfg.variant {
                Variant::Weighted(m) => (m.w_star, m.k),
                _ => (1.0, 0.0),
            };
            check_weighted_gap(&collect(&|r| r.report.gap), w, k, p)
        }
        CheckKind::MdGap => check_md_gap(&collect(&|r| r.md_gap.unwrap_or(f64::NAN)), p),
        CheckKind::ParallelRounds => {
            let rounds: Vec<u32> = runs.iter().map(|r| r.rounds.unwrap_or(0)).collect();
            check_parallel_rounds(&rounds, &collect(&|r| r.report.gap), cfg.n, p)
        }
        CheckKind::GapTheorem => {
            check_gap_theorem(&[(cfg.m / cfg.n as u64, collect(&|r| r.report.gap))], p)
        }
        CheckKind::BaselineOrdering => unreachable!("evaluated across cells"),
    }
}

type GroupKey = (usize, usize, Algorithm, String, String);

fn gap_theorem_checks(res: &ExperimentResult, p: &CheckParams) -> Vec<CheckResult> {
    let mut groups: BTreeMap<GroupKey, Vec<(u64, Vec<f64>)>> = BTreeMap::new();
    for (cell, cfg) in res.cells.iter().enumerate() {
        let key = (
            cfg.n,
            cfg.d,
            cfg.algorithm,
            cfg.variant.label().to_owned(),
            cfg.effective_mode().to_string(),
        );
        let gaps = res.runs_of(cell).map(|r| r.output.report.gap).collect();
        groups
            .entry(key)
            .or_default()
            .push((cfg.m / cfg.n as u64, gaps));
    }
    groups
        .into_iter()
        .map(|((n, d, alg, variant, mode), by_ratio)| {
            let r = check_gap_theorem(&by_ratio, p);
            let detail = format!("n={n} d={d} {alg} {variant} {mode}; {}", r.detail);
            r.with_detail(detail)
        })
        .collect()
}

fn ordering_checks(res: &ExperimentResult) -> Vec<CheckResult> {
    let mut groups: BTreeMap<(usize, u64, usize), BTreeMap<Algorithm, Vec<f64>>> = BTreeMap::new();
    for (cell, cfg) in res.cells.iter().enumerate() {
        let gaps: Vec<f64> = res.runs_of(cell).map(|r| r.output.report.gap).collect();
        groups
            .entry((cfg.n, cfg.m, cfg.d))
            .or_default()
            .entry(cfg.algorithm)
            .or_default()
            .extend(gaps);
    }
    groups
        .into_iter()
        .filter_map(|((n, m, d), by_alg)| {
            let one = by_alg.get(&Algorithm::OneChoice)?;
            let greedy = by_alg.get(&Algorithm::GreedyD)?;
            let idea = by_alg.get(&Algorithm::Idea)?;
            let r = check_baseline_ordering(one, greedy, idea);
            let detail = format!("n={n} m={m} d={d}; {}", r.detail);
            Some(r.with_detail(detail))
        })
        .collect()
}

fn write_outputs(spec: &ExperimentSpec, res: &ExperimentResult, o: &OutputOptions) -> Result<()> {
    match o.format {
        OutputFormat::Csv => {
            let path = o.dir.join("results.csv");
            let csv_err = |source| Error::Csv {
                path: path.clone(),
                cell: None,
                source,
            };
            let mut w = csv::WriterBuilder::new()
                .has_headers(false)
                .from_path(&path)
                .map_err(csv_err)?;
            // explicit header so an empty grid still yields the columns
            w.write_record(CSV_COLUMNS).map_err(csv_err)?;
            for r in &res.rows {
                w.serialize(r).map_err(|source| Error::Csv {
                    path: path.clone(),
                    cell: Some(r.cell_id),
                    source,
                })?;
            }
            w.flush().map_err(io_err(&path, None))?;
        }
        OutputFormat::Json => write_json(&o.dir.join("results.json"), &res.rows)?,
    }
    write_json(&o.dir.join("checks.json"), &res.checks)?;
    write_json(
        &o.dir.join("meta.json"),
        &serde_json::json!({
            "spec": spec,
            "cells": res.cells.len(),
            "trials_per_cell": spec.trials_per_cell,
            "params": spec.params,
            "passed": res.passed(),
        }),
    )
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(io_err(path, None))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|source| Error::Json {
        path: path.to_owned(),
        source,
    })?;
    w.write_all(b"\n").map_err(io_err(path, None))?;
    w.flush().map_err(io_err(path, None))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_grid_succeeds() {
        let spec = ExperimentSpec::single(SimConfig::new(10, 10, 2), 3).with_sweep(Sweep {
            n: Some(vec![]),
            ..Sweep::default()
        });
        let res = run_experiment(&spec, None).unwrap();
        assert!(res.rows.is_empty());
        assert!(res.passed());
    }

    #[test]
    fn one_cell_one_row_per_trial() {
        let spec = ExperimentSpec::single(SimConfig::new(20, 40, 2).with_seed(5), 4)
            .with_checks([CheckKind::RetryExpectation, CheckKind::ZeroSum]);
        let res = run_experiment(&spec, None).unwrap();
        assert_eq!(res.rows.len(), 4);
        assert_eq!(res.checks.len(), 2);
        let seeds: Vec<u64> = res.rows.iter().map(|r| r.seed).collect();
        assert_eq!(seeds[1], mix_seed(5, 0, 1));
    }

    #[test]
    fn sweep_expands_in_order() {
        let spec = ExperimentSpec::single(SimConfig::new(8, 8, 2), 1).with_sweep(Sweep {
            n: Some(vec![8, 16]),
            m_over_n: Some(vec![1, 10]),
            d: None,
            algorithms: Some(vec![Algorithm::Idea, Algorithm::GreedyD]),
        });
        let cells = spec.cells();
        assert_eq!(cells.len(), 8);
        assert_eq!(
            (cells[0].n, cells[0].m, cells[0].algorithm),
            (8, 8, Algorithm::Idea)
        );
        assert_eq!(
            (cells[7].n, cells[7].m, cells[7].algorithm),
            (16, 160, Algorithm::GreedyD)
        );
        assert_eq!(cells[7].gamma_max, 4);
    }

    #[test]
    fn paired_cells_share_seeds() {
        let spec = ExperimentSpec::single(SimConfig::new(10, 10, 2), 2)
            .with_sweep(Sweep {
                algorithms: Some(vec![Algorithm::Idea, Algorithm::OneChoice]),
                ..Sweep::default()
            })
            .paired();
        let res = run_experiment(&spec, None).unwrap();
        assert_eq!(res.rows[0].seed, res.rows[2].seed);
        assert_ne!(res.rows[0].seed, res.rows[1].seed);
    }

    #[test]
    fn results_are_independent_of_thread_schedule() {
        let spec = ExperimentSpec::single(SimConfig::new(30, 300, 2).with_seed(9), 6);
        let a = run_experiment(&spec, None).unwrap();
        let b = run_experiment(&spec, None).unwrap();
        assert_eq!(a.rows, b.rows);
    }
}
