//! Run outputs shared by every simulator, and the config dispatcher.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{Algorithm, SimConfig, Variant};
use crate::parallel::MessageCounts;
use crate::report::GapReport;
use crate::trace::TraceRecord;

/// Counts successes of the retry loop among balls that arrive while the
/// non-positive fraction lies in `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetryProbe {
    pub lo: f64,
    pub hi: f64,
    /// A ball succeeds if it found a non-positive bin within this many draws.
    pub within_draws: u32,
}

impl Default for RetryProbe {
    fn default() -> Self {
        Self {
            lo: 0.45,
            hi: 0.55,
            within_draws: 2,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub record_trace: bool,
    pub probe: RetryProbe,
}

impl RunOptions {
    pub fn traced() -> Self {
        Self {
            record_trace: true,
            ..Self::default()
        }
    }
}

/// State at a multiple of `n` placed balls.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub balls: u64,
    pub sum_est_gap: f64,
    pub nonpositive_fraction: f64,
}

/// Statistics collected while a run executes, beyond the final report.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// How often each bin was in a ball's final candidate set.
    pub choice_counts: Vec<u64>,
    /// Balls whose estimate updates were all applied unchanged.
    pub ungated_balls: u64,
    /// Balls with at least one capped, raised or refused update.
    pub gated_balls: u64,
    /// Largest `|change of sum(load - est_avg)|` over ungated balls.
    pub zero_sum_max_error: f64,
    pub checkpoints: Vec<Checkpoint>,
    pub probe_balls: u64,
    pub probe_successes: u64,
    pub sampling_decisions: u64,
    pub sampling_messages: u64,
    /// Parallel only: most balls any bin accepted in one round.
    pub max_accepts_per_round: u32,
    /// Parallel only: fewest balls placed in a round that had work to do.
    pub min_placed_per_round: Option<u64>,
}

impl Diagnostics {
    pub fn probe_success_rate(&self) -> Option<f64> {
        (self.probe_balls > 0).then(|| self.probe_successes as f64 / self.probe_balls as f64)
    }

    pub fn max_abs_checkpoint_sum(&self) -> f64 {
        self.checkpoints
            .iter()
            .map(|c| c.sum_est_gap.abs())
            .fold(0.0, f64::max)
    }

    pub fn min_checkpoint_nonpositive(&self) -> Option<f64> {
        self.checkpoints
            .iter()
            .map(|c| c.nonpositive_fraction)
            .reduce(f64::min)
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOutput {
    pub report: GapReport,
    pub trace: Option<Vec<TraceRecord>>,
    pub diagnostics: Diagnostics,
    pub total_weight: f64,
    /// Parallel only.
    pub rounds: Option<u32>,
    /// Parallel only.
    pub protocol: Option<MessageCounts>,
    /// Multi-dimensional only: worst per-dimension gap.
    pub md_gap: Option<f64>,
    /// False for inputs outside the proven regime (non-uniform dimensions).
    pub claim: bool,
}

impl Default for GapReport {
    fn default() -> Self {
        GapReport {
            max_load: 0.0,
            min_load: 0.0,
            true_avg: 0.0,
            gap: 0.0,
            est_avg_mean: 0.0,
            est_avg_max_error: 0.0,
            est_avg_variance: 0.0,
            nonpositive_gap_fraction: 0.0,
            retry_histogram: Default::default(),
            mean_retries: 0.0,
            sum_est_gap: 0.0,
            messages: 0,
        }
    }
}

/// Runs one trial of `cfg` with `cfg.seed`.
pub fn simulate(cfg: &SimConfig, opts: &RunOptions) -> Result<RunOutput> {
    cfg.validate()?;
    match (&cfg.algorithm, &cfg.variant) {
        (Algorithm::Idea, Variant::Unweighted) => crate::idea::run_sequential_with(cfg, opts),
        (Algorithm::Idea, Variant::Weighted(model)) => {
            crate::weighted::run_weighted(cfg, model, opts)
        }
        (Algorithm::Idea, Variant::MultiDim { .. }) => crate::multidim::run_multidim(cfg, opts),
        (Algorithm::Idea, Variant::Parallel) => crate::parallel::run_parallel_with(cfg, opts),
        _ => crate::baselines::run_baseline(cfg, opts),
    }
}
