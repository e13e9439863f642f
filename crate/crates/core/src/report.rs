//! Gap statistics for a finished run, and their aggregation across trials.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::model::{AllocationOutcome, BinState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub max_load: f64,
    pub min_load: f64,
    /// Total placed weight divided by the number of bins.
    pub true_avg: f64,
    /// `max_load - true_avg`.
    pub gap: f64,
    pub est_avg_mean: f64,
    pub est_avg_max_error: f64,
    /// Sample variance (n - 1 denominator) of the estimates over bins.
    pub est_avg_variance: f64,
    pub nonpositive_gap_fraction: f64,
    pub retry_histogram: BTreeMap<u32, u64>,
    pub mean_retries: f64,
    /// Sum over bins of `load - est_avg`.
    pub sum_est_gap: f64,
    pub messages: u64,
}

/// Neumaier-compensated sum.
pub(crate) fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

impl GapReport {
    pub(crate) fn from_parts(
        bins: &[BinState],
        retry_histogram: BTreeMap<u32, u64>,
        total_weight: f64,
        messages: u64,
        scale: f64,
    ) -> Result<Self, ConfigError> {
        if bins.is_empty() {
            return Err(ConfigError::EmptyBins);
        }
        let n = bins.len() as f64;
        let max_load = bins
            .iter()
            .map(|b| b.load)
            .fold(f64::NEG_INFINITY, f64::max);
        let min_load = bins.iter().map(|b| b.load).fold(f64::INFINITY, f64::min);
        let true_avg = total_weight / n;
        let mut gap = max_load - true_avg;
        // rounding in the average of identical loads
        if gap < 0.0 && gap > -1e-9 * scale.max(true_avg.abs()).max(1.0) {
            gap = 0.0;
        }
        let est_avg_mean = compensated_sum(bins.iter().map(|b| b.est_avg)) / n;
        let est_avg_variance = if bins.len() > 1 {
            compensated_sum(bins.iter().map(|b| (b.est_avg - est_avg_mean).powi(2))) / (n - 1.0)
        } else {
            0.0
        };
        let est_avg_max_error = bins
            .iter()
            .map(|b| (b.est_avg - true_avg).abs())
            .fold(0.0, f64::max);
        let tol = crate::model::GAP_TOLERANCE * scale;
        let nonpositive = bins.iter().filter(|b| b.estimated_gap() <= tol).count();
        let balls: u64 = retry_histogram.values().sum();
        let draws: u64 = retry_histogram.iter().map(|(r, c)| *r as u64 * c).sum();
        let mean_retries = if balls == 0 {
            0.0
        } else {
            draws as f64 / balls as f64
        };
        Ok(GapReport {
            max_load,
            min_load,
            true_avg,
            gap,
            est_avg_mean,
            est_avg_max_error,
            est_avg_variance,
            nonpositive_gap_fraction: nonpositive as f64 / n,
            retry_histogram,
            mean_retries,
            sum_est_gap: compensated_sum(bins.iter().map(|b| b.estimated_gap())),
            messages,
        })
    }
}

/// Builds a report from the final bins and the per-ball outcomes.
pub fn gap_report(
    bins: &[BinState],
    outcomes: &[AllocationOutcome],
    total_weight: f64,
) -> Result<GapReport, ConfigError> {
    let mut hist = BTreeMap::new();
    for o in outcomes {
        *hist.entry(o.retries_used).or_insert(0u64) += 1;
    }
    GapReport::from_parts(bins, hist, total_weight, 0, 1.0)
}

/// Order-independent fold of per-trial reports.
///
/// Real-valued statistics are kept as sorted multisets so that merging in
/// any order yields bit-identical aggregates.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportAggregate {
    pub trials: u64,
    pub gaps: Vec<f64>,
    pub mean_retries: Vec<f64>,
    pub retry_histogram: BTreeMap<u32, u64>,
    pub messages: u64,
}

fn sorted_merge(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    out.extend_from_slice(a);
    out.extend_from_slice(b);
    out.sort_by(f64::total_cmp);
    out
}

impl ReportAggregate {
    pub fn from_report(report: &GapReport) -> Self {
        Self {
            trials: 1,
            gaps: vec![report.gap],
            mean_retries: vec![report.mean_retries],
            retry_histogram: report.retry_histogram.clone(),
            messages: report.messages,
        }
    }

    pub fn merge(&self, other: &Self) -> Self {
        let mut hist = self.retry_histogram.clone();
        for (k, v) in &other.retry_histogram {
            *hist.entry(*k).or_insert(0) += v;
        }
        Self {
            trials: self.trials + other.trials,
            gaps: sorted_merge(&self.gaps, &other.gaps),
            mean_retries: sorted_merge(&self.mean_retries, &other.mean_retries),
            retry_histogram: hist,
            messages: self.messages + other.messages,
        }
    }

    pub fn mean_gap(&self) -> f64 {
        if self.gaps.is_empty() {
            0.0
        } else {
            self.gaps.iter().sum::<f64>() / self.gaps.len() as f64
        }
    }

    pub fn max_gap(&self) -> f64 {
        self.gaps.last().copied().unwrap_or(0.0)
    }

    /// Draw-weighted mean over every ball of every trial.
    pub fn pooled_mean_retries(&self) -> f64 {
        let balls: u64 = self.retry_histogram.values().sum();
        if balls == 0 {
            return 0.0;
        }
        let draws: u64 = self
            .retry_histogram
            .iter()
            .map(|(r, c)| *r as u64 * c)
            .sum();
        draws as f64 / balls as f64
    }
}
