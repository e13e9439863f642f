//! Statistical claims as pass/fail checks.
//!
//! Each check reduces per-trial statistics to one observed number, compares
//! it with a band and names the claim it tests in `anchor`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::ceil_log2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub observed: f64,
    /// Human-readable acceptance band.
    pub expected: String,
    pub anchor: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cell_id: Option<usize>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

impl CheckResult {
    fn new(kind: CheckKind, passed: bool, observed: f64, expected: String) -> Self {
        Self {
            name: kind.name().to_owned(),
            passed,
            observed,
            expected,
            anchor: kind.anchor().to_owned(),
            cell_id: None,
            detail: String::new(),
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }

    pub fn for_cell(mut self, cell: usize) -> Self {
        self.cell_id = Some(cell);
        self
    }

    /// `PASS name: observed (expected)`.
    pub fn line(&self) -> String {
        format!(
            "{} {}: observed {} expected {}{}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            fmt_num(self.observed),
            self.expected,
            if self.detail.is_empty() {
                String::new()
            } else {
                format!(" ({})", self.detail)
            }
        )
    }
}

fn fmt_num(x: f64) -> String {
    if x == x.trunc() && x.abs() < 1e15 {
        format!("{x:.0}")
    } else {
        format!("{x:.4}")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    ChoiceStatistics,
    GapTheorem,
    RetryExpectation,
    SamplingCost,
    ZeroSum,
    NonpositiveAbundance,
    RetrySuccess,
    EstimateMean,
    EstimateVariance,
    WeightedGap,
    WeightedZeroSum,
    MdGap,
    ParallelRounds,
    BaselineOrdering,
}

impl CheckKind {
    pub const ALL: [CheckKind; 14] = [
        CheckKind::ChoiceStatistics,
        CheckKind::GapTheorem,
        CheckKind::RetryExpectation,
        CheckKind::SamplingCost,
        CheckKind::ZeroSum,
        CheckKind::NonpositiveAbundance,
        CheckKind::RetrySuccess,
        CheckKind::EstimateMean,
        CheckKind::EstimateVariance,
        CheckKind::WeightedGap,
        CheckKind::WeightedZeroSum,
        CheckKind::MdGap,
        CheckKind::ParallelRounds,
        CheckKind::BaselineOrdering,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CheckKind::ChoiceStatistics => "choice_statistics",
            CheckKind::GapTheorem => "gap_theorem",
            CheckKind::RetryExpectation => "retry_expectation",
            CheckKind::SamplingCost => "sampling_cost",
            CheckKind::ZeroSum => "zero_sum",
            CheckKind::NonpositiveAbundance => "nonpositive_abundance",
            CheckKind::RetrySuccess => "retry_success",
            CheckKind::EstimateMean => "estimate_mean",
            CheckKind::EstimateVariance => "estimate_variance",
            CheckKind::WeightedGap => "weighted_gap",
            CheckKind::WeightedZeroSum => "weighted_zero_sum",
            CheckKind::MdGap => "md_gap",
            CheckKind::ParallelRounds => "parallel_rounds",
            CheckKind::BaselineOrdering => "baseline_ordering",
        }
    }

    /// The claim under test, in words.
    pub fn anchor(self) -> &'static str {
        match self {
            CheckKind::ChoiceStatistics => {
                "each bin is a candidate of md/n balls on expectation, at most (md/n) log n"
            }
            CheckKind::GapTheorem => "maximum load is ceil(m/n) + O(1), independent of m",
            CheckKind::RetryExpectation => {
                "expected draws per ball about 1 + 1/(2^d - 1), always below 2"
            }
            CheckKind::SamplingCost => "expected number of peer samples is O(n), below n*d",
            CheckKind::ZeroSum => "sum of estimated gaps is conserved by every ungated ball",
            CheckKind::NonpositiveAbundance => {
                "a constant fraction of bins has non-positive estimated gap"
            }
            CheckKind::RetrySuccess => {
                "with half the bins non-positive, two draws succeed with probability about 0.94"
            }
            CheckKind::EstimateMean => "estimated averages track the true average",
            CheckKind::EstimateVariance => "variance of the estimated average is about 1/d - 1/n",
            CheckKind::WeightedGap => "weighted maximum load is W*(ceil(m/n) + O(1))",
            CheckKind::WeightedZeroSum => {
                "weighted ball changes the sum of estimated gaps by W(1-1/d) - (d-1)W/d = 0"
            }
            CheckKind::MdGap => {
                "with m = n uniform multi-dimensional balls keep a constant gap in every dimension"
            }
            CheckKind::ParallelRounds => {
                "parallel protocol places n balls in O(log log n) rounds with constant gap"
            }
            CheckKind::BaselineOrdering => {
                "one choice > greedy[d] > estimated-gap allocation in gap"
            }
        }
    }
}

/// Thresholds of the checks. Every knob is reported with the results.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CheckParams {
    /// Gap bound for every ratio.
    pub c0: f64,
    /// Largest allowed difference between per-ratio mean gaps.
    pub spread: f64,
    /// Half-width around `1 + 1/(2^d - 1)`; `None` picks 0.15 for d=2 and
    /// 0.1 otherwise.
    pub retry_tolerance: Option<f64>,
    pub sampling_factor: f64,
    pub zero_sum_exact: f64,
    pub zero_sum_relative: f64,
    pub retry_success_min: f64,
    pub estimate_mean_tolerance: f64,
    pub estimate_variance_relative: f64,
    pub weighted_factor: f64,
    pub md_gap_bound: f64,
    pub md_quantile: f64,
    pub parallel_gap_bound: f64,
    pub se_multiplier: f64,
}

impl Default for CheckParams {
    fn default() -> Self {
        Self {
            c0: 4.0,
            spread: 1.5,
            retry_tolerance: None,
            sampling_factor: 4.0,
            zero_sum_exact: 1e-9,
            zero_sum_relative: 0.01,
            retry_success_min: 0.90,
            estimate_mean_tolerance: 0.05,
            estimate_variance_relative: 0.20,
            weighted_factor: 5.0,
            md_gap_bound: 3.0,
            md_quantile: 0.95,
            parallel_gap_bound: 4.0,
            se_multiplier: 3.0,
        }
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn max(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Candidate counts per bin, one vector per trial.
pub fn check_choice_statistics(
    counts: &[Vec<u64>],
    m: u64,
    d: usize,
    p: &CheckParams,
) -> CheckResult {
    let kind = CheckKind::ChoiceStatistics;
    let n = counts.first().map_or(0, Vec::len);
    if n == 0 {
        return CheckResult::new(kind, false, f64::NAN, "no data".into());
    }
    let expect = m as f64 * d as f64 / n as f64;
    let q = d as f64 / n as f64;
    let se = (m as f64 * q * (1.0 - q) / (n * counts.len()) as f64).sqrt();
    let all: Vec<f64> = counts.iter().flatten().map(|&c| c as f64).collect();
    let observed = mean(&all);
    let top = max(&all);
    let bound = expect * (ceil_log2(n) as f64).max(1.0);
    let passed = (observed - expect).abs() <= p.se_multiplier * se + 1e-9 && top <= bound;
    CheckResult::new(
        kind,
        passed,
        observed,
        format!("{expect} +/- {:.3}, max <= {bound}", p.se_multiplier * se),
    )
    .with_detail(format!("max count {top}"))
}

/// Gaps of every trial, grouped by `m/n` ratio.
pub fn check_gap_theorem(by_ratio: &[(u64, Vec<f64>)], p: &CheckParams) -> CheckResult {
    let kind = CheckKind::GapTheorem;
    if by_ratio.is_empty() {
        return CheckResult::new(kind, false, f64::NAN, "no data".into());
    }
    let worst = by_ratio
        .iter()
        .map(|(_, g)| max(g))
        .fold(f64::NEG_INFINITY, f64::max);
    let means: Vec<f64> = by_ratio.iter().map(|(_, g)| mean(g)).collect();
    let spread = max(&means) - means.iter().copied().fold(f64::INFINITY, f64::min);
    let passed = worst <= p.c0 && spread <= p.spread;
    let detail = by_ratio
        .iter()
        .zip(&means)
        .map(|((r, g), m)| format!("m/n={r}: mean {m:.3} max {:.3}", max(g)))
        .collect::<Vec<_>>()
        .join("; ");
    CheckResult::new(
        kind,
        passed,
        worst,
        format!(
            "max gap <= {} and mean spread <= {} (spread {spread:.3})",
            p.c0, p.spread
        ),
    )
    .with_detail(detail)
}

pub fn expected_retries(d: usize) -> f64 {
    1.0 + 1.0 / (2f64.powi(d as i32) - 1.0)
}

/// Pooled mean draws per ball, over per-trial means.
pub fn check_retry_expectation(mean_retries: &[f64], d: usize, p: &CheckParams) -> CheckResult {
    let kind = CheckKind::RetryExpectation;
    let target = expected_retries(d);
    let tol = p.retry_tolerance.unwrap_or(if d == 2 { 0.15 } else { 0.1 });
    let observed = mean(mean_retries);
    let worst = max(mean_retries);
    let passed = (observed - target).abs() <= tol && worst < 2.0;
    CheckResult::new(
        kind,
        passed,
        observed,
        format!("{target:.4} +/- {tol}, every trial < 2"),
    )
    .with_detail(format!("largest trial mean {worst:.4}"))
}

/// Pearson statistic of a retry histogram against the geometric law
/// `p_i = (2^d - 1) / 2^(i d)`, with sparse tail cells pooled so every
/// expected count is at least 5. Returns `(statistic, degrees of freedom)`.
pub fn retry_decay_chi_square(hist: &BTreeMap<u32, u64>, d: usize) -> (f64, usize) {
    let total: u64 = hist.values().sum();
    if total == 0 {
        return (0.0, 0);
    }
    let q = 0.5f64.powi(d as i32);
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let mut tail_p = 1.0;
    let mut i = 1u32;
    loop {
        let p = (1.0 - q) * q.powi(i as i32 - 1);
        let rest = tail_p - p;
        // stop once the remainder would hold fewer than 5 expected balls
        if rest * (total as f64) < 5.0 {
            break;
        }
        cells.push((hist.get(&i).copied().unwrap_or(0) as f64, p * total as f64));
        tail_p = rest;
        i += 1;
    }
    let tail_obs: u64 = hist.range(i..).map(|(_, c)| c).sum();
    cells.push((tail_obs as f64, tail_p * total as f64));
    let stat = cells.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    (stat, cells.len() - 1)
}

/// Total peer-sampling messages of one run.
pub fn check_sampling_cost(messages: &[u64], n: usize, d: usize, p: &CheckParams) -> CheckResult {
    let kind = CheckKind::SamplingCost;
    let bound = p.sampling_factor * (n * d) as f64;
    let worst = messages.iter().copied().max().unwrap_or(0) as f64;
    let avg = mean(&messages.iter().map(|&m| m as f64).collect::<Vec<_>>());
    CheckResult::new(kind, worst <= bound, worst, format!("<= {bound}"))
        .with_detail(format!("mean {avg:.1} over {} trials", messages.len()))
}

/// Largest per-ball error over ungated balls, and largest `|sum|` at
/// multiples of `n`.
pub fn check_zero_sum(
    kind: CheckKind,
    per_ball: &[f64],
    at_checkpoints: &[f64],
    n: usize,
    p: &CheckParams,
) -> CheckResult {
    let ball_err = max(per_ball).max(0.0);
    let sum_err = max(at_checkpoints).max(0.0);
    let bound = p.zero_sum_relative * n as f64;
    let passed = ball_err <= p.zero_sum_exact && sum_err <= bound;
    CheckResult::new(
        kind,
        passed,
        sum_err,
        format!("per-ball error <= {:e}, |sum| <= {bound}", p.zero_sum_exact),
    )
    .with_detail(format!("per-ball error {ball_err:e}"))
}

/// Smallest non-positive fraction seen at any multiple of `n`.
pub fn check_nonpositive_abundance(min_fractions: &[f64], d: usize) -> CheckResult {
    let bound = 1.0 / (2.0 * d as f64);
    let observed = min_fractions.iter().copied().fold(f64::INFINITY, f64::min);
    CheckResult::new(
        CheckKind::NonpositiveAbundance,
        observed >= bound,
        observed,
        format!(">= {bound}"),
    )
}

/// Pooled successes over probed balls.
pub fn check_retry_success(successes: u64, probed: u64, p: &CheckParams) -> CheckResult {
    let observed = if probed == 0 {
        f64::NAN
    } else {
        successes as f64 / probed as f64
    };
    CheckResult::new(
        CheckKind::RetrySuccess,
        observed >= p.retry_success_min,
        observed,
        format!(">= {}", p.retry_success_min),
    )
    .with_detail(format!("{probed} balls probed"))
}

/// Per-trial mean of estimates over bins, against the true average.
pub fn check_estimate_mean(means: &[f64], true_avg: f64, p: &CheckParams) -> CheckResult {
    let observed = mean(means);
    CheckResult::new(
        CheckKind::EstimateMean,
        (observed - true_avg).abs() <= p.estimate_mean_tolerance,
        observed,
        format!("{true_avg} +/- {}", p.estimate_mean_tolerance),
    )
}

/// Per-trial sample variance of estimates over bins.
pub fn check_estimate_variance(
    variances: &[f64],
    n: usize,
    d: usize,
    p: &CheckParams,
) -> CheckResult {
    let target = 1.0 / d as f64 - 1.0 / n as f64;
    let observed = mean(variances);
    let tol = p.estimate_variance_relative * target;
    CheckResult::new(
        CheckKind::EstimateVariance,
        (observed - target).abs() <= tol,
        observed,
        format!("{target:.4} +/- {tol:.4}"),
    )
}

/// Every trial's gap within `factor * (w_star + k)`.
pub fn check_weighted_gap(gaps: &[f64], w_star: f64, k: f64, p: &CheckParams) -> CheckResult {
    let bound = p.weighted_factor * (w_star + k);
    let worst = max(gaps);
    CheckResult::new(
        CheckKind::WeightedGap,
        worst <= bound,
        worst,
        format!("<= {bound} in every trial"),
    )
}

/// Fraction of trials with `md_gap <= bound`.
pub fn check_md_gap(md_gaps: &[f64], p: &CheckParams) -> CheckResult {
    let ok = md_gaps.iter().filter(|&&g| g <= p.md_gap_bound).count();
    let observed = ok as f64 / md_gaps.len().max(1) as f64;
    CheckResult::new(
        CheckKind::MdGap,
        !md_gaps.is_empty() && observed >= p.md_quantile,
        observed,
        format!(
            "md_gap <= {} in >= {} of trials",
            p.md_gap_bound, p.md_quantile
        ),
    )
    .with_detail(format!("worst {:.3}", max(md_gaps)))
}

pub fn round_bound(n: usize) -> f64 {
    let ll = (n as f64).log2().max(1.0).log2().max(0.0);
    3.0 * ll + 5.0
}

/// Mean rounds against `3 log2 log2 n + 5`, plus the final gap.
pub fn check_parallel_rounds(
    rounds: &[u32],
    gaps: &[f64],
    n: usize,
    p: &CheckParams,
) -> CheckResult {
    let bound = round_bound(n);
    let observed = mean(&rounds.iter().map(|&r| r as f64).collect::<Vec<_>>());
    let worst_gap = max(gaps);
    let passed = observed <= bound && worst_gap <= p.parallel_gap_bound;
    CheckResult::new(
        CheckKind::ParallelRounds,
        passed,
        observed,
        format!("mean rounds <= {bound:.3}, gap <= {}", p.parallel_gap_bound),
    )
    .with_detail(format!(
        "max rounds {}, worst gap {worst_gap:.3}",
        rounds.iter().max().unwrap_or(&0)
    ))
}

/// Mean gaps of one choice, greedy and the estimated-gap allocator.
pub fn check_baseline_ordering(one: &[f64], greedy: &[f64], idea: &[f64]) -> CheckResult {
    let (a, b, c) = (mean(one), mean(greedy), mean(idea));
    CheckResult::new(
        CheckKind::BaselineOrdering,
        a > b && b > c,
        b,
        "one > greedy > idea".into(),
    )
    .with_detail(format!("one {a:.3}, greedy {b:.3}, idea {c:.3}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_synthetic_passes_gap_theorem() {
        let p = CheckParams::default();
        let flat: Vec<(u64, Vec<f64>)> = [1, 10, 100, 1000]
            .iter()
            .map(|&r| (r, vec![0.0; 5]))
            .collect();
        let r = check_gap_theorem(&flat, &p);
        assert!(r.passed);
        assert_eq!(r.observed, 0.0);
    }

    #[test]
    fn growing_gap_fails() {
        let p = CheckParams::default();
        let growing: Vec<(u64, Vec<f64>)> = [1u64, 10, 100, 1000]
            .iter()
            .map(|&r| (r, vec![(r as f64).ln(); 5]))
            .collect();
        assert!(!check_gap_theorem(&growing, &p).passed);
    }

    #[test]
    fn retry_targets() {
        assert!((expected_retries(2) - 4.0 / 3.0).abs() < 1e-12);
        assert!((expected_retries(6) - 1.015_873).abs() < 1e-6);
        assert!((expected_retries(3) - 8.0 / 7.0).abs() < 1e-12);
        let p = CheckParams::default();
        assert!(check_retry_expectation(&[1.3, 1.35], 2, &p).passed);
        assert!(!check_retry_expectation(&[1.1], 2, &p).passed);
        assert!(!check_retry_expectation(&[1.3, 2.0], 2, &p).passed);
    }

    #[test]
    fn full_choice_counts() {
        // d = n: every bin is in every set
        let counts = vec![vec![50u64; 4]; 3];
        let r = check_choice_statistics(&counts, 50, 4, &CheckParams::default());
        assert!(r.passed, "{}", r.line());
        assert_eq!(r.observed, 50.0);
    }

    #[test]
    fn sampling_and_rounds() {
        let p = CheckParams::default();
        assert!(check_sampling_cost(&[0, 0], 1000, 2, &p).passed);
        assert!(check_sampling_cost(&[8000], 1000, 2, &p).passed);
        assert!(!check_sampling_cost(&[8001], 1000, 2, &p).passed);
        assert!((round_bound(256) - 14.0).abs() < 1e-12);
        assert!((round_bound(65536) - 17.0).abs() < 1e-12);
    }

    #[test]
    fn geometric_sample_has_small_statistic() {
        // exact geometric counts for d = 2 over 4^10 balls give a zero statistic
        let mut hist: BTreeMap<u32, u64> = (1..=10).map(|i| (i, 3 * 4u64.pow(10 - i))).collect();
        hist.insert(11, 1);
        let (stat, dof) = retry_decay_chi_square(&hist, 2);
        assert!(stat < 1e-6, "{stat}");
        assert!(dof >= 3);
        let mut skewed = hist.clone();
        skewed.insert(1, 900_000);
        assert!(retry_decay_chi_square(&skewed, 2).0 > 1000.0);
    }

    #[test]
    fn ordering() {
        assert!(check_baseline_ordering(&[3.0], &[2.0], &[1.0]).passed);
        assert!(!check_baseline_ordering(&[3.0], &[1.0], &[1.0]).passed);
    }

    #[test]
    fn result_line() {
        let r = check_md_gap(&[1.0, 2.0, 4.0], &CheckParams::default());
        assert!(!r.passed);
        assert!(r.line().starts_with("FAIL md_gap"));
    }
}
