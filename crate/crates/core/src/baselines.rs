//! Classic allocators for comparison. They keep loads only; estimates stay
//! at zero.
//!
//! Candidate sets come from the same stream calls as IDEA's first draw, so
//! runs under one seed are paired.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, Result};
use crate::idea::{pick_min, SystemState};
use crate::model::{Algorithm, AllocationOutcome, SimConfig, GAP_TOLERANCE};
use crate::report::GapReport;
use crate::rng::SimRng;
use crate::sim::{Diagnostics, RunOptions, RunOutput};
use crate::trace::{chain_state_hash, TraceRecord, CHAIN_START};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    OneChoice,
    GreedyD {
        d: usize,
    },
    OnePlusBeta {
        beta: f64,
    },
    /// `retry_cap` candidate sets are drawn for every ball.
    GreedyDRetry {
        d: usize,
        retry_cap: u32,
    },
}

impl BaselineKind {
    /// `GreedyDRetry` takes `gamma_max` as its number of sets.
    pub fn from_config(cfg: &SimConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        match cfg.algorithm {
            Algorithm::OneChoice => Ok(BaselineKind::OneChoice),
            Algorithm::GreedyD => Ok(BaselineKind::GreedyD { d: cfg.d }),
            Algorithm::OnePlusBeta => Ok(BaselineKind::OnePlusBeta {
                beta: cfg.beta.ok_or(ConfigError::MissingBeta)?,
            }),
            Algorithm::GreedyDRetry => Ok(BaselineKind::GreedyDRetry {
                d: cfg.d,
                retry_cap: cfg.gamma_max,
            }),
            Algorithm::Idea => Err(ConfigError::UnsupportedVariant {
                algorithm: "idea".into(),
                variant: "baseline".into(),
            }),
        }
    }
}

fn place(state: &mut SystemState, bin: usize, candidates: Vec<Vec<usize>>) -> AllocationOutcome {
    state.update_bin(bin, |b| b.load += 1.0);
    state.balls_placed += 1;
    AllocationOutcome {
        ball_index: state.balls_placed,
        retries_used: candidates.len() as u32,
        candidates,
        destination: bin,
        found_nonpositive: false,
    }
}

fn least_loaded(state: &SystemState, set: &[usize], rng: &mut SimRng) -> usize {
    let mut ties = Vec::with_capacity(set.len());
    pick_min(set, |b| state.bins[b].load, GAP_TOLERANCE, rng, &mut ties)
}

/// One uniform bin.
pub fn one_choice_allocate(state: &mut SystemState, rng: &mut SimRng) -> AllocationOutcome {
    let bin = rng.below(state.n());
    place(state, bin, vec![vec![bin]])
}

/// Least loaded of `d` distinct uniform bins, ties uniform.
pub fn greedy_d_allocate(state: &mut SystemState, rng: &mut SimRng, d: usize) -> AllocationOutcome {
    let mut set = Vec::with_capacity(d);
    rng.fill_candidates(state.n(), d, &mut set);
    let bin = least_loaded(state, &set, rng);
    place(state, bin, vec![set])
}

/// With probability `beta` a two-choice step, otherwise one choice. The
/// coin is tossed before any bin is drawn.
pub fn one_plus_beta_allocate(
    state: &mut SystemState,
    rng: &mut SimRng,
    beta: f64,
) -> Result<AllocationOutcome, ConfigError> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(ConfigError::InvalidBeta(beta));
    }
    if rng.unit() < beta {
        Ok(greedy_d_allocate(state, rng, state.n().min(2)))
    } else {
        Ok(one_choice_allocate(state, rng))
    }
}

/// Draws `retry_cap` candidate sets and places the ball in the least loaded
/// distinct bin seen across all of them.
pub fn greedy_d_retry_allocate(
    state: &mut SystemState,
    rng: &mut SimRng,
    d: usize,
    retry_cap: u32,
) -> AllocationOutcome {
    let n = state.n();
    let mut sets = Vec::with_capacity(retry_cap as usize);
    let mut seen: Vec<usize> = Vec::with_capacity(d * retry_cap as usize);
    let mut set = Vec::with_capacity(d);
    for _ in 0..retry_cap.max(1) {
        rng.fill_candidates(n, d, &mut set);
        for &b in &set {
            if !seen.contains(&b) {
                seen.push(b);
            }
        }
        sets.push(set.clone());
    }
    let bin = least_loaded(state, &seen, rng);
    place(state, bin, sets)
}

/// Allocates one ball with `kind`.
pub fn allocate_baseline(
    state: &mut SystemState,
    rng: &mut SimRng,
    kind: BaselineKind,
) -> Result<AllocationOutcome, ConfigError> {
    Ok(match kind {
        BaselineKind::OneChoice => one_choice_allocate(state, rng),
        BaselineKind::GreedyD { d } => greedy_d_allocate(state, rng, d),
        BaselineKind::OnePlusBeta { beta } => one_plus_beta_allocate(state, rng, beta)?,
        BaselineKind::GreedyDRetry { d, retry_cap } => {
            greedy_d_retry_allocate(state, rng, d, retry_cap)
        }
    })
}

/// Runs `cfg.m` unit balls through the baseline selected by `cfg.algorithm`.
pub fn run_baseline(cfg: &SimConfig, opts: &RunOptions) -> Result<RunOutput> {
    let kind = BaselineKind::from_config(cfg)?;
    let mut rng = SimRng::new(cfg.seed);
    let mut state = SystemState::new(cfg.n);
    let mut diag = Diagnostics {
        choice_counts: vec![0; cfg.n],
        ..Diagnostics::default()
    };
    let mut hist: BTreeMap<u32, u64> = BTreeMap::new();
    let mut trace = opts.record_trace.then(Vec::new);
    let mut hash = CHAIN_START;
    for _ in 0..cfg.m {
        let outcome = allocate_baseline(&mut state, &mut rng, kind)?;
        *hist.entry(outcome.retries_used).or_insert(0) += 1;
        if let Some(last) = outcome.candidates.last() {
            for &c in last {
                diag.choice_counts[c] += 1;
            }
        }
        if let Some(t) = trace.as_mut() {
            hash = chain_state_hash(hash, &state.bins);
            t.push(TraceRecord::new(outcome, hash, None));
        }
    }
    let total_weight = cfg.m as f64;
    let report = GapReport::from_parts(&state.bins, hist, total_weight, 0, 1.0)?;
    Ok(RunOutput {
        report,
        trace,
        diagnostics: diag,
        total_weight,
        claim: true,
        ..RunOutput::default()
    })
}
