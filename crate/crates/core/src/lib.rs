//! Balls-into-bins allocation by estimated gap.
//!
//! Each bin keeps its load and a private estimate of the system average;
//! a ball goes to the candidate whose load sits furthest below its own
//! estimate. The crate provides the sequential allocator (numbered and
//! sampled estimate updates), weighted and multi-dimensional variants, a
//! round-based parallel protocol, classic baselines, and a harness that
//! runs parameter grids and checks statistical claims.
//!
//! ```
//! use allocbench::{simulate, RunOptions, SimConfig};
//!
//! let cfg = SimConfig::new(100, 1_000, 2).with_seed(7);
//! let out = simulate(&cfg, &RunOptions::default()).unwrap();
//! assert!(out.report.gap <= 4.0);
//! ```

pub mod baselines;
pub mod bench;
pub mod error;
pub mod idea;
pub mod model;
pub mod multidim;
pub mod parallel;
pub mod report;
pub mod rng;
pub mod sim;
pub mod trace;
pub mod weighted;

pub use error::{ConfigError, Error, Result};
pub use idea::{
    allocate_ball, run_sequential, run_sequential_with, EstimateUpdatePolicy, SystemState,
};
pub use model::{estimated_gap, Algorithm, AllocationOutcome, BinState, Mode, SimConfig, Variant};
pub use report::{gap_report, GapReport, ReportAggregate};
pub use rng::{choose_candidates, mix_seed, SimRng};
pub use sim::{simulate, Diagnostics, RunOptions, RunOutput};
pub use trace::TraceRecord;
pub use weighted::{WeightModel, WeightShape};
