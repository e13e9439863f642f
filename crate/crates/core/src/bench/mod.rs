//! Experiment harness: a reference allocator for trace comparison,
//! statistical checks, and the grid runner behind the CLI.

pub mod checks;
pub mod experiment;
pub mod reference;

pub use checks::{CheckKind, CheckParams, CheckResult};
pub use experiment::{
    run_experiment, ExperimentResult, ExperimentSpec, OutputFormat, OutputOptions, ResultRow, Sweep,
};
pub use reference::{reference_allocate, reference_run};
