//! Experiment runner for the one-access dictionary: fill, churn,
//! insertion-cost, stash-scaling and parameter-sweep studies with CSV
//! output.
//!
//! Every run derives its seed from the master seed and its run index, so a
//! given spec always produces the same rows in the same order, however many
//! worker threads execute it.

pub mod experiments;
pub mod record;
pub mod spec;

pub use experiments::{
    run_churn, run_fill, run_fill_range, run_itertime, run_scaling, run_seed, run_sweeps,
    scaling_summary, slope, sweep_means, KeyStream, ScalingSummary,
};
pub use record::{emit_csv, write_csv, ChurnRecord, IterRecord, Row, RunRecord};
pub use spec::{Experiment, ExperimentSpec, Structure};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("invalid experiment: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Dictionary(#[from] emoma::EmomaError),
    #[error("run {run} ended with broken invariants: {violations}")]
    Invariant { run: usize, violations: String },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}
