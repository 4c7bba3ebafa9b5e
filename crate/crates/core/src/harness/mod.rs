//! Experiment orchestration: configuration, replicated synthetic runs, the
//! real-data pipeline, theory curves and report files.
//!
//! Replicate `r` draws everything from a ChaCha8 stream seeded with
//! `seed + r`, and records are collated in replicate order, so reports do
//! not depend on the number of worker threads.

pub mod config;
pub mod realdata;
pub mod report;
pub mod synthetic;

pub use config::{
    CovFreeSettings, CovarianceSpec, ExperimentConfig, KappaSource, LambdaMode, PrecisionMode,
    TestKind,
};
pub use realdata::{run_realdata, PreparedData, RealDataConfig, RealDataReport};
pub use report::{write_realdata_report, write_report};
pub use synthetic::{
    emit_power_curve, run_synthetic, AggregateRow, AlphaOutcome, CurvePoint, Experiment,
    ExperimentReport, ReplicateAnalysis, ReplicateOutcome, ReplicateRecord,
};

/// Published results for the standard, circulant and communities
/// experiments, including a competing method's numbers. Reference only:
/// nothing in this crate computes the competing method.
pub const REFERENCE_RESULTS_CSV: &str = include_str!("../../data/reference_results.csv");
