//! Evaluation harness: scoring, experiments, throughput, and fleet
//! scenarios built on top of the detector core.

pub mod align;
pub mod bench;
pub mod experiment;
pub mod fleet_sim;
pub mod metrics;
pub mod single;

pub use align::{run_ensemble, EnsembleRun, DEFAULT_SEGMENT_KAPPA};
pub use bench::{bench, BenchReport};
pub use experiment::{
    env_seed, run_experiment, AggregateRow, DetectorVariant, ExperimentConfig, MetricsReport,
    RunRecord, RuntimeStats, DEFAULT_Q_MULTIPLES, SEED_ENV_VAR,
};
pub use fleet_sim::{fleet_sim, FleetSimReport, Scenario, SimVerdict};
pub use metrics::{confusion, f1_score, Confusion, F1Stats};
pub use single::{EstimatorKind, SingleDetector};
