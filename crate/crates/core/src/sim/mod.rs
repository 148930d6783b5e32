//! Simulation scenarios, Monte Carlo truth and the replication harness.

mod replication;
mod scenario;
mod truth;

pub use replication::{
    run_replication, standard_method, Metric, MetricReport, MetricRow, ReplicationConfig,
    METHOD_NAMES,
};
pub use scenario::{
    derive_seed, kendall_tau, stream_rng, ArmHazard, CrtCensorHazard, CrtCovariates, CrtHazard,
    CrtScenario, IrtScenario, LatentTimes, Scenario,
};
pub use truth::{
    conditional_stage_survival, stage2_survival_direct, truth_crt, truth_irt, TruthLevel,
    TruthOptions, TruthPoint, TruthTable,
};
