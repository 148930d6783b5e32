//! Doubly robust estimation of the restricted mean time in favor (RMT-IF)
//! for multi-state outcomes in individually randomized (IRT) and cluster
//! randomized (CRT) trials.
//!
//! The pipeline runs from a validated [`Dataset`] through augmented
//! inverse-probability-of-censoring weighted stage survival curves
//! ([`dr`]) to RMT-IF estimates ([`functional`]), with delete-a-group or
//! leave-one-cluster-out jackknife inference ([`jackknife`]). [`analyze`]
//! wires these together; [`sim`] provides the simulation scenarios, their
//! Monte Carlo truth and a replication harness.

pub mod covariates;
pub mod data;
pub mod dr;
pub mod error;
pub mod jackknife;
pub mod pipeline;
pub mod functional;
pub mod sim;
pub mod survival;

pub use covariates::ModelTerms;
pub use data::{
    load_long_csv, load_wide_csv, read_long_csv, read_wide_csv, winsorize_states,
    write_long_csv, write_wide_csv, Dataset, Design, DesignConfig, EstimandLevel, LongLoad,
    MultiStateRecord,
};
pub use dr::{
    estimate_stage_survival_crt, estimate_stage_survival_irt, km_plug_in_stage_survival,
    CurveFlags, Level, OutcomeModel, StageSurvivalSet, TimeGrid,
};
pub use error::{Error, Result};
pub use jackknife::{JackknifeMode, JackknifePlan, JackknifeResult};
pub use pipeline::{analyze, point_estimates, Analysis, EstimatorSpec, LevelEstimates, Method};
pub use functional::{bouquet_export, rmtif, rmtif_with, BouquetTable, Integration, RmtifEstimate};
pub use survival::{CensorModel, CoxFit, CoxOptions};

/// Library version recorded in report and truth-table provenance.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
