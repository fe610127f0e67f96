//! Experiment harnesses over the reference worlds.
//!
//! - [`trials`]: the same experiment over consecutive seeds, with a
//!   mean/stddev summary.
//! - [`transfer`]: run one world, then compare questionnaire answers given
//!   with carried memories against answers given with fresh ones.
//! - [`multiworld`]: one roster cycling through several worlds whose state
//!   persists between visits.
//! - [`ablation`]: cumulative config, memory and tool additions to the
//!   market world, tabulated as buy/sell ratios with deltas.
//! - [`stats`]: mean, sample standard deviation and the paired t-test.
//!
//! [`ExperimentConfig`] ties them to a single JSON document.

pub mod ablation;
pub mod config;
pub mod multiworld;
pub mod roster;
pub mod stats;
pub mod transfer;
pub mod trials;
pub mod world;

pub use ablation::{run_tariff_ablation, AblationInputs, AblationPlan, AblationSetting, AblationTable};
pub use config::{AblationSpec, ExperimentConfig};
pub use multiworld::{run_multiworld, MultiWorldLog, MultiWorldSchedule};
pub use roster::{AgentsSpec, BackendKind, BackendSpec, Roster};
pub use stats::{mean, paired_t_test, sample_stddev, TTest, TTestError};
pub use transfer::{run_memory_transfer, TransferPlan, TransferReport};
pub use trials::{run_env_trials, run_single, run_trials, TrialTable};
pub use world::{EnvSpec, Metrics};
