//! Field-test platform for K-armed bandit recommenders.
//!
//! * [`bandit`]: arm-selection policies and the fixed CYCLE / REPEAT sequences.
//! * [`session`]: the participant state machine (assignment, rating loop,
//!   attention checks, post-study survey).
//! * [`dataset`]: the trajectory interchange format (CSV and JSON).
//! * [`stats`]: per-arm drift tests, bootstrap intervals, Holm correction and
//!   enjoyment / attentiveness summaries.
//! * [`sim`]: synthetic interactants and calibration / power studies.

pub mod bandit;
pub mod config;
pub mod dataset;
pub mod seed;
pub mod session;
pub mod sim;
pub mod stats;

pub use bandit::{ArmId, LikertReward, PolicyKind, PolicyState, PullHistory};
pub use config::{Algorithm, Catalog, ExperimentConfig};
pub use dataset::TrajectoryDataset;
pub use session::{Phase, Session};
