//! Synthetic participants for checking the inference pipeline.
//!
//! A [`UserModel`] turns an exposure history into Likert rewards. Static
//! users have fixed per-arm reward distributions; satiating (sensitizing)
//! users enjoy an arm less (more) the more it was pulled recently, with an
//! exponentially decaying exposure count. Cohorts run through the same
//! session state machine as real participants.

mod cohort;
mod model;
mod study;

pub use cohort::{simulate_cohort, simulate_participant, CohortGroup, CohortSpec};
pub use model::{
    draw_reward, expected_arm_means, expected_gap, expected_reward, reward_distribution, tune_gamma, DynamicsKind,
    Exposure, UserModel,
};
pub use study::{
    calibration_study, coverage_study, power_study, run_study, CoverageOutcome, PowerPoint, StudyOptions,
    StudyOutcome,
};

use thiserror::Error;

use crate::config::ConfigError;
use crate::session::SessionError;
use crate::stats::StatsError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("INVALID_MODEL: {0}")]
    Model(String),
    #[error("INVALID_COHORT: {0}")]
    Cohort(String),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("IO_ERROR: {0}")]
    Io(#[from] std::io::Error),
    #[error("JSON_ERROR: {0}")]
    Json(#[from] serde_json::Error),
}
