//! Inference for preference drift and algorithm comparisons.
//!
//! The drift test compares, arm by arm, the participant-averaged mean reward
//! under two fixed sequences (CYCLE minus REPEAT by default). Significance
//! comes from a label-permutation test, intervals from an arm-pull-level
//! bootstrap, and the per-arm family is corrected with Holm's step-down
//! procedure.

mod drift;
mod holm;
mod metrics;
mod report;
mod resample;

pub use drift::{bootstrap_ci, group_arm_mean, participant_arm_means, permutation_test, tau, ArmTestReport};
pub use holm::{holm_correct, HolmDecision};
pub use metrics::{
    algorithm_comparisons, cumulative_reward, enjoyment_summary, hindsight_rate, autonomy_rate,
    mean_diff_test, memory_rates, proportion_diff_test, pull_index_series, time_series,
    AlgorithmComparison, DiffTest, DiffTestOptions, PolicySummary, SeriesPoint,
};
pub use report::{
    render_comparisons, render_drift_report, render_summary, stratified_report, AnalysisOptions,
    DriftReport, Stratum, StratumReport, StratumStatus,
};
pub use resample::{exhaustive_split_count, percentile, permutation_p, PermutationOutcome};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("UNBALANCED_PULLS: participant {participant} pulled arm {arm} {count} times, expected {expected}")]
    UnbalancedPulls {
        participant: String,
        arm: u32,
        count: usize,
        expected: usize,
    },
    #[error("EMPTY_GROUP: {0}")]
    EmptyGroup(String),
    #[error("DEGENERATE_GROUPS: both groups need at least one member (got {0} and {1})")]
    DegenerateGroups(usize, usize),
    #[error("EMPTY_CELL: no rewards for arm {0} in one of the groups")]
    EmptyCell(u32),
    #[error("UNDEFINED_STRATUM: participant {0} has no heavy/light flag")]
    UndefinedStratum(String),
    #[error("INVALID_PARAMETER: {0}")]
    InvalidParameter(String),
}
