//! Arm-selection policies behind a uniform `get_arm` / `update_arm` interface.
//!
//! All policies are pure transitions over an explicit [`PolicyState`]; the
//! caller owns persistence and supplies the random generator.

mod policy;
mod sequence;
mod types;

pub use policy::{
    eps_greedy_select, etc_exploration_len, etc_select, get_arm, ts_select, ts_update,
    ucb_index, ucb_select, update_arm, PolicyKind, PolicyState, TsDraw, DEFAULT_EPSILON,
    DEFAULT_ETC_CONSTANT,
};
pub use sequence::{cycle_sequence, default_block_order, repeat_sequence};
pub use types::{empirical_mean, ArmId, ArmStats, LikertReward, Pull, PullHistory, LIKERT_LEVELS};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BanditError {
    #[error("ARM_OUT_OF_RANGE: arm {arm} not in 1..={num_arms}")]
    ArmOutOfRange { arm: u32, num_arms: usize },
    #[error("RATING_OUT_OF_RANGE: reward {0} not in 1..=9")]
    RewardOutOfRange(i64),
    #[error("STEP_MISMATCH: expected step {expected}, got {got}")]
    StepMismatch { expected: u32, got: u32 },
    #[error("STEP_BEYOND_HORIZON: step {t} exceeds horizon {horizon}")]
    BeyondHorizon { t: u32, horizon: u32 },
    #[error("UNINITIALIZED_ARM: arm {0} has no pulls after the forced initialization rounds")]
    UninitializedArm(ArmId),
    #[error("NO_PULLS: exploitation requires at least one pulled arm")]
    NoPulls,
    #[error("SELF_SELECTED: self-selected sessions choose their own arms")]
    SelfSelected,
    #[error("WRONG_POLICY: operation requires {expected:?}, state is {got:?}")]
    WrongPolicy { expected: PolicyKind, got: PolicyKind },
    #[error("INVALID_SEQUENCE: {0}")]
    InvalidSequence(String),
    #[error("INVALID_PARAMETER: {0}")]
    InvalidParameter(String),
}
