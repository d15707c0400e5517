use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::resample::{check_level, percentile_interval, permutation_p, resampled_sum, PermutationOutcome};
use super::StatsError;
use crate::bandit::ArmId;
use crate::dataset::ParticipantTrajectory;

/// Per-participant mean reward on `arm`; every participant must have pulled
/// it exactly `m` times.
pub fn participant_arm_means(
    group: &[&ParticipantTrajectory],
    arm: ArmId,
    m: usize,
) -> Result<Vec<f64>, StatsError> {
    group
        .iter()
        .map(|p| {
            let (count, sum) = p
                .pulls
                .iter()
                .filter(|pull| pull.arm == arm)
                .fold((0usize, 0u32), |(c, s), pull| (c + 1, s + pull.reward.get() as u32));
            if count != m || m == 0 {
                return Err(StatsError::UnbalancedPulls {
                    participant: p.id.clone(),
                    arm: arm.get(),
                    count,
                    expected: m,
                });
            }
            Ok(sum as f64 / m as f64)
        })
        .collect()
}

/// Mean over participants of each participant's mean reward on `arm`.
pub fn group_arm_mean(group: &[&ParticipantTrajectory], arm: ArmId, m: usize) -> Result<f64, StatsError> {
    if group.is_empty() {
        return Err(StatsError::EmptyGroup(format!("no participants for arm {arm}")));
    }
    let means = participant_arm_means(group, arm, m)?;
    Ok(means.iter().sum::<f64>() / means.len() as f64)
}

/// `group_arm_mean(a) - group_arm_mean(b)`; positive when `a` enjoys the arm more.
pub fn tau(
    a: &[&ParticipantTrajectory],
    b: &[&ParticipantTrajectory],
    arm: ArmId,
    m: usize,
) -> Result<f64, StatsError> {
    Ok(group_arm_mean(a, arm, m)? - group_arm_mean(b, arm, m)?)
}

/// Two-sided label-permutation test of `tau` for one arm.
pub fn permutation_test<R: Rng + ?Sized>(
    a: &[&ParticipantTrajectory],
    b: &[&ParticipantTrajectory],
    arm: ArmId,
    m: usize,
    n_perm: usize,
    rng: &mut R,
) -> Result<PermutationOutcome, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::DegenerateGroups(a.len(), b.len()));
    }
    let means_a = participant_arm_means(a, arm, m)?;
    let means_b = participant_arm_means(b, arm, m)?;
    permutation_p(&means_a, &means_b, n_perm, rng)
}

/// Rewards on `arm` grouped by the time step they were collected at.
fn pull_cells(group: &[&ParticipantTrajectory], arm: ArmId) -> Vec<Vec<f64>> {
    let mut cells: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for p in group {
        for pull in p.pulls.iter().filter(|pull| pull.arm == arm) {
            cells.entry(pull.t).or_default().push(pull.reward.get() as f64);
        }
    }
    cells.into_values().collect()
}

/// Percentile bootstrap interval for `tau`, resampling at the level of arm
/// pulls: every `(group, t)` cell of rewards on `arm` is redrawn with
/// replacement at its own size.
pub fn bootstrap_ci<R: Rng + ?Sized>(
    a: &[&ParticipantTrajectory],
    b: &[&ParticipantTrajectory],
    arm: ArmId,
    m: usize,
    n_boot: usize,
    level: f64,
    rng: &mut R,
) -> Result<(f64, f64), StatsError> {
    check_level(level)?;
    if n_boot == 0 {
        return Err(StatsError::InvalidParameter("n_boot must be at least 1".into()));
    }
    // validates balance and non-empty groups
    tau(a, b, arm, m)?;
    let cells_a = pull_cells(a, arm);
    let cells_b = pull_cells(b, arm);
    if cells_a.is_empty() || cells_b.is_empty() {
        return Err(StatsError::EmptyCell(arm.get()));
    }
    let denom_a = (a.len() * m) as f64;
    let denom_b = (b.len() * m) as f64;
    let replicates: Vec<f64> = (0..n_boot)
        .map(|_| {
            let sum_a: f64 = cells_a.iter().map(|c| resampled_sum(c, rng)).sum();
            let sum_b: f64 = cells_b.iter().map(|c| resampled_sum(c, rng)).sum();
            sum_a / denom_a - sum_b / denom_b
        })
        .collect();
    Ok(percentile_interval(replicates, level))
}

/// One row of the per-arm drift table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmTestReport {
    pub arm: ArmId,
    pub label: String,
    pub tau: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_value: f64,
    pub exhaustive: bool,
    pub corrected_alpha: f64,
    pub rejected: bool,
}
