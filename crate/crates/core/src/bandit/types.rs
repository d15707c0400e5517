use std::fmt;

use serde::{Deserialize, Serialize};

use super::BanditError;

/// Number of points on the enjoyment scale.
pub const LIKERT_LEVELS: usize = 9;

/// 1-based arm index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ArmId(u32);

impl ArmId {
    /// Builds an arm id, checking `1 <= index <= num_arms`.
    pub fn new(index: u32, num_arms: usize) -> Result<Self, BanditError> {
        if index == 0 || index as usize > num_arms {
            return Err(BanditError::ArmOutOfRange { arm: index, num_arms });
        }
        Ok(ArmId(index))
    }

    /// Converts a 0-based slot into an arm id.
    pub fn from_zero_based(slot: usize) -> Self {
        ArmId(slot as u32 + 1)
    }

    pub fn get(self) -> u32 {
        self.0
    }

    pub fn slot(self) -> usize {
        self.0 as usize - 1
    }

    /// Checks the id against an arm count (deserialized ids are unchecked).
    pub fn check(self, num_arms: usize) -> Result<Self, BanditError> {
        ArmId::new(self.0, num_arms)
    }
}

impl fmt::Display for ArmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A 9-point Likert enjoyment rating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct LikertReward(u8);

impl LikertReward {
    pub const MIN: u8 = 1;
    pub const MAX: u8 = LIKERT_LEVELS as u8;

    pub fn new(value: u8) -> Result<Self, BanditError> {
        if (Self::MIN..=Self::MAX).contains(&value) {
            Ok(LikertReward(value))
        } else {
            Err(BanditError::RewardOutOfRange(value as i64))
        }
    }

    pub fn from_i64(value: i64) -> Result<Self, BanditError> {
        u8::try_from(value)
            .map_err(|_| BanditError::RewardOutOfRange(value))
            .and_then(LikertReward::new)
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub(crate) fn level_slot(self) -> usize {
        self.0 as usize - 1
    }
}

impl TryFrom<u8> for LikertReward {
    type Error = BanditError;
    fn try_from(value: u8) -> Result<Self, Self::Error> {
        LikertReward::new(value)
    }
}

impl From<LikertReward> for u8 {
    fn from(r: LikertReward) -> u8 {
        r.0
    }
}

impl fmt::Display for LikertReward {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pull {
    pub t: u32,
    pub arm: ArmId,
    pub reward: LikertReward,
}

/// Ordered pulls of one session; times run 1, 2, 3, ... without gaps.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PullHistory {
    entries: Vec<Pull>,
}

impl PullHistory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a history from `(arm, reward)` pairs at times 1, 2, ...
    pub fn from_pairs<I>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (ArmId, LikertReward)>,
    {
        let mut history = PullHistory::new();
        for (arm, reward) in pairs {
            history.push_next(arm, reward);
        }
        history
    }

    pub fn push(&mut self, t: u32, arm: ArmId, reward: LikertReward) -> Result<(), BanditError> {
        let expected = self.next_time();
        if t != expected {
            return Err(BanditError::StepMismatch { expected, got: t });
        }
        self.entries.push(Pull { t, arm, reward });
        Ok(())
    }

    pub fn push_next(&mut self, arm: ArmId, reward: LikertReward) {
        let t = self.next_time();
        self.entries.push(Pull { t, arm, reward });
    }

    pub fn next_time(&self) -> u32 {
        self.entries.len() as u32 + 1
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Pull] {
        &self.entries
    }

    /// Times `t' < t` at which arm `k` was pulled.
    pub fn pull_times(&self, k: ArmId, t: u32) -> Vec<u32> {
        self.entries
            .iter()
            .filter(|p| p.t < t && p.arm == k)
            .map(|p| p.t)
            .collect()
    }

    pub fn arm_stats(&self, num_arms: usize) -> ArmStats {
        let mut stats = ArmStats::new(num_arms);
        for p in &self.entries {
            stats.record(p.arm, p.reward);
        }
        stats
    }
}

/// Mean reward over the pulls of arm `k`, or `None` if it was never pulled.
pub fn empirical_mean(history: &PullHistory, k: ArmId) -> Option<f64> {
    let (n, sum) = history
        .entries
        .iter()
        .filter(|p| p.arm == k)
        .fold((0u64, 0u64), |(n, s), p| (n + 1, s + p.reward.get() as u64));
    (n > 0).then(|| sum as f64 / n as f64)
}

/// Sufficient statistics for the mean-based policies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArmStats {
    pub pull_counts: Vec<u64>,
    pub reward_sums: Vec<u64>,
}

impl ArmStats {
    pub fn new(num_arms: usize) -> Self {
        ArmStats {
            pull_counts: vec![0; num_arms],
            reward_sums: vec![0; num_arms],
        }
    }

    pub fn num_arms(&self) -> usize {
        self.pull_counts.len()
    }

    pub fn total_pulls(&self) -> u64 {
        self.pull_counts.iter().sum()
    }

    pub fn record(&mut self, arm: ArmId, reward: LikertReward) {
        self.pull_counts[arm.slot()] += 1;
        self.reward_sums[arm.slot()] += reward.get() as u64;
    }

    pub fn mean(&self, arm: ArmId) -> Option<f64> {
        let n = self.pull_counts[arm.slot()];
        (n > 0).then(|| self.reward_sums[arm.slot()] as f64 / n as f64)
    }

    pub fn count(&self, arm: ArmId) -> u64 {
        self.pull_counts[arm.slot()]
    }

    /// Arm with the highest empirical mean among pulled arms, lowest index on
    /// ties. Means are compared by cross-multiplication so the result is exact.
    pub fn greedy_arm(&self) -> Option<ArmId> {
        let mut best: Option<usize> = None;
        for slot in 0..self.num_arms() {
            let n = self.pull_counts[slot];
            if n == 0 {
                continue;
            }
            best = match best {
                None => Some(slot),
                Some(b) => {
                    let lhs = self.reward_sums[slot] as u128 * self.pull_counts[b] as u128;
                    let rhs = self.reward_sums[b] as u128 * n as u128;
                    if lhs > rhs {
                        Some(slot)
                    } else {
                        Some(b)
                    }
                }
            };
        }
        best.map(ArmId::from_zero_based)
    }
}
