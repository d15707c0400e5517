use rand::Rng;
use serde::{Deserialize, Serialize};

use super::resample::{check_level, percentile, percentile_interval, permutation_p, resampled_sum};
use super::StatsError;
use crate::bandit::ArmId;
use crate::config::Algorithm;
use crate::dataset::{ParticipantTrajectory, TrajectoryDataset};
use crate::seed::{derive_seed, rng_from, stream};
use crate::session::SurveyResult;

/// Sum of all rewards in a trajectory.
pub fn cumulative_reward(p: &ParticipantTrajectory) -> u32 {
    p.rewards().map(u32::from).sum()
}

fn surveys<'a>(group: &[&'a ParticipantTrajectory]) -> Result<Vec<&'a SurveyResult>, StatsError> {
    let out: Vec<_> = group.iter().filter_map(|p| p.survey.as_ref()).collect();
    if out.is_empty() {
        return Err(StatsError::EmptyGroup("no participant in the group has survey answers".into()));
    }
    Ok(out)
}

fn rate(flags: impl Iterator<Item = bool>) -> f64 {
    let (yes, n) = flags.fold((0usize, 0usize), |(y, n), f| (y + f as usize, n + 1));
    yes as f64 / n as f64
}

/// Fraction of surveyed participants who felt the sequence captured their taste.
pub fn hindsight_rate(group: &[&ParticipantTrajectory]) -> Result<f64, StatsError> {
    Ok(rate(surveys(group)?.iter().map(|s| s.hindsight_satisfied)))
}

/// Fraction of surveyed participants who would rather pick items themselves.
pub fn autonomy_rate(group: &[&ParticipantTrajectory]) -> Result<f64, StatsError> {
    Ok(rate(surveys(group)?.iter().map(|s| s.prefers_autonomy)))
}

/// Pooled correctness of the (reading, rating) memory questions.
pub fn memory_rates(group: &[&ParticipantTrajectory]) -> Result<(f64, f64), StatsError> {
    let s = surveys(group)?;
    let pooled = |correct: fn(&SurveyResult) -> u32, total: fn(&SurveyResult) -> u32| {
        let c: u32 = s.iter().map(|x| correct(x)).sum();
        let t: u32 = s.iter().map(|x| total(x)).sum();
        if t == 0 {
            f64::NAN
        } else {
            c as f64 / t as f64
        }
    };
    Ok((
        pooled(|x| x.reading_memory_correct, |x| x.reading_memory_total),
        pooled(|x| x.rating_memory_correct, |x| x.rating_memory_total),
    ))
}

/// Per-policy enjoyment and attentiveness figures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub policy: Algorithm,
    pub participants: usize,
    pub mean_cumulative_reward: f64,
    /// 2.5th and 97.5th percentiles of participants' cumulative rewards.
    pub reward_range: (f64, f64),
    pub surveyed: usize,
    pub hindsight_rate: Option<f64>,
    pub autonomy_rate: Option<f64>,
    pub reading_memory: Option<f64>,
    pub rating_memory: Option<f64>,
}

/// One summary per policy present in the dataset, in canonical policy order.
pub fn enjoyment_summary(dataset: &TrajectoryDataset) -> Vec<PolicySummary> {
    dataset
        .policies()
        .into_iter()
        .filter_map(|policy| {
            let group = dataset.group(policy);
            if group.is_empty() {
                return None;
            }
            let mut totals: Vec<f64> = group.iter().map(|p| cumulative_reward(p) as f64).collect();
            totals.sort_by(|a, b| a.total_cmp(b));
            let memory = memory_rates(&group).ok();
            Some(PolicySummary {
                policy,
                participants: group.len(),
                mean_cumulative_reward: totals.iter().sum::<f64>() / totals.len() as f64,
                reward_range: (percentile(&totals, 0.025), percentile(&totals, 0.975)),
                surveyed: group.iter().filter(|p| p.survey.is_some()).count(),
                hindsight_rate: hindsight_rate(&group).ok(),
                autonomy_rate: autonomy_rate(&group).ok(),
                reading_memory: memory.map(|m| m.0),
                rating_memory: memory.map(|m| m.1),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffTestOptions {
    pub n_perm: usize,
    pub n_boot: usize,
    pub level: f64,
}

impl Default for DiffTestOptions {
    fn default() -> Self {
        Self { n_perm: 10_000, n_boot: 5_000, level: 0.95 }
    }
}

/// Difference of group means against a baseline group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffTest {
    pub delta: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_value: f64,
    pub exhaustive: bool,
    pub n_group: usize,
    pub n_baseline: usize,
}

/// `mean(group) - mean(baseline)` with a two-sided relabeling p-value and a
/// percentile interval from resampling participants within each group.
pub fn mean_diff_test<R: Rng + ?Sized>(
    group: &[f64],
    baseline: &[f64],
    opts: &DiffTestOptions,
    rng: &mut R,
) -> Result<DiffTest, StatsError> {
    check_level(opts.level)?;
    if opts.n_boot == 0 {
        return Err(StatsError::InvalidParameter("n_boot must be at least 1".into()));
    }
    let perm = permutation_p(group, baseline, opts.n_perm, rng)?;
    let (n_g, n_b) = (group.len() as f64, baseline.len() as f64);
    let replicates: Vec<f64> = (0..opts.n_boot)
        .map(|_| resampled_sum(group, rng) / n_g - resampled_sum(baseline, rng) / n_b)
        .collect();
    let (ci_low, ci_high) = percentile_interval(replicates, opts.level);
    Ok(DiffTest {
        delta: perm.observed,
        ci_low,
        ci_high,
        p_value: perm.p_value,
        exhaustive: perm.exhaustive,
        n_group: group.len(),
        n_baseline: baseline.len(),
    })
}

/// [`mean_diff_test`] on 0/1 indicators.
pub fn proportion_diff_test<R: Rng + ?Sized>(
    group: &[bool],
    baseline: &[bool],
    opts: &DiffTestOptions,
    rng: &mut R,
) -> Result<DiffTest, StatsError> {
    let as_f64 = |v: &[bool]| v.iter().map(|&b| b as u8 as f64).collect::<Vec<_>>();
    mean_diff_test(&as_f64(group), &as_f64(baseline), opts, rng)
}

/// An algorithm compared with the self-selected baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmComparison {
    pub algorithm: Algorithm,
    /// Hindsight-satisfaction rate difference.
    pub hindsight: DiffTest,
    /// Rating-memory correctness difference (per-participant fractions).
    pub rating_memory: DiffTest,
}

/// Compares every other policy in the dataset with the self-selected group.
/// Each comparison draws from its own seed stream so results do not depend
/// on which other policies are present.
pub fn algorithm_comparisons(
    dataset: &TrajectoryDataset,
    opts: &DiffTestOptions,
    seed: u64,
) -> Result<Vec<AlgorithmComparison>, StatsError> {
    let baseline = dataset.group(Algorithm::SelfSelected);
    let base_surveys = surveys(&baseline)?;
    let hindsight = |s: &[&SurveyResult]| s.iter().map(|x| x.hindsight_satisfied).collect::<Vec<_>>();
    let rating = |s: &[&SurveyResult]| {
        s.iter()
            .filter(|x| x.rating_memory_total > 0)
            .map(|x| x.rating_memory_correct as f64 / x.rating_memory_total as f64)
            .collect::<Vec<_>>()
    };
    let mut out = Vec::new();
    for algorithm in dataset.policies() {
        if algorithm == Algorithm::SelfSelected {
            continue;
        }
        let group = dataset.group(algorithm);
        let Ok(group_surveys) = surveys(&group) else { continue };
        let index = Algorithm::ALL.iter().position(|a| *a == algorithm).unwrap_or(0) as u64;
        let mut rng = rng_from(derive_seed(seed, stream::PERMUTATION, 0x100 + index));
        out.push(AlgorithmComparison {
            algorithm,
            hindsight: proportion_diff_test(&hindsight(&group_surveys), &hindsight(&base_surveys), opts, &mut rng)?,
            rating_memory: mean_diff_test(&rating(&group_surveys), &rating(&base_surveys), opts, &mut rng)?,
        });
    }
    Ok(out)
}

/// Mean and sample standard deviation of rewards at one position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub index: u32,
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
}

fn summarize(index: u32, values: &[f64]) -> SeriesPoint {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = if n < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    SeriesPoint { index, n, mean, sd }
}

/// Reward statistics on `arm` by within-arm pull index (1 = first pull of the arm).
pub fn pull_index_series(group: &[&ParticipantTrajectory], arm: ArmId) -> Vec<SeriesPoint> {
    let mut by_index: Vec<Vec<f64>> = Vec::new();
    for p in group {
        for (j, pull) in p.pulls.iter().filter(|x| x.arm == arm).enumerate() {
            if by_index.len() <= j {
                by_index.resize_with(j + 1, Vec::new);
            }
            by_index[j].push(pull.reward.get() as f64);
        }
    }
    by_index
        .iter()
        .enumerate()
        .map(|(j, v)| summarize(j as u32 + 1, v))
        .collect()
}

/// Reward statistics by time step, across all arms.
pub fn time_series(group: &[&ParticipantTrajectory]) -> Vec<SeriesPoint> {
    let mut by_t: Vec<Vec<f64>> = Vec::new();
    for p in group {
        for pull in &p.pulls {
            let slot = pull.t as usize - 1;
            if by_t.len() <= slot {
                by_t.resize_with(slot + 1, Vec::new);
            }
            by_t[slot].push(pull.reward.get() as f64);
        }
    }
    by_t.iter()
        .enumerate()
        .filter(|(_, v)| !v.is_empty())
        .map(|(t, v)| summarize(t as u32 + 1, v))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bandit::LikertReward;
    use crate::dataset::PullRow;

    fn trajectory(policy: Algorithm, rewards: &[u8], survey: Option<SurveyResult>) -> ParticipantTrajectory {
        ParticipantTrajectory {
            id: "p".into(),
            policy,
            heavy: None,
            attention_rate: None,
            attention_passed: None,
            pulls: rewards
                .iter()
                .enumerate()
                .map(|(i, &r)| PullRow {
                    t: i as u32 + 1,
                    arm: ArmId::from_zero_based(i % 2),
                    within_arm_index: i as u32 / 2 + 1,
                    item_id: format!("i{i}"),
                    reward: LikertReward::new(r).unwrap(),
                    dwell_s: 10.0,
                    attention_correct: true,
                })
                .collect(),
            survey,
        }
    }

    fn survey(hindsight: bool, rating_correct: u32) -> SurveyResult {
        SurveyResult {
            reading_memory_correct: 3,
            reading_memory_total: 3,
            rating_memory_correct: rating_correct,
            rating_memory_total: 3,
            hindsight_satisfied: hindsight,
            prefers_autonomy: !hindsight,
        }
    }

    #[test]
    fn cumulative_reward_extremes() {
        assert_eq!(cumulative_reward(&trajectory(Algorithm::Ucb, &[9; 50], None)), 450);
        assert_eq!(cumulative_reward(&trajectory(Algorithm::Ucb, &[1; 50], None)), 50);
    }

    #[test]
    fn rates() {
        let ps: Vec<_> = (0..4).map(|i| trajectory(Algorithm::Ucb, &[5], Some(survey(true, i % 4)))).collect();
        let refs: Vec<_> = ps.iter().collect();
        assert_eq!(hindsight_rate(&refs).unwrap(), 1.0);
        assert_eq!(autonomy_rate(&refs).unwrap(), 0.0);
        // rating memory: (0 + 1 + 2 + 3) / 12
        assert_eq!(memory_rates(&refs).unwrap(), (1.0, 0.5));
        let bare = trajectory(Algorithm::Ucb, &[5], None);
        assert!(hindsight_rate(&[&bare]).is_err());
    }

    /// Exact two-sided p by enumerating which members form the first group.
    fn enumerate_p(values: &[i64], n_a: usize) -> f64 {
        let n = values.len();
        let n_b = (n - n_a) as i64;
        let total: i64 = values.iter().sum();
        let stat = |mask: u32| {
            let s_a: i64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| values[i]).sum();
            (s_a * n_b - (total - s_a) * n_a as i64).abs()
        };
        let observed = stat((1 << n_a) - 1);
        let masks: Vec<u32> = (0u32..1 << n).filter(|m| m.count_ones() as usize == n_a).collect();
        masks.iter().filter(|&&m| stat(m) >= observed).count() as f64 / masks.len() as f64
    }

    #[test]
    fn three_vs_three_matches_enumeration() {
        let cases: [([bool; 3], [bool; 3]); 4] = [
            ([true, true, true], [false, false, false]),
            ([true, false, true], [false, false, true]),
            ([true, true, false], [true, true, false]),
            ([false, false, false], [true, false, false]),
        ];
        let opts = DiffTestOptions { n_perm: 20, n_boot: 100, level: 0.95 };
        for (g, b) in cases {
            let out = proportion_diff_test(&g, &b, &opts, &mut rng_from(1)).unwrap();
            assert!(out.exhaustive);
            let ints: Vec<i64> = g.iter().chain(&b).map(|&x| x as i64).collect();
            assert_eq!(out.p_value, enumerate_p(&ints, 3), "{g:?} vs {b:?}");
        }
    }

    #[test]
    fn all_true_vs_all_false() {
        let opts = DiffTestOptions { n_perm: 184_756, n_boot: 200, level: 0.95 };
        let out = proportion_diff_test(&[true; 10], &[false; 10], &opts, &mut rng_from(2)).unwrap();
        assert_eq!(out.delta, 1.0);
        assert!(out.exhaustive);
        // only the observed split and its mirror image reach |delta| = 1
        assert_eq!(out.p_value, 2.0 / 184_756.0);
        assert_eq!((out.ci_low, out.ci_high), (1.0, 1.0));
    }

    #[test]
    fn identical_groups() {
        let flags = [true, false, true, true, false, false, true];
        let out = proportion_diff_test(&flags, &flags, &DiffTestOptions::default(), &mut rng_from(3)).unwrap();
        assert_eq!(out.delta, 0.0);
        assert_eq!(out.p_value, 1.0);
        assert!(proportion_diff_test(&[], &flags, &DiffTestOptions::default(), &mut rng_from(3)).is_err());
    }

    #[test]
    fn series_shapes() {
        let a = trajectory(Algorithm::Cycle, &[2, 9, 4, 9], None);
        let b = trajectory(Algorithm::Cycle, &[4, 9, 6, 9], None);
        let s = pull_index_series(&[&a, &b], ArmId::from_zero_based(0));
        assert_eq!(s.len(), 2);
        assert_eq!((s[0].mean, s[1].mean), (3.0, 5.0));
        assert!((s[0].sd - 2f64.sqrt()).abs() < 1e-12);
        let t = time_series(&[&a, &b]);
        assert_eq!(t.len(), 4);
        assert_eq!(t[1].sd, 0.0);
    }
}
