use itertools::Itertools;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::StatsError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PermutationOutcome {
    pub observed: f64,
    pub p_value: f64,
    /// Every distinct relabeling was enumerated instead of sampled.
    pub exhaustive: bool,
    pub permutations: u64,
}

/// `C(n, k)`, saturating at `u64::MAX`.
pub fn exhaustive_split_count(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

fn mean_difference(sum_a: f64, total: f64, n_a: usize, n_b: usize) -> f64 {
    sum_a / n_a as f64 - (total - sum_a) / n_b as f64
}

/// Two-sided permutation p-value for the difference of means between `a`
/// and `b`, relabeling members while preserving both group sizes.
///
/// When `n_perm` covers every distinct split the splits are enumerated and
/// `p = #{|d| >= |d_obs|} / C(n, |a|)` exactly. Otherwise `n_perm` random
/// relabelings are drawn and `p = (1 + #{|d| >= |d_obs|}) / (n_perm + 1)`.
pub fn permutation_p<R: Rng + ?Sized>(
    a: &[f64],
    b: &[f64],
    n_perm: usize,
    rng: &mut R,
) -> Result<PermutationOutcome, StatsError> {
    let (n_a, n_b) = (a.len(), b.len());
    if n_a == 0 || n_b == 0 {
        return Err(StatsError::DegenerateGroups(n_a, n_b));
    }
    if n_perm == 0 {
        return Err(StatsError::InvalidParameter("n_perm must be at least 1".into()));
    }
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let n = pooled.len();
    let total: f64 = pooled.iter().sum();
    let observed = mean_difference(a.iter().sum(), total, n_a, n_b);
    // distinct statistics differ by far more than float noise
    let cutoff = observed.abs() - 1e-9 * observed.abs().max(1.0);

    let splits = exhaustive_split_count(n, n_a);
    if splits <= n_perm as u64 {
        let mut extreme = 0u64;
        for chosen in (0..n).combinations(n_a) {
            let sum_a: f64 = chosen.iter().map(|&i| pooled[i]).sum();
            if mean_difference(sum_a, total, n_a, n_b).abs() >= cutoff {
                extreme += 1;
            }
        }
        return Ok(PermutationOutcome {
            observed,
            p_value: extreme as f64 / splits as f64,
            exhaustive: true,
            permutations: splits,
        });
    }

    let mut work = pooled;
    let mut extreme = 0u64;
    for _ in 0..n_perm {
        // partial Fisher-Yates: the first n_a slots form a uniform subset
        let mut sum_a = 0.0;
        for i in 0..n_a {
            let j = rng.random_range(i..n);
            work.swap(i, j);
            sum_a += work[i];
        }
        if mean_difference(sum_a, total, n_a, n_b).abs() >= cutoff {
            extreme += 1;
        }
    }
    Ok(PermutationOutcome {
        observed,
        p_value: (1 + extreme) as f64 / (n_perm as f64 + 1.0),
        exhaustive: false,
        permutations: n_perm as u64,
    })
}

/// Linear-interpolation quantile of already sorted data.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty data");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub(crate) fn percentile_interval(mut replicates: Vec<f64>, level: f64) -> (f64, f64) {
    replicates.sort_by(|x, y| x.total_cmp(y));
    let tail = (1.0 - level) / 2.0;
    (percentile(&replicates, tail), percentile(&replicates, 1.0 - tail))
}

pub(crate) fn check_level(level: f64) -> Result<(), StatsError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(StatsError::InvalidParameter(format!("confidence level {level} outside (0, 1)")));
    }
    Ok(())
}

/// Sum of `values.len()` draws with replacement from `values`.
pub(crate) fn resampled_sum<R: Rng + ?Sized>(values: &[f64], rng: &mut R) -> f64 {
    let n = values.len();
    (0..n).map(|_| values[rng.random_range(0..n)]).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;

    #[test]
    fn split_counts() {
        assert_eq!(exhaustive_split_count(4, 2), 6);
        assert_eq!(exhaustive_split_count(6, 3), 20);
        assert_eq!(exhaustive_split_count(20, 10), 184_756);
        assert_eq!(exhaustive_split_count(3, 4), 0);
        assert_eq!(exhaustive_split_count(200, 100), u64::MAX);
    }

    #[test]
    fn identical_values_give_p_one() {
        let a = [4.0; 5];
        let b = [4.0; 7];
        let mut rng = rng_from(1);
        assert_eq!(permutation_p(&a, &b, 1000, &mut rng).unwrap().p_value, 1.0);
        assert_eq!(permutation_p(&a, &b, 10_000, &mut rng).unwrap().p_value, 1.0);
    }

    #[test]
    fn degenerate_groups_rejected() {
        let mut rng = rng_from(1);
        assert!(permutation_p(&[], &[1.0], 10, &mut rng).is_err());
        assert!(permutation_p(&[1.0], &[2.0], 0, &mut rng).is_err());
    }

    #[test]
    fn percentile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(percentile(&v, 0.0), 1.0);
        assert_eq!(percentile(&v, 0.5), 3.0);
        assert_eq!(percentile(&v, 0.125), 1.5);
        assert_eq!(percentile(&v, 1.0), 5.0);
    }
}
