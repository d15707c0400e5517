use serde::{Deserialize, Serialize};

use super::StatsError;

/// Outcome for one hypothesis, in the caller's original order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolmDecision {
    pub p_value: f64,
    /// 1-based position after sorting p-values ascending.
    pub rank: usize,
    /// `alpha / (m + 1 - rank)`.
    pub corrected_alpha: f64,
    pub rejected: bool,
}

/// Holm's step-down procedure: with p-values sorted ascending, reject `H_(i)`
/// while `p_(i) < alpha / (m + 1 - i)` and stop at the first failure.
/// Ties keep their input order.
pub fn holm_correct(p_values: &[f64], alpha: f64) -> Result<Vec<HolmDecision>, StatsError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(StatsError::InvalidParameter(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if let Some(p) = p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(StatsError::InvalidParameter(format!("p-value {p} outside [0, 1]")));
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| p_values[i].total_cmp(&p_values[j]));

    let mut decisions = vec![
        HolmDecision { p_value: 0.0, rank: 0, corrected_alpha: 0.0, rejected: false };
        m
    ];
    let mut still_rejecting = true;
    for (pos, &idx) in order.iter().enumerate() {
        let rank = pos + 1;
        let corrected_alpha = alpha / (m + 1 - rank) as f64;
        still_rejecting &= p_values[idx] < corrected_alpha;
        decisions[idx] = HolmDecision {
            p_value: p_values[idx],
            rank,
            corrected_alpha,
            rejected: still_rejecting,
        };
    }
    Ok(decisions)
}
