use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::{ArmId, ArmStats, BanditError, LikertReward, PullHistory, LIKERT_LEVELS};

pub const DEFAULT_EPSILON: f64 = 0.1;
pub const DEFAULT_ETC_CONSTANT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PolicyKind {
    SelfSelected,
    Ucb,
    Ts,
    Etc,
    EpsGreedy,
    FixedSequence,
}

/// Per-session policy state. Serializes to a canonical JSON document so a
/// session can be reloaded mid-study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyState {
    pub kind: PolicyKind,
    #[serde(rename = "K")]
    pub num_arms: usize,
    #[serde(rename = "T")]
    pub horizon: u32,
    #[serde(flatten)]
    pub stats: ArmStats,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dirichlet_params: Option<Vec<[f64; LIKERT_LEVELS]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exploration_len: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub committed_arm: Option<ArmId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_seq: Option<Vec<ArmId>>,
    pub rng_seed: u64,
}

impl PolicyState {
    fn base(kind: PolicyKind, num_arms: usize, horizon: u32, rng_seed: u64) -> Result<Self, BanditError> {
        if num_arms < 2 {
            return Err(BanditError::InvalidParameter(format!(
                "need at least two arms, got {num_arms}"
            )));
        }
        if horizon == 0 {
            return Err(BanditError::InvalidParameter("horizon must be positive".into()));
        }
        Ok(PolicyState {
            kind,
            num_arms,
            horizon,
            stats: ArmStats::new(num_arms),
            dirichlet_params: None,
            epsilon: None,
            exploration_len: None,
            committed_arm: None,
            fixed_seq: None,
            rng_seed,
        })
    }

    pub fn self_selected(num_arms: usize, horizon: u32, rng_seed: u64) -> Result<Self, BanditError> {
        Self::base(PolicyKind::SelfSelected, num_arms, horizon, rng_seed)
    }

    pub fn ucb(num_arms: usize, horizon: u32, rng_seed: u64) -> Result<Self, BanditError> {
        Self::base(PolicyKind::Ucb, num_arms, horizon, rng_seed)
    }

    /// Thompson sampling with a Dirichlet(1, ..., 1) prior per arm.
    pub fn thompson(num_arms: usize, horizon: u32, rng_seed: u64) -> Result<Self, BanditError> {
        let mut state = Self::base(PolicyKind::Ts, num_arms, horizon, rng_seed)?;
        state.dirichlet_params = Some(vec![[1.0; LIKERT_LEVELS]; num_arms]);
        Ok(state)
    }

    pub fn explore_then_commit(
        num_arms: usize,
        horizon: u32,
        constant: f64,
        rng_seed: u64,
    ) -> Result<Self, BanditError> {
        let mut state = Self::base(PolicyKind::Etc, num_arms, horizon, rng_seed)?;
        state.exploration_len = Some(etc_exploration_len(horizon, constant)?);
        Ok(state)
    }

    pub fn eps_greedy(num_arms: usize, horizon: u32, epsilon: f64, rng_seed: u64) -> Result<Self, BanditError> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(BanditError::InvalidParameter(format!(
                "epsilon {epsilon} outside (0, 1)"
            )));
        }
        let mut state = Self::base(PolicyKind::EpsGreedy, num_arms, horizon, rng_seed)?;
        state.epsilon = Some(epsilon);
        Ok(state)
    }

    pub fn fixed_sequence(num_arms: usize, sequence: Vec<ArmId>, rng_seed: u64) -> Result<Self, BanditError> {
        for arm in &sequence {
            arm.check(num_arms)?;
        }
        let mut state = Self::base(PolicyKind::FixedSequence, num_arms, sequence.len() as u32, rng_seed)?;
        state.fixed_seq = Some(sequence);
        Ok(state)
    }

    pub fn total_pulls(&self) -> u64 {
        self.stats.total_pulls()
    }

    fn expect_kind(&self, expected: PolicyKind) -> Result<(), BanditError> {
        if self.kind != expected {
            return Err(BanditError::WrongPolicy { expected, got: self.kind });
        }
        Ok(())
    }
}

/// `floor(c * T^(2/3))`, the exploration length of explore-then-commit.
pub fn etc_exploration_len(horizon: u32, constant: f64) -> Result<u32, BanditError> {
    if !(constant > 0.0 && constant.is_finite()) {
        return Err(BanditError::InvalidParameter(format!(
            "ETC constant {constant} must be positive"
        )));
    }
    let root = (horizon as f64).cbrt();
    // guard against cbrt/product rounding just below an integer
    Ok((constant * root * root + 1e-9).floor() as u32)
}

pub fn ucb_index(stats: &ArmStats, arm: ArmId, t: u32) -> Option<f64> {
    let n = stats.count(arm);
    stats
        .mean(arm)
        .map(|mean| mean + (2.0 * (t as f64).ln() / n as f64).sqrt())
}

/// UCB: arm `t` for the first `K` rounds, then the highest
/// `mean + sqrt(2 ln t / n_k)`, lowest index on ties.
pub fn ucb_select(stats: &ArmStats, t: u32) -> Result<ArmId, BanditError> {
    let k = stats.num_arms();
    if t == 0 {
        return Err(BanditError::StepMismatch { expected: 1, got: 0 });
    }
    if t as usize <= k {
        return Ok(ArmId::from_zero_based(t as usize - 1));
    }
    let mut best: Option<(ArmId, f64)> = None;
    for slot in 0..k {
        let arm = ArmId::from_zero_based(slot);
        let index = ucb_index(stats, arm, t).ok_or(BanditError::UninitializedArm(arm))?;
        if best.is_none_or(|(_, b)| index > b) {
            best = Some((arm, index));
        }
    }
    Ok(best.expect("at least two arms").0)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TsDraw {
    pub arm: ArmId,
    pub virtual_rewards: Vec<LikertReward>,
}

/// Thompson sampling: for each arm draw a categorical distribution from its
/// Dirichlet posterior, then a virtual reward from that distribution; play
/// the highest virtual reward, breaking ties uniformly with the same generator.
pub fn ts_select<R: Rng + ?Sized>(state: &PolicyState, rng: &mut R) -> Result<TsDraw, BanditError> {
    state.expect_kind(PolicyKind::Ts)?;
    let params = state
        .dirichlet_params
        .as_ref()
        .ok_or_else(|| BanditError::InvalidParameter("TS state without Dirichlet parameters".into()))?;
    let mut virtual_rewards = Vec::with_capacity(params.len());
    for alpha in params {
        let mut weights = [0.0f64; LIKERT_LEVELS];
        for (w, &a) in weights.iter_mut().zip(alpha) {
            let gamma = Gamma::new(a, 1.0)
                .map_err(|e| BanditError::InvalidParameter(format!("Dirichlet parameter {a}: {e}")))?;
            *w = gamma.sample(rng);
        }
        let total: f64 = weights.iter().sum();
        let probs = weights.map(|w| w / total);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut level = LIKERT_LEVELS - 1;
        for (slot, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                level = slot;
                break;
            }
        }
        virtual_rewards.push(LikertReward::new(level as u8 + 1).expect("level in range"));
    }
    let top = *virtual_rewards.iter().max().expect("at least two arms");
    let maximizers: Vec<usize> = virtual_rewards
        .iter()
        .enumerate()
        .filter(|(_, r)| **r == top)
        .map(|(slot, _)| slot)
        .collect();
    let pick = if maximizers.len() == 1 {
        maximizers[0]
    } else {
        maximizers[rng.random_range(0..maximizers.len())]
    };
    Ok(TsDraw {
        arm: ArmId::from_zero_based(pick),
        virtual_rewards,
    })
}

/// Conjugate update: the `reward`-th Dirichlet entry of `arm` grows by one.
pub fn ts_update(state: &mut PolicyState, arm: ArmId, reward: LikertReward) -> Result<(), BanditError> {
    state.expect_kind(PolicyKind::Ts)?;
    arm.check(state.num_arms)?;
    let params = state
        .dirichlet_params
        .as_mut()
        .ok_or_else(|| BanditError::InvalidParameter("TS state without Dirichlet parameters".into()))?;
    params[arm.slot()][reward.level_slot()] += 1.0;
    Ok(())
}

/// Explore-then-commit: cyclic arms `((t - 1) mod K) + 1` while
/// `t <= exploration_len`, then the arm with the highest empirical mean over
/// the exploration window.
pub fn etc_select(
    history: &PullHistory,
    t: u32,
    exploration_len: u32,
    num_arms: usize,
) -> Result<ArmId, BanditError> {
    if t == 0 {
        return Err(BanditError::StepMismatch { expected: 1, got: 0 });
    }
    if t <= exploration_len {
        return Ok(ArmId::from_zero_based((t as usize - 1) % num_arms));
    }
    let mut window = ArmStats::new(num_arms);
    for pull in history.entries().iter().filter(|p| p.t <= exploration_len && p.t < t) {
        window.record(pull.arm, pull.reward);
    }
    window.greedy_arm().ok_or(BanditError::NoPulls)
}

/// epsilon-greedy: arm `t` for the first `K` rounds; afterwards a uniform arm
/// with probability `epsilon`, otherwise the empirical-mean leader.
pub fn eps_greedy_select<R: Rng + ?Sized>(
    stats: &ArmStats,
    t: u32,
    epsilon: f64,
    rng: &mut R,
) -> Result<ArmId, BanditError> {
    let k = stats.num_arms();
    if t == 0 {
        return Err(BanditError::StepMismatch { expected: 1, got: 0 });
    }
    if t as usize <= k {
        return Ok(ArmId::from_zero_based(t as usize - 1));
    }
    if let Some(slot) = stats.pull_counts.iter().position(|&n| n == 0) {
        return Err(BanditError::UninitializedArm(ArmId::from_zero_based(slot)));
    }
    if rng.random::<f64>() < epsilon {
        Ok(ArmId::from_zero_based(rng.random_range(0..k)))
    } else {
        Ok(stats.greedy_arm().expect("all arms pulled"))
    }
}

fn check_step(state: &PolicyState, t: u32) -> Result<(), BanditError> {
    if t > state.horizon {
        return Err(BanditError::BeyondHorizon { t, horizon: state.horizon });
    }
    let expected = state.total_pulls() as u32 + 1;
    if t != expected {
        return Err(BanditError::StepMismatch { expected, got: t });
    }
    Ok(())
}

/// Arm to pull at step `t`. Self-selected sessions bypass the engine.
pub fn get_arm<R: Rng + ?Sized>(state: &PolicyState, t: u32, rng: &mut R) -> Result<ArmId, BanditError> {
    check_step(state, t)?;
    match state.kind {
        PolicyKind::SelfSelected => Err(BanditError::SelfSelected),
        PolicyKind::Ucb => ucb_select(&state.stats, t),
        PolicyKind::Ts => ts_select(state, rng).map(|d| d.arm),
        PolicyKind::Etc => {
            let len = state
                .exploration_len
                .ok_or_else(|| BanditError::InvalidParameter("ETC state without exploration length".into()))?;
            if t <= len {
                Ok(ArmId::from_zero_based((t as usize - 1) % state.num_arms))
            } else {
                state.committed_arm.ok_or(BanditError::NoPulls)
            }
        }
        PolicyKind::EpsGreedy => {
            let eps = state.epsilon.unwrap_or(DEFAULT_EPSILON);
            eps_greedy_select(&state.stats, t, eps, rng)
        }
        PolicyKind::FixedSequence => state
            .fixed_seq
            .as_ref()
            .and_then(|seq| seq.get(t as usize - 1).copied())
            .ok_or(BanditError::BeyondHorizon { t, horizon: state.horizon }),
    }
}

/// Records the reward observed for `arm` at step `t`.
pub fn update_arm(state: &mut PolicyState, t: u32, arm: ArmId, reward: LikertReward) -> Result<(), BanditError> {
    check_step(state, t)?;
    arm.check(state.num_arms)?;
    if state.kind == PolicyKind::Ts {
        ts_update(state, arm, reward)?;
    }
    state.stats.record(arm, reward);
    if state.kind == PolicyKind::Etc && Some(t) == state.exploration_len {
        state.committed_arm = state.stats.greedy_arm();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bandit::{cycle_sequence, empirical_mean};
    use crate::seed::rng_from;
    use proptest::prelude::*;

    fn arm(i: u32) -> ArmId {
        ArmId::new(i, 9).unwrap()
    }

    fn r(v: u8) -> LikertReward {
        LikertReward::new(v).unwrap()
    }

    fn stats_of(pairs: &[(u32, u8)], k: usize) -> ArmStats {
        PullHistory::from_pairs(pairs.iter().map(|&(a, v)| (arm(a), r(v)))).arm_stats(k)
    }

    #[test]
    fn ucb_forced_round_robin() {
        let stats = stats_of(&[(1, 9), (2, 1)], 5);
        assert_eq!(ucb_select(&stats, 3).unwrap(), arm(3));
    }

    #[test]
    fn ucb_strict_mean_winner() {
        let stats = stats_of(&[(1, 7), (2, 3), (3, 3), (4, 3), (5, 3)], 5);
        assert_eq!(ucb_select(&stats, 6).unwrap(), arm(1));
    }

    #[test]
    fn ucb_all_equal_goes_to_lowest_index() {
        let stats = stats_of(&[(1, 5), (2, 5), (3, 5), (4, 5), (5, 5)], 5);
        // independent evaluation of each index: 5 + sqrt(2 ln 6 / 1)
        let expected = 5.0 + (2.0 * 6f64.ln()).sqrt();
        for a in 1..=5 {
            assert_eq!(ucb_index(&stats, arm(a), 6), Some(expected));
        }
        assert_eq!(ucb_select(&stats, 6).unwrap(), arm(1));
    }

    #[test]
    fn ucb_requires_initialization() {
        let stats = stats_of(&[(1, 5), (2, 5), (3, 5), (4, 5), (4, 5)], 5);
        assert_eq!(ucb_select(&stats, 6), Err(BanditError::UninitializedArm(arm(5))));
    }

    #[test]
    fn etc_length_at_fifty() {
        // 50^(2/3) = 13.572..., half of it floors to 6
        assert_eq!(etc_exploration_len(50, 0.5).unwrap(), 6);
        assert!(etc_exploration_len(50, 0.0).is_err());
    }

    #[test]
    fn etc_length_matches_integer_oracle() {
        // floor(T^(2/3) / 2) = largest n with (2n)^3 <= T^2
        for horizon in 1u32..=5000 {
            let t2 = horizon as u64 * horizon as u64;
            let mut n = 0u64;
            while (2 * (n + 1)).pow(3) <= t2 {
                n += 1;
            }
            assert_eq!(etc_exploration_len(horizon, 0.5).unwrap() as u64, n, "T = {horizon}");
        }
    }

    fn history_of(pairs: &[(u32, u8)]) -> PullHistory {
        PullHistory::from_pairs(pairs.iter().map(|&(a, v)| (arm(a), r(v))))
    }

    #[test]
    fn etc_cycles_then_commits() {
        let empty = PullHistory::new();
        let arms: Vec<u32> = (1..=6).map(|t| etc_select(&empty, t, 6, 5).unwrap().get()).collect();
        assert_eq!(arms, vec![1, 2, 3, 4, 5, 1]);
        // exploration means (5, 1, 1, 1, 1)
        let h = history_of(&[(1, 9), (2, 1), (3, 1), (4, 1), (5, 1), (1, 1)]);
        assert_eq!(etc_select(&h, 7, 6, 5).unwrap(), arm(1));
        assert_eq!(etc_select(&empty, 7, 6, 5), Err(BanditError::NoPulls));
    }

    #[test]
    fn etc_commit_ignores_post_exploration_rewards() {
        let mut pairs = vec![(1, 9), (2, 1), (3, 1), (4, 1), (5, 1), (1, 9)];
        pairs.extend(std::iter::repeat_n((1, 1), 20));
        let h = history_of(&pairs);
        assert_eq!(etc_select(&h, 27, 6, 5).unwrap(), arm(1));
    }

    #[test]
    fn etc_state_dispatch_matches_free_function() {
        let mut state = PolicyState::explore_then_commit(5, 50, 0.5, 0).unwrap();
        let mut history = PullHistory::new();
        let mut rng = rng_from(0);
        let rewards = [3u8, 8, 2, 8, 5, 1, 9, 9, 1, 1];
        for t in 1..=50u32 {
            let a = get_arm(&state, t, &mut rng).unwrap();
            assert_eq!(a, etc_select(&history, t, 6, 5).unwrap());
            let v = r(rewards[(t as usize * 7) % rewards.len()]);
            update_arm(&mut state, t, a, v).unwrap();
            history.push(t, a, v).unwrap();
        }
    }

    #[test]
    fn eps_greedy_forced_rounds() {
        let mut rng = rng_from(1);
        assert_eq!(eps_greedy_select(&ArmStats::new(5), 4, 0.1, &mut rng).unwrap(), arm(4));
    }

    #[test]
    fn eps_greedy_frequency_matches_analytic() {
        let stats = stats_of(&[(1, 9), (2, 1), (3, 1), (4, 1), (5, 1)], 5);
        let mut rng = rng_from(2024);
        let n = 100_000;
        let hits = (0..n)
            .filter(|_| eps_greedy_select(&stats, 6, 0.1, &mut rng).unwrap() == arm(1))
            .count();
        let freq = hits as f64 / n as f64;
        assert!((freq - 0.92).abs() <= 0.01, "frequency {freq}");
    }

    #[test]
    fn eps_greedy_tiny_epsilon_is_greedy() {
        let stats = stats_of(&[(1, 2), (2, 8), (3, 4), (4, 1), (5, 6)], 5);
        let mut rng = rng_from(3);
        for _ in 0..1000 {
            assert_eq!(eps_greedy_select(&stats, 6, 1e-12, &mut rng).unwrap(), arm(2));
        }
    }

    #[test]
    fn ts_uniform_prior_is_symmetric() {
        let state = PolicyState::thompson(5, 50, 0).unwrap();
        let mut rng = rng_from(77);
        let n = 50_000;
        let mut counts = [0usize; 5];
        for _ in 0..n {
            counts[ts_select(&state, &mut rng).unwrap().arm.slot()] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 0.2).abs() < 0.01, "{counts:?}");
        }
    }

    /// Probability arm 2 wins when it always draws 9 and the other K-1 arms
    /// draw 9 with probability 1/9 each, ties broken uniformly.
    fn dominant_arm_win_probability(k: usize) -> f64 {
        let others = k as i32 - 1;
        let q: f64 = 1.0 / 9.0;
        (0..=others)
            .map(|j| {
                let binom = (1..=j).fold(1.0, |acc, i| acc * (others - i + 1) as f64 / i as f64);
                binom * q.powi(j) * (1.0 - q).powi(others - j) / (j as f64 + 1.0)
            })
            .sum()
    }

    #[test]
    fn ts_concentrated_arm_dominates() {
        let mut state = PolicyState::thompson(5, 50, 0).unwrap();
        state.dirichlet_params.as_mut().unwrap()[1][8] += 1e6;
        let mut rng = rng_from(5);
        let n = 100_000;
        let hits = (0..n)
            .filter(|_| ts_select(&state, &mut rng).unwrap().arm == arm(2))
            .count();
        let freq = hits as f64 / n as f64;
        let exact = dominant_arm_win_probability(5);
        assert!((exact - 0.8003).abs() < 1e-3);
        assert!((freq - exact).abs() < 0.006, "freq {freq} vs {exact}");
    }

    #[test]
    fn ts_seeded_draw_is_deterministic() {
        let mut state = PolicyState::thompson(5, 50, 0).unwrap();
        ts_update(&mut state, arm(3), r(8)).unwrap();
        let a = ts_select(&state, &mut rng_from(99)).unwrap();
        let b = ts_select(&state, &mut rng_from(99)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.virtual_rewards.len(), 5);
    }

    #[test]
    fn ts_update_increments_reward_entry() {
        let mut state = PolicyState::thompson(5, 50, 0).unwrap();
        ts_update(&mut state, arm(1), r(9)).unwrap();
        let mut expected = [1.0; 9];
        expected[8] = 2.0;
        assert_eq!(state.dirichlet_params.as_ref().unwrap()[0], expected);
        ts_update(&mut state, arm(1), r(5)).unwrap();
        ts_update(&mut state, arm(1), r(5)).unwrap();
        assert_eq!(state.dirichlet_params.as_ref().unwrap()[0][4], 3.0);
        assert_eq!(state.dirichlet_params.as_ref().unwrap()[1], [1.0; 9]);
        assert!(ts_update(&mut PolicyState::ucb(5, 50, 0).unwrap(), arm(1), r(1)).is_err());
    }

    #[test]
    fn fixed_sequence_positional_lookup() {
        let mut state = PolicyState::fixed_sequence(5, cycle_sequence(50, 5).unwrap(), 0).unwrap();
        let mut rng = rng_from(0);
        for t in 1..=6 {
            let a = get_arm(&state, t, &mut rng).unwrap();
            update_arm(&mut state, t, a, r(5)).unwrap();
        }
        assert_eq!(get_arm(&state, 7, &mut rng).unwrap(), arm(2));
    }

    #[test]
    fn get_arm_rejects_beyond_horizon_and_self_selected() {
        let state = PolicyState::ucb(2, 2, 0).unwrap();
        let mut rng = rng_from(0);
        assert!(matches!(get_arm(&state, 3, &mut rng), Err(BanditError::BeyondHorizon { .. })));
        let ss = PolicyState::self_selected(2, 2, 0).unwrap();
        assert_eq!(get_arm(&ss, 1, &mut rng), Err(BanditError::SelfSelected));
    }

    #[test]
    fn update_then_mean_reflects_reward() {
        let mut state = PolicyState::ucb(3, 10, 0).unwrap();
        update_arm(&mut state, 1, arm(2), r(7)).unwrap();
        assert_eq!(state.stats.mean(arm(2)), Some(7.0));
        let h = PullHistory::from_pairs([(arm(2), r(7))]);
        assert_eq!(empirical_mean(&h, arm(2)), Some(7.0));
        assert!(update_arm(&mut state, 3, arm(1), r(1)).is_err());
    }

    #[test]
    fn policy_state_json_round_trip() {
        let mut state = PolicyState::thompson(3, 9, 42).unwrap();
        update_arm(&mut state, 1, arm(1), r(4)).unwrap();
        let json = serde_json::to_string(&state).unwrap();
        assert!(json.contains("\"kind\":\"TS\""));
        assert!(json.contains("\"K\":3"));
        assert!(json.contains("\"pull_counts\":[1,0,0]"));
        let back: PolicyState = serde_json::from_str(&json).unwrap();
        assert_eq!(back, state);
    }

    fn run_policy(mut state: PolicyState, rewards: &[u8], shift: u8, seed: u64) -> Vec<ArmId> {
        let mut arms = Vec::new();
        for t in 1..=state.horizon {
            let mut rng = rng_from(seed ^ t as u64);
            let a = get_arm(&state, t, &mut rng).unwrap();
            let v = rewards[(t as usize - 1) % rewards.len()] + shift;
            update_arm(&mut state, t, a, r(v)).unwrap();
            arms.push(a);
        }
        arms
    }

    proptest! {
        #[test]
        fn forced_initialization_ignores_rewards(rewards in prop::collection::vec(1u8..=9, 5)) {
            for state in [PolicyState::ucb(5, 20, 0).unwrap(), PolicyState::eps_greedy(5, 20, 0.1, 0).unwrap()] {
                let arms = run_policy(state, &rewards, 0, 1);
                let first: Vec<u32> = arms[..5].iter().map(|a| a.get()).collect();
                prop_assert_eq!(first, vec![1, 2, 3, 4, 5]);
            }
        }

        #[test]
        fn ts_posterior_is_prior_plus_histogram(updates in prop::collection::vec((1u32..=4, 1u8..=9), 0..200)) {
            let mut state = PolicyState::thompson(4, 1000, 0).unwrap();
            let mut hist = vec![[0.0f64; 9]; 4];
            for (t, (a, v)) in updates.iter().enumerate() {
                update_arm(&mut state, t as u32 + 1, ArmId::new(*a, 4).unwrap(), r(*v)).unwrap();
                hist[*a as usize - 1][*v as usize - 1] += 1.0;
            }
            let params = state.dirichlet_params.as_ref().unwrap();
            for slot in 0..4 {
                let increase: f64 = params[slot].iter().map(|p| p - 1.0).sum();
                prop_assert_eq!(increase, state.stats.pull_counts[slot] as f64);
                for level in 0..9 {
                    prop_assert_eq!(params[slot][level] - 1.0, hist[slot][level]);
                }
            }
        }

        #[test]
        fn deterministic_under_seed(rewards in prop::collection::vec(1u8..=9, 1..20), seed in any::<u64>()) {
            for state in [
                PolicyState::thompson(4, 20, 0).unwrap(),
                PolicyState::eps_greedy(4, 20, 0.3, 0).unwrap(),
            ] {
                prop_assert_eq!(
                    run_policy(state.clone(), &rewards, 0, seed),
                    run_policy(state, &rewards, 0, seed)
                );
            }
        }

        #[test]
        fn argmax_is_shift_invariant(rewards in prop::collection::vec(1u8..=5, 1..20), shift in 0u8..=4, seed in any::<u64>()) {
            for state in [
                PolicyState::ucb(4, 20, 0).unwrap(),
                PolicyState::explore_then_commit(4, 20, 0.5, 0).unwrap(),
                PolicyState::eps_greedy(4, 20, 0.2, 0).unwrap(),
            ] {
                prop_assert_eq!(
                    run_policy(state.clone(), &rewards, 0, seed),
                    run_policy(state, &rewards, shift, seed)
                );
            }
        }

        #[test]
        fn etc_exploration_ignores_rewards(rewards in prop::collection::vec(1u8..=9, 1..30)) {
            let state = PolicyState::explore_then_commit(5, 50, 0.5, 0).unwrap();
            let arms = run_policy(state, &rewards, 0, 0);
            let explore: Vec<u32> = arms[..6].iter().map(|a| a.get()).collect();
            prop_assert_eq!(explore, vec![1, 2, 3, 4, 5, 1]);
        }
    }
}
