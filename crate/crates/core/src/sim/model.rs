use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::bandit::{ArmId, LikertReward};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DynamicsKind {
    Static,
    Satiation,
    Sensitization,
}

/// Reward-generating model for simulated participants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserModel {
    pub kind: DynamicsKind,
    /// Per-arm mean reward with no recent exposure, in `[1, 9]`.
    pub base_means: Vec<f64>,
    /// Spread of the discretized Gaussian around the current mean.
    #[serde(default = "default_noise")]
    pub noise_sd: f64,
    /// Mean shift per unit of exposure; zero exactly for static users.
    #[serde(default)]
    pub gamma: f64,
    /// Exposure decay per step, in `[0, 1)`.
    #[serde(default)]
    pub rho: f64,
    /// Between-participant spread of base means (independent per arm).
    #[serde(default)]
    pub participant_sd: f64,
}

fn default_noise() -> f64 {
    1.0
}

impl UserModel {
    pub fn static_model(base_means: Vec<f64>, noise_sd: f64) -> Self {
        Self { kind: DynamicsKind::Static, base_means, noise_sd, gamma: 0.0, rho: 0.0, participant_sd: 0.0 }
    }

    pub fn satiation(base_means: Vec<f64>, noise_sd: f64, gamma: f64, rho: f64) -> Self {
        Self { kind: DynamicsKind::Satiation, base_means, noise_sd, gamma, rho, participant_sd: 0.0 }
    }

    pub fn with_participant_sd(mut self, sd: f64) -> Self {
        self.participant_sd = sd;
        self
    }

    pub fn num_arms(&self) -> usize {
        self.base_means.len()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SimError> {
        let model: Self = serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(path)?))?;
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::Model(msg));
        if self.base_means.len() < 2 {
            return bad("at least two arms are required".into());
        }
        if let Some(b) = self.base_means.iter().find(|b| !(1.0..=9.0).contains(*b)) {
            return bad(format!("base mean {b} outside [1, 9]"));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return bad(format!("noise_sd must be finite and non-negative, got {}", self.noise_sd));
        }
        if !(self.participant_sd >= 0.0 && self.participant_sd.is_finite()) {
            return bad(format!("participant_sd must be finite and non-negative, got {}", self.participant_sd));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return bad(format!("rho must lie in [0, 1), got {}", self.rho));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be finite and non-negative, got {}", self.gamma));
        }
        if (self.kind == DynamicsKind::Static) != (self.gamma == 0.0) {
            return bad("gamma must be zero exactly when kind is STATIC".into());
        }
        Ok(())
    }

    /// Same dynamics with base means jittered for one participant.
    pub fn for_participant<R: Rng + ?Sized>(&self, rng: &mut R) -> Self {
        if self.participant_sd == 0.0 {
            return self.clone();
        }
        let normal = rand_distr::Normal::new(0.0, self.participant_sd).expect("validated spread");
        let mut out = self.clone();
        for b in &mut out.base_means {
            *b = (*b + rng.sample(normal)).clamp(1.0, 9.0);
        }
        out.participant_sd = 0.0;
        out
    }

    /// Mean reward of `arm` given the exposure accumulated before this pull.
    pub fn mean(&self, arm: ArmId, exposure: &Exposure) -> f64 {
        let base = self.base_means[arm.slot()];
        let shift = self.gamma * exposure.level(arm);
        let mu = match self.kind {
            DynamicsKind::Static => base,
            DynamicsKind::Satiation => base - shift,
            DynamicsKind::Sensitization => base + shift,
        };
        mu.clamp(1.0, 9.0)
    }
}

/// Leaky per-arm exposure counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Exposure(Vec<f64>);

impl Exposure {
    pub fn new(num_arms: usize) -> Self {
        Self(vec![0.0; num_arms])
    }

    pub fn level(&self, arm: ArmId) -> f64 {
        self.0[arm.slot()]
    }

    pub fn levels(&self) -> &[f64] {
        &self.0
    }

    /// Decays every arm by `rho` and adds one to the pulled arm.
    pub fn record(&mut self, arm: ArmId, rho: f64) {
        for s in &mut self.0 {
            *s *= rho;
        }
        self.0[arm.slot()] += 1.0;
    }
}

/// Probabilities of rewards 1..=9: Gaussian density at each level around
/// `mu`, renormalized. Zero spread puts all mass on the nearest level.
pub fn reward_distribution(mu: f64, sd: f64) -> [f64; 9] {
    let mut p = [0.0; 9];
    if sd == 0.0 {
        p[(mu.round().clamp(1.0, 9.0) as usize) - 1] = 1.0;
        return p;
    }
    for (k, w) in p.iter_mut().enumerate() {
        let z = (k as f64 + 1.0 - mu) / sd;
        *w = (-0.5 * z * z).exp();
    }
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|w| *w /= total);
    p
}

pub fn expected_reward(mu: f64, sd: f64) -> f64 {
    reward_distribution(mu, sd).iter().enumerate().map(|(k, p)| (k + 1) as f64 * p).sum()
}

/// Draws the reward for pulling `arm`, then updates `exposure`.
pub fn draw_reward<R: Rng + ?Sized>(model: &UserModel, arm: ArmId, exposure: &mut Exposure, rng: &mut R) -> LikertReward {
    let p = reward_distribution(model.mean(arm, exposure), model.noise_sd);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut level = 9;
    for (k, w) in p.iter().enumerate() {
        acc += w;
        if u < acc {
            level = k + 1;
            break;
        }
    }
    exposure.record(arm, model.rho);
    LikertReward::new(level as u8).expect("level in 1..=9")
}

/// Expected per-arm mean reward over a deterministic pull sequence.
pub fn expected_arm_means(model: &UserModel, sequence: &[ArmId]) -> Vec<f64> {
    let k = model.num_arms();
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    let mut exposure = Exposure::new(k);
    for &arm in sequence {
        sums[arm.slot()] += expected_reward(model.mean(arm, &exposure), model.noise_sd);
        counts[arm.slot()] += 1;
        exposure.record(arm, model.rho);
    }
    sums.iter().zip(&counts).map(|(s, &c)| if c == 0 { f64::NAN } else { s / c as f64 }).collect()
}

/// Average over arms of the expected per-arm mean under `a` minus under `b`.
pub fn expected_gap(model: &UserModel, a: &[ArmId], b: &[ArmId]) -> f64 {
    let ma = expected_arm_means(model, a);
    let mb = expected_arm_means(model, b);
    ma.iter().zip(&mb).map(|(x, y)| x - y).sum::<f64>() / ma.len() as f64
}

/// Smallest satiation strength whose expected gap between sequences `a`
/// and `b` reaches `target`, found by bisection on `[0, 8]`.
pub fn tune_gamma(model: &UserModel, a: &[ArmId], b: &[ArmId], target: f64) -> Result<f64, SimError> {
    let gap = |gamma: f64| {
        let mut m = model.clone();
        m.kind = DynamicsKind::Satiation;
        m.gamma = gamma;
        expected_gap(&m, a, b)
    };
    let (mut lo, mut hi) = (0.0, 8.0);
    if gap(hi) < target {
        return Err(SimError::Model(format!("no gamma in [0, 8] reaches a gap of {target}")));
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if gap(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bandit::{cycle_sequence, default_block_order, repeat_sequence};
    use crate::seed::rng_from;
    use proptest::prelude::*;

    fn arm(i: usize) -> ArmId {
        ArmId::from_zero_based(i)
    }

    #[test]
    fn static_zero_noise_is_constant() {
        let m = UserModel::static_model(vec![5.0, 5.0], 0.0);
        let mut e = Exposure::new(2);
        let mut rng = rng_from(1);
        for _ in 0..20 {
            assert_eq!(draw_reward(&m, arm(0), &mut e, &mut rng).get(), 5);
        }
    }

    #[test]
    fn satiation_hand_recursion() {
        let m = UserModel::satiation(vec![9.0, 5.0], 0.0, 1.0, 0.0);
        let mut e = Exposure::new(2);
        let mut rng = rng_from(2);
        assert_eq!(m.mean(arm(0), &e), 9.0);
        assert_eq!(draw_reward(&m, arm(0), &mut e, &mut rng).get(), 9);
        assert_eq!(m.mean(arm(0), &e), 8.0);
        assert_eq!(draw_reward(&m, arm(0), &mut e, &mut rng).get(), 8);
        // an intervening pull of another arm clears exposure when rho = 0
        draw_reward(&m, arm(1), &mut e, &mut rng);
        assert_eq!(m.mean(arm(0), &e), 9.0);
    }

    #[test]
    fn geometric_exposure() {
        let mut e = Exposure::new(2);
        let mut seen = Vec::new();
        for _ in 0..3 {
            e.record(arm(0), 0.5);
            seen.push(e.level(arm(0)));
        }
        assert_eq!(seen, vec![1.0, 1.5, 1.75]);
        e.record(arm(1), 0.5);
        assert_eq!(e.levels(), &[0.875, 1.0]);
    }

    #[test]
    fn validation() {
        assert!(UserModel::static_model(vec![5.0, 5.0], 1.0).validate().is_ok());
        assert!(UserModel::satiation(vec![5.0, 5.0], 1.0, 0.0, 0.0).validate().is_err());
        let mut s = UserModel::static_model(vec![5.0, 5.0], 1.0);
        s.gamma = 0.3;
        assert!(s.validate().is_err());
        assert!(UserModel::satiation(vec![5.0, 5.0], 1.0, 0.5, 1.0).validate().is_err());
        assert!(UserModel::static_model(vec![0.5, 5.0], 1.0).validate().is_err());
        assert!(UserModel::static_model(vec![5.0], 1.0).validate().is_err());
    }

    #[test]
    fn symmetric_distribution_has_central_mean() {
        assert!((expected_reward(5.0, 1.0) - 5.0).abs() < 1e-12);
        assert!((expected_reward(5.0, 3.0) - 5.0).abs() < 1e-12);
        assert_eq!(expected_reward(3.4, 0.0), 3.0);
        let p = reward_distribution(2.0, 1.0);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // density ratio between neighbours one and two steps away
        assert!((p[2] / p[1] - (-0.5f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn draws_follow_the_distribution() {
        let m = UserModel::static_model(vec![4.3, 5.0], 1.2);
        let p = reward_distribution(4.3, 1.2);
        let mut rng = rng_from(3);
        let mut e = Exposure::new(2);
        let n = 200_000;
        let mut hist = [0usize; 9];
        for _ in 0..n {
            hist[draw_reward(&m, arm(0), &mut e, &mut rng).get() as usize - 1] += 1;
        }
        for k in 0..9 {
            let f = hist[k] as f64 / n as f64;
            let se = (p[k] * (1.0 - p[k]) / n as f64).sqrt();
            assert!((f - p[k]).abs() < 5.0 * se + 1e-9, "level {}: {f} vs {}", k + 1, p[k]);
        }
    }

    #[test]
    fn cycle_unaffected_by_memoryless_satiation() {
        let m = UserModel::satiation(vec![4.0, 5.0, 6.0, 5.0, 4.5], 1.0, 0.7, 0.0);
        let cycle = cycle_sequence(50, 5).unwrap();
        let means = expected_arm_means(&m, &cycle);
        for (got, base) in means.iter().zip(&m.base_means) {
            assert!((got - expected_reward(*base, 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn repeat_gap_with_memoryless_satiation() {
        // nine of ten pulls in each block are shifted by gamma
        let m = UserModel::satiation(vec![5.0; 5], 0.0, 1.0, 0.0);
        let cycle = cycle_sequence(50, 5).unwrap();
        let repeat = repeat_sequence(50, 5, &default_block_order(5)).unwrap();
        assert!((expected_gap(&m, &cycle, &repeat) - 0.9).abs() < 1e-12);
        let noisy = UserModel::satiation(vec![5.0; 5], 1.0, 0.1, 0.0);
        let g = tune_gamma(&noisy, &cycle, &repeat, 0.5).unwrap();
        let mut tuned = noisy.clone();
        tuned.gamma = g;
        assert!((expected_gap(&tuned, &cycle, &repeat) - 0.5).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn gap_monotone_in_gamma(g1 in 0.0f64..0.4, dg in 0.0f64..0.4, rho in 0.0f64..0.5, base in 5.0f64..7.0) {
            // kept away from the clamp at 1, where extra satiation of the
            // repeated arm stops registering
            let cycle = cycle_sequence(50, 5).unwrap();
            let repeat = repeat_sequence(50, 5, &default_block_order(5)).unwrap();
            let lo = UserModel::satiation(vec![base; 5], 1.0, g1.max(1e-6), rho);
            let mut hi = lo.clone();
            hi.gamma = lo.gamma + dg;
            lo.validate().unwrap();
            let gaps_lo = expected_arm_means(&lo, &cycle).iter().zip(expected_arm_means(&lo, &repeat)).map(|(c, r)| c - r).collect::<Vec<_>>();
            let gaps_hi = expected_arm_means(&hi, &cycle).iter().zip(expected_arm_means(&hi, &repeat)).map(|(c, r)| c - r).collect::<Vec<_>>();
            for (l, h) in gaps_lo.iter().zip(&gaps_hi) {
                prop_assert!(*h >= *l - 1e-9);
            }
        }

        #[test]
        fn means_stay_on_scale(base in 1.0f64..=9.0, gamma in 0.0f64..5.0, pulls in 0usize..30) {
            let mut m = UserModel::satiation(vec![base, base], 1.0, gamma.max(1e-6), 0.8);
            let mut e = Exposure::new(2);
            for _ in 0..pulls {
                e.record(arm(0), m.rho);
            }
            prop_assert!((1.0..=9.0).contains(&m.mean(arm(0), &e)));
            m.kind = DynamicsKind::Sensitization;
            prop_assert!((1.0..=9.0).contains(&m.mean(arm(0), &e)));
        }
    }
}
