//! Experiment configuration, item catalog and policy assignment.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bandit::{
    cycle_sequence, default_block_order, repeat_sequence, ArmId, BanditError, PolicyState,
    DEFAULT_EPSILON, DEFAULT_ETC_CONSTANT, LIKERT_LEVELS,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("INVALID_CONFIG: {0}")]
    Invalid(String),
    #[error("INVALID_CATALOG: {0}")]
    Catalog(String),
    #[error(transparent)]
    Bandit(#[from] BanditError),
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("failed to parse {path}: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
}

/// The seven recommendation conditions a participant can be assigned to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    SelfSelected,
    Ucb,
    Ts,
    Etc,
    EpsGreedy,
    Cycle,
    Repeat,
}

impl Algorithm {
    pub const ALL: [Algorithm; 7] = [
        Algorithm::SelfSelected,
        Algorithm::Ucb,
        Algorithm::Ts,
        Algorithm::Etc,
        Algorithm::EpsGreedy,
        Algorithm::Cycle,
        Algorithm::Repeat,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Algorithm::SelfSelected => "self_selected",
            Algorithm::Ucb => "ucb",
            Algorithm::Ts => "ts",
            Algorithm::Etc => "etc",
            Algorithm::EpsGreedy => "eps_greedy",
            Algorithm::Cycle => "cycle",
            Algorithm::Repeat => "repeat",
        }
    }

    pub fn is_fixed_sequence(self) -> bool {
        matches!(self, Algorithm::Cycle | Algorithm::Repeat)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Algorithm {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace(['-', 'ε'], "_");
        let norm = match norm.as_str() {
            "self" | "selfselected" => "self_selected",
            "greedy" | "epsilon_greedy" | "_greedy" => "eps_greedy",
            other => other,
        }
        .to_string();
        Algorithm::ALL
            .into_iter()
            .find(|a| a.label() == norm)
            .ok_or_else(|| ConfigError::Invalid(format!("unknown algorithm {s:?}")))
    }
}

/// Arithmetic screening question asked before registration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArithmeticGate {
    pub question: String,
    pub answer: i64,
}

fn default_weights() -> BTreeMap<Algorithm, f64> {
    Algorithm::ALL
        .into_iter()
        .map(|a| (a, if a == Algorithm::SelfSelected { 0.25 } else { 0.125 }))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub study_id: String,
    #[serde(rename = "K")]
    pub num_arms: usize,
    #[serde(rename = "T")]
    pub horizon: u32,
    pub arm_labels: Vec<String>,
    pub assignment_weights: BTreeMap<Algorithm, f64>,
    pub min_dwell_seconds: f64,
    pub attention_pass_threshold: f64,
    pub likert_max: u8,
    pub etc_constant: f64,
    pub epsilon: f64,
    /// Block order of the REPEAT sequence; `(2, 1, 3, ..., K)` when absent.
    pub repeat_block_order: Option<Vec<ArmId>>,
    pub reading_memory_questions: usize,
    pub rating_memory_questions: usize,
    pub rating_memory_threshold: u8,
    pub seed: u64,
    pub gate: Option<ArithmeticGate>,
    /// Completion codes accepted at registration; any non-empty code when absent.
    pub valid_codes: Option<Vec<String>>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            study_id: "default".into(),
            num_arms: 5,
            horizon: 50,
            arm_labels: vec![
                "family".into(),
                "gag".into(),
                "political (conservative)".into(),
                "office".into(),
                "political (liberal)".into(),
            ],
            assignment_weights: default_weights(),
            min_dwell_seconds: 10.0,
            attention_pass_threshold: 0.70,
            likert_max: LIKERT_LEVELS as u8,
            etc_constant: DEFAULT_ETC_CONSTANT,
            epsilon: DEFAULT_EPSILON,
            repeat_block_order: None,
            reading_memory_questions: 3,
            rating_memory_questions: 3,
            rating_memory_threshold: 5,
            seed: 0,
            gate: None,
            valid_codes: None,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let config: ExperimentConfig = read_json(path.as_ref())?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::Invalid(msg));
        if self.num_arms < 2 {
            return bad(format!("K = {} but at least two arms are required", self.num_arms));
        }
        if self.horizon == 0 {
            return bad("T must be positive".into());
        }
        if !self.arm_labels.is_empty() && self.arm_labels.len() != self.num_arms {
            return bad(format!("{} arm labels for K = {}", self.arm_labels.len(), self.num_arms));
        }
        if self.likert_max as usize != LIKERT_LEVELS {
            return bad(format!("likert_max must be {LIKERT_LEVELS}"));
        }
        if self.assignment_weights.values().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return bad("assignment weights must be non-negative".into());
        }
        let total: f64 = self.assignment_weights.values().sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("assignment weights sum to {total}, expected 1"));
        }
        if !(self.min_dwell_seconds >= 0.0) {
            return bad("min_dwell_seconds must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.attention_pass_threshold) {
            return bad("attention_pass_threshold must lie in [0, 1]".into());
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad(format!("epsilon {} outside (0, 1)", self.epsilon));
        }
        if !(self.etc_constant > 0.0) {
            return bad("etc_constant must be positive".into());
        }
        if !(1..=LIKERT_LEVELS as u8).contains(&self.rating_memory_threshold) {
            return bad("rating_memory_threshold must be a Likert level".into());
        }
        if self.weight(Algorithm::Cycle) > 0.0 || self.weight(Algorithm::Repeat) > 0.0 {
            self.fixed_sequence(Algorithm::Cycle)?;
            self.fixed_sequence(Algorithm::Repeat)?;
        }
        Ok(())
    }

    pub fn weight(&self, algorithm: Algorithm) -> f64 {
        self.assignment_weights.get(&algorithm).copied().unwrap_or(0.0)
    }

    /// Puts all assignment mass on one algorithm.
    pub fn with_only(mut self, algorithm: Algorithm) -> Self {
        self.assignment_weights = Algorithm::ALL
            .into_iter()
            .map(|a| (a, if a == algorithm { 1.0 } else { 0.0 }))
            .collect();
        self
    }

    pub fn block_order(&self) -> Vec<ArmId> {
        self.repeat_block_order
            .clone()
            .unwrap_or_else(|| default_block_order(self.num_arms))
    }

    pub fn pulls_per_arm(&self) -> u32 {
        self.horizon / self.num_arms as u32
    }

    pub fn fixed_sequence(&self, algorithm: Algorithm) -> Result<Vec<ArmId>, ConfigError> {
        let t = self.horizon as usize;
        Ok(match algorithm {
            Algorithm::Cycle => cycle_sequence(t, self.num_arms)?,
            Algorithm::Repeat => repeat_sequence(t, self.num_arms, &self.block_order())?,
            other => {
                return Err(ConfigError::Invalid(format!("{other} is not a fixed sequence")));
            }
        })
    }

    pub fn arm_label(&self, arm: ArmId) -> String {
        self.arm_labels
            .get(arm.slot())
            .cloned()
            .unwrap_or_else(|| format!("arm {arm}"))
    }

    /// Fresh policy state for a participant assigned `algorithm`.
    pub fn initial_policy(&self, algorithm: Algorithm, rng_seed: u64) -> Result<PolicyState, ConfigError> {
        let (k, t) = (self.num_arms, self.horizon);
        Ok(match algorithm {
            Algorithm::SelfSelected => PolicyState::self_selected(k, t, rng_seed)?,
            Algorithm::Ucb => PolicyState::ucb(k, t, rng_seed)?,
            Algorithm::Ts => PolicyState::thompson(k, t, rng_seed)?,
            Algorithm::Etc => PolicyState::explore_then_commit(k, t, self.etc_constant, rng_seed)?,
            Algorithm::EpsGreedy => PolicyState::eps_greedy(k, t, self.epsilon, rng_seed)?,
            Algorithm::Cycle | Algorithm::Repeat => {
                PolicyState::fixed_sequence(k, self.fixed_sequence(algorithm)?, rng_seed)?
            }
        })
    }
}

/// Draws an algorithm with the configured assignment weights.
pub fn assign_policy<R: Rng + ?Sized>(config: &ExperimentConfig, rng: &mut R) -> (Algorithm, f64) {
    let u: f64 = rng.random();
    (pick_weighted(config, u), u)
}

fn pick_weighted(config: &ExperimentConfig, u: f64) -> Algorithm {
    let total: f64 = Algorithm::ALL.iter().map(|a| config.weight(*a)).sum();
    let target = u * total;
    let mut acc = 0.0;
    let mut last = None;
    for algorithm in Algorithm::ALL {
        let w = config.weight(algorithm);
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last = Some(algorithm);
        if target < acc {
            return algorithm;
        }
    }
    last.expect("validated weights have positive mass")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogItem {
    pub item_id: String,
    /// Expected answer to the item's attention-check question.
    pub attention_key: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attention_question: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogArm {
    pub label: String,
    pub items: Vec<CatalogItem>,
}

/// Per-arm ordered item lists. The `j`-th pull of arm `k` always shows item
/// `(k, j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub arms: Vec<CatalogArm>,
}

impl Catalog {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        read_json(path.as_ref())
    }

    /// Operator-free catalog with `len` items per arm and small-integer
    /// attention keys, used by simulations and tests.
    pub fn synthetic(config: &ExperimentConfig, len: usize) -> Self {
        let arms = (0..config.num_arms)
            .map(|slot| {
                let arm = ArmId::from_zero_based(slot);
                CatalogArm {
                    label: config.arm_label(arm),
                    items: (1..=len)
                        .map(|j| CatalogItem {
                            item_id: format!("a{}-{:03}", arm, j),
                            attention_key: ((slot * 7 + j * 3) % 5) as i64 + 1,
                            attention_question: Some("How many unique characters appear?".into()),
                            metadata: BTreeMap::new(),
                        })
                        .collect(),
                }
            })
            .collect();
        Catalog { arms }
    }

    pub fn item(&self, arm: ArmId, within_arm_index: u32) -> Option<&CatalogItem> {
        self.arms
            .get(arm.slot())
            .and_then(|a| a.items.get((within_arm_index as usize).checked_sub(1)?))
    }

    pub fn arm_len(&self, arm: ArmId) -> usize {
        self.arms.get(arm.slot()).map_or(0, |a| a.items.len())
    }

    /// Locates an item by id: `(arm, within-arm index)`.
    pub fn locate(&self, item_id: &str) -> Option<(ArmId, u32)> {
        self.arms.iter().enumerate().find_map(|(slot, arm)| {
            arm.items
                .iter()
                .position(|i| i.item_id == item_id)
                .map(|pos| (ArmId::from_zero_based(slot), pos as u32 + 1))
        })
    }

    pub fn all_items(&self) -> impl Iterator<Item = (ArmId, u32, &CatalogItem)> {
        self.arms.iter().enumerate().flat_map(|(slot, arm)| {
            arm.items
                .iter()
                .enumerate()
                .map(move |(pos, item)| (ArmId::from_zero_based(slot), pos as u32 + 1, item))
        })
    }

    pub fn validate(&self, config: &ExperimentConfig) -> Result<(), ConfigError> {
        if self.arms.len() != config.num_arms {
            return Err(ConfigError::Catalog(format!(
                "{} arms in catalog, config has K = {}",
                self.arms.len(),
                config.num_arms
            )));
        }
        let adaptive = Algorithm::ALL
            .into_iter()
            .any(|a| !a.is_fixed_sequence() && config.weight(a) > 0.0);
        let needed = if adaptive {
            config.horizon as usize
        } else {
            config.pulls_per_arm() as usize
        };
        let mut ids = HashSet::new();
        for (slot, arm) in self.arms.iter().enumerate() {
            if arm.items.len() < needed {
                return Err(ConfigError::Catalog(format!(
                    "arm {} has {} items, needs at least {needed}",
                    slot + 1,
                    arm.items.len()
                )));
            }
            for item in &arm.items {
                if !ids.insert(item.item_id.as_str()) {
                    return Err(ConfigError::Catalog(format!("duplicate item id {}", item.item_id)));
                }
            }
        }
        Ok(())
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| ConfigError::Json {
        path: path.display().to_string(),
        source,
    })
}
