use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::model::{draw_reward, Exposure, UserModel};
use super::SimError;
use crate::bandit::ArmId;
use crate::config::{Algorithm, Catalog, ExperimentConfig};
use crate::dataset::{ExportFilter, TrajectoryDataset};
use crate::seed::{derive_seed, derived_rng, stream};
use crate::session::{BackgroundProfile, MemoryAnswer, RatingSubmission, ReadingFrequency, Session, SurveyAnswers};

fn half() -> f64 {
    0.5
}

/// A block of simulated participants sharing one policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortGroup {
    pub algorithm: Algorithm,
    pub count: usize,
    /// Probability that a participant is a heavy (daily) reader.
    #[serde(default = "half")]
    pub heavy_fraction: f64,
    /// Overrides the study-wide model for this group.
    #[serde(default)]
    pub model: Option<UserModel>,
    /// Overrides the model for heavy readers in this group.
    #[serde(default)]
    pub heavy_model: Option<UserModel>,
}

impl CohortGroup {
    pub fn new(algorithm: Algorithm, count: usize) -> Self {
        Self { algorithm, count, heavy_fraction: 0.5, model: None, heavy_model: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub groups: Vec<CohortGroup>,
}

impl CohortSpec {
    /// Reads either a JSON file or an inline `policy=count,...` list.
    pub fn parse_arg(arg: &str) -> Result<Self, SimError> {
        if Path::new(arg).is_file() {
            let spec: Self = serde_json::from_reader(std::fs::File::open(arg)?)?;
            return Ok(spec);
        }
        arg.parse()
    }

    pub fn total(&self) -> usize {
        self.groups.iter().map(|g| g.count).sum()
    }
}

impl FromStr for CohortSpec {
    type Err = SimError;

    /// `cycle=40,repeat=38`
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let groups = s
            .split(',')
            .filter(|part| !part.trim().is_empty())
            .map(|part| {
                let (name, count) = part
                    .split_once('=')
                    .ok_or_else(|| SimError::Cohort(format!("expected policy=count, got {part:?}")))?;
                let algorithm: Algorithm = name.parse().map_err(|e| SimError::Cohort(format!("{e}")))?;
                let count = count
                    .trim()
                    .parse()
                    .map_err(|_| SimError::Cohort(format!("bad participant count {count:?}")))?;
                Ok(CohortGroup::new(algorithm, count))
            })
            .collect::<Result<Vec<_>, SimError>>()?;
        if groups.is_empty() {
            return Err(SimError::Cohort("empty cohort".into()));
        }
        Ok(Self { groups })
    }
}

/// Index of the arm with the highest current mean; lowest index on ties.
fn favourite_arm(model: &UserModel, exposure: &Exposure) -> u32 {
    let mut best = 0;
    let mut best_mean = f64::NEG_INFINITY;
    for slot in 0..model.num_arms() {
        let m = model.mean(ArmId::from_zero_based(slot), exposure);
        if m > best_mean {
            best = slot;
            best_mean = m;
        }
    }
    best as u32 + 1
}

/// Runs one participant through registration, the rating loop and the
/// survey. Attention answers are always right and every dwell is exactly
/// the minimum. Self-selected participants always pick the arm they
/// currently expect to enjoy most.
#[allow(clippy::too_many_arguments)]
pub fn simulate_participant(
    config: &ExperimentConfig,
    catalog: &Catalog,
    model: &UserModel,
    algorithm: Algorithm,
    participant_id: &str,
    heavy: bool,
    seed: u64,
) -> Result<Session, SimError> {
    let background = BackgroundProfile {
        reading_frequency: if heavy { ReadingFrequency::Daily } else { ReadingFrequency::Weekly },
        ..BackgroundProfile::default()
    };
    let mut reward_rng = derived_rng(seed, stream::USER_REWARD, 0);
    let model = model.for_participant(&mut reward_rng);
    let mut session = Session::with_algorithm(config, algorithm, participant_id, "sim", background, seed, 0)?;
    let mut exposure = Exposure::new(config.num_arms);
    let choose = session.is_self_selected();
    let dwell_ms = (config.min_dwell_seconds * 1000.0).ceil() as u64;
    let mut now = 0u64;

    session.start(choose.then(|| favourite_arm(&model, &exposure)), now)?;
    for _ in 0..config.horizon {
        let next = session.next_item(catalog)?;
        let reward = draw_reward(&model, next.arm, &mut exposure, &mut reward_rng);
        now += dwell_ms;
        let submission = RatingSubmission {
            step: next.step,
            reward: reward.get() as i64,
            attention_answer: next.item.attention_key,
            dwell_seconds: dwell_ms as f64 / 1000.0,
            chosen_next_arm: (choose && next.requires_genre_choice).then(|| favourite_arm(&model, &exposure)),
        };
        session.submit_rating(config, catalog, &submission, now)?;
    }

    let questions = session.survey_questions(config, catalog)?;
    let shown: std::collections::HashSet<&str> = session.records().iter().map(|r| r.item_id.as_str()).collect();
    let reading_memory = questions
        .reading_memory
        .iter()
        .map(|id| MemoryAnswer { item_id: id.clone(), answer: shown.contains(id.as_str()) })
        .collect();
    let rating_memory = questions
        .rating_memory
        .iter()
        .map(|id| {
            let r = session.records().iter().find(|r| &r.item_id == id).expect("question drawn from records");
            MemoryAnswer { item_id: id.clone(), answer: r.reward.get() >= config.rating_memory_threshold }
        })
        .collect();
    let total: u32 = session.records().iter().map(|r| r.reward.get() as u32).sum();
    let mut survey_rng = derived_rng(seed, stream::USER_SURVEY, 0);
    let answers = SurveyAnswers {
        reading_memory,
        rating_memory,
        hindsight_satisfied: total as f64 >= 5.0 * config.horizon as f64,
        prefers_autonomy: survey_rng.random_bool(0.5),
    };
    session.grade_survey(config, catalog, answers)?;
    Ok(session)
}

/// Simulates every group of `spec` and collects the completed sessions.
/// Participant `i` (counting across groups) uses seed stream `i`, so the
/// dataset depends only on `seed` and the cohort layout.
pub fn simulate_cohort(
    config: &ExperimentConfig,
    catalog: &Catalog,
    model: &UserModel,
    spec: &CohortSpec,
    seed: u64,
) -> Result<TrajectoryDataset, SimError> {
    config.validate()?;
    catalog.validate(config)?;
    for m in std::iter::once(model).chain(spec.groups.iter().flat_map(|g| g.model.iter().chain(&g.heavy_model))) {
        m.validate()?;
        if m.num_arms() != config.num_arms {
            return Err(SimError::Model(format!(
                "model has {} arms but the study has {}",
                m.num_arms(),
                config.num_arms
            )));
        }
    }
    let mut sessions = Vec::with_capacity(spec.total());
    let mut index = 0u64;
    for group in &spec.groups {
        if !(0.0..=1.0).contains(&group.heavy_fraction) {
            return Err(SimError::Cohort(format!("heavy_fraction {} outside [0, 1]", group.heavy_fraction)));
        }
        for _ in 0..group.count {
            let participant_seed = derive_seed(seed, stream::PARTICIPANT, index);
            let heavy = derived_rng(participant_seed, stream::PARTICIPANT, 0).random_bool(group.heavy_fraction);
            let m = match (&group.heavy_model, &group.model) {
                (Some(h), _) if heavy => h,
                (_, Some(g)) => g,
                _ => model,
            };
            let id = format!("sim-{index:05}");
            sessions.push(simulate_participant(config, catalog, m, group.algorithm, &id, heavy, participant_seed)?);
            index += 1;
        }
    }
    Ok(TrajectoryDataset::from_sessions(config, &sessions, ExportFilter::All))
}
