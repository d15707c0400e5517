//! Participant state machine: registration, rating loop, attention grading
//! and the post-study survey.
//!
//! Phases only move forward: `REGISTERED -> RATING -> SURVEY -> COMPLETE`.
//! Every stochastic choice draws from a generator derived from the session
//! seed and the step index, so replaying the accepted submissions of a
//! persisted session reproduces the same policy state and pending item.

use std::collections::HashSet;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bandit::{get_arm, update_arm, ArmId, BanditError, LikertReward, PolicyState, PullHistory};
use crate::config::{assign_policy, Algorithm, Catalog, CatalogItem, ConfigError, ExperimentConfig};
use crate::seed::{derive_seed, derived_rng, stream, RNG_NAME};

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("WRONG_PHASE: session is {actual:?}, operation needs {expected}")]
    WrongPhase { expected: &'static str, actual: Phase },
    #[error("DWELL_TOO_SHORT: {observed:.1}s elapsed, at least {required:.1}s required")]
    DwellTooShort { required: f64, observed: f64 },
    #[error("RATING_OUT_OF_RANGE: rating {0} outside 1..=9")]
    RatingOutOfRange(i64),
    #[error("MISSING_GENRE_CHOICE: self-selected sessions must choose the next genre")]
    MissingGenreChoice,
    #[error("UNEXPECTED_GENRE_CHOICE: the next genre is chosen by the recommender")]
    UnexpectedGenreChoice,
    #[error("INVALID_GENRE_CHOICE: arm {0} does not exist")]
    InvalidGenreChoice(u32),
    #[error("STEP_MISMATCH: expected a rating for step {expected}, got step {got}")]
    StepMismatch { expected: u32, got: u32 },
    #[error("CATALOG_EXHAUSTED: arm {arm} has no item #{index}")]
    CatalogExhausted { arm: ArmId, index: u32 },
    #[error("NOT_IN_TRAJECTORY: item {0} was never shown in this session")]
    NotInTrajectory(String),
    #[error("UNKNOWN_ITEM: item {0} is not in the catalog")]
    UnknownItem(String),
    #[error("INVALID_SURVEY: {0}")]
    InvalidSurvey(String),
    #[error(transparent)]
    Bandit(#[from] BanditError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

impl SessionError {
    /// Stable machine-readable code, the prefix of the display string.
    pub fn code(&self) -> &'static str {
        match self {
            SessionError::WrongPhase { .. } => "WRONG_PHASE",
            SessionError::DwellTooShort { .. } => "DWELL_TOO_SHORT",
            SessionError::RatingOutOfRange(_) => "RATING_OUT_OF_RANGE",
            SessionError::MissingGenreChoice => "MISSING_GENRE_CHOICE",
            SessionError::UnexpectedGenreChoice => "UNEXPECTED_GENRE_CHOICE",
            SessionError::InvalidGenreChoice(_) => "INVALID_GENRE_CHOICE",
            SessionError::StepMismatch { .. } => "STEP_MISMATCH",
            SessionError::CatalogExhausted { .. } => "CATALOG_EXHAUSTED",
            SessionError::NotInTrajectory(_) => "NOT_IN_TRAJECTORY",
            SessionError::UnknownItem(_) => "UNKNOWN_ITEM",
            SessionError::InvalidSurvey(_) => "INVALID_SURVEY",
            SessionError::Bandit(_) => "POLICY_ERROR",
            SessionError::Config(_) => "CONFIG_ERROR",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Phase {
    Registered,
    Rating,
    Survey,
    Complete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReadingFrequency {
    Daily,
    Weekly,
    Monthly,
    #[default]
    Rarely,
    Never,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct BackgroundProfile {
    pub reading_frequency: ReadingFrequency,
    pub age_band: Option<String>,
    pub familiar_genre: Option<String>,
    pub liked_genre: Option<String>,
}

impl BackgroundProfile {
    /// Heavy readers read comics daily; everyone else is a light reader.
    pub fn is_heavy_reader(&self) -> bool {
        self.reading_frequency == ReadingFrequency::Daily
    }
}

/// One accepted rating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PullRecord {
    pub t: u32,
    pub arm: ArmId,
    pub within_arm_index: u32,
    pub item_id: String,
    pub reward: LikertReward,
    pub dwell_seconds: f64,
    pub server_dwell_seconds: f64,
    pub attention_answer: i64,
    pub attention_correct: bool,
    pub served_at_ms: u64,
    pub submitted_at_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NextItem {
    pub step: u32,
    pub total_steps: u32,
    pub arm: ArmId,
    pub within_arm_index: u32,
    pub item: CatalogItem,
    pub requires_genre_choice: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingSubmission {
    pub step: u32,
    pub reward: i64,
    pub attention_answer: i64,
    pub dwell_seconds: f64,
    #[serde(default)]
    pub chosen_next_arm: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RatingOutcome {
    Accepted { step: u32, phase: Phase },
    /// A replay of an already accepted step; nothing changed.
    Duplicate { step: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttentionSummary {
    pub correct: u32,
    pub total: u32,
    pub rate: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyQuestions {
    /// Drawn from the whole catalog, shown or not.
    pub reading_memory: Vec<String>,
    /// Drawn from the items this participant rated.
    pub rating_memory: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryAnswer {
    pub item_id: String,
    pub answer: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyAnswers {
    /// "Did you read this comic?"
    pub reading_memory: Vec<MemoryAnswer>,
    /// "Did you rate this comic at or above the threshold?"
    pub rating_memory: Vec<MemoryAnswer>,
    pub hindsight_satisfied: bool,
    pub prefers_autonomy: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyResult {
    pub reading_memory_correct: u32,
    #[serde(default = "three")]
    pub reading_memory_total: u32,
    pub rating_memory_correct: u32,
    #[serde(default = "three")]
    pub rating_memory_total: u32,
    pub hindsight_satisfied: bool,
    pub prefers_autonomy: bool,
}

fn three() -> u32 {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyRecord {
    pub answers: SurveyAnswers,
    pub result: SurveyResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    participant_id: String,
    completion_code: String,
    study_id: String,
    algorithm: Algorithm,
    assignment_draw: Option<f64>,
    seed: u64,
    rng: String,
    background: BackgroundProfile,
    phase: Phase,
    policy: PolicyState,
    history: PullHistory,
    records: Vec<PullRecord>,
    pending_choice: Option<ArmId>,
    registered_at_ms: u64,
    step_started_at_ms: Option<u64>,
    survey: Option<SurveyRecord>,
    exit_code: Option<String>,
}

impl Session {
    /// Registers a participant, drawing the algorithm from the configured
    /// assignment weights with the session seed.
    pub fn register(
        config: &ExperimentConfig,
        participant_id: impl Into<String>,
        completion_code: impl Into<String>,
        background: BackgroundProfile,
        seed: u64,
        now_ms: u64,
    ) -> Result<Self, SessionError> {
        let mut rng = derived_rng(seed, stream::ASSIGNMENT, 0);
        let (algorithm, draw) = assign_policy(config, &mut rng);
        let mut session = Self::with_algorithm(config, algorithm, participant_id, completion_code, background, seed, now_ms)?;
        session.assignment_draw = Some(draw);
        Ok(session)
    }

    /// Registers a participant with a predetermined algorithm.
    pub fn with_algorithm(
        config: &ExperimentConfig,
        algorithm: Algorithm,
        participant_id: impl Into<String>,
        completion_code: impl Into<String>,
        background: BackgroundProfile,
        seed: u64,
        now_ms: u64,
    ) -> Result<Self, SessionError> {
        Ok(Session {
            participant_id: participant_id.into(),
            completion_code: completion_code.into(),
            study_id: config.study_id.clone(),
            algorithm,
            assignment_draw: None,
            seed,
            rng: RNG_NAME.to_string(),
            background,
            phase: Phase::Registered,
            policy: config.initial_policy(algorithm, seed)?,
            history: PullHistory::new(),
            records: Vec::new(),
            pending_choice: None,
            registered_at_ms: now_ms,
            step_started_at_ms: None,
            survey: None,
            exit_code: None,
        })
    }

    pub fn participant_id(&self) -> &str {
        &self.participant_id
    }

    pub fn completion_code(&self) -> &str {
        &self.completion_code
    }

    pub fn study_id(&self) -> &str {
        &self.study_id
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algorithm
    }

    pub fn assignment_draw(&self) -> Option<f64> {
        self.assignment_draw
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn background(&self) -> &BackgroundProfile {
        &self.background
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn policy(&self) -> &PolicyState {
        &self.policy
    }

    pub fn history(&self) -> &PullHistory {
        &self.history
    }

    pub fn records(&self) -> &[PullRecord] {
        &self.records
    }

    pub fn survey(&self) -> Option<&SurveyRecord> {
        self.survey.as_ref()
    }

    pub fn exit_code(&self) -> Option<&str> {
        self.exit_code.as_deref()
    }

    pub fn horizon(&self) -> u32 {
        self.policy.horizon
    }

    pub fn is_self_selected(&self) -> bool {
        self.algorithm == Algorithm::SelfSelected
    }

    /// Step awaiting a rating (`T + 1` once the rating loop is over).
    pub fn current_step(&self) -> u32 {
        self.records.len() as u32 + 1
    }

    fn require_phase(&self, phase: Phase, expected: &'static str) -> Result<(), SessionError> {
        if self.phase != phase {
            return Err(SessionError::WrongPhase { expected, actual: self.phase });
        }
        Ok(())
    }

    fn check_choice(&self, choice: Option<u32>) -> Result<Option<ArmId>, SessionError> {
        match (self.is_self_selected(), choice) {
            (true, None) => Err(SessionError::MissingGenreChoice),
            (false, Some(_)) => Err(SessionError::UnexpectedGenreChoice),
            (false, None) => Ok(None),
            (true, Some(arm)) => ArmId::new(arm, self.policy.num_arms)
                .map(Some)
                .map_err(|_| SessionError::InvalidGenreChoice(arm)),
        }
    }

    /// Enters the rating loop. Self-selected participants pick their first
    /// genre here. Returns `false` if the session had already started.
    pub fn start(&mut self, initial_choice: Option<u32>, now_ms: u64) -> Result<bool, SessionError> {
        if self.phase != Phase::Registered {
            return Ok(false);
        }
        self.pending_choice = self.check_choice(initial_choice)?;
        self.phase = Phase::Rating;
        self.step_started_at_ms = Some(now_ms);
        Ok(true)
    }

    /// Item for the current step. Pure: repeated calls return the same item
    /// until a rating is accepted.
    pub fn next_item(&self, catalog: &Catalog) -> Result<NextItem, SessionError> {
        self.require_phase(Phase::Rating, "RATING")?;
        let step = self.current_step();
        let arm = if self.is_self_selected() {
            self.pending_choice.ok_or(SessionError::MissingGenreChoice)?
        } else {
            let mut rng = derived_rng(self.seed, stream::POLICY_STEP, step as u64);
            get_arm(&self.policy, step, &mut rng)?
        };
        let index = self.policy.stats.count(arm) as u32 + 1;
        let item = catalog
            .item(arm, index)
            .ok_or(SessionError::CatalogExhausted { arm, index })?
            .clone();
        Ok(NextItem {
            step,
            total_steps: self.horizon(),
            arm,
            within_arm_index: index,
            item,
            requires_genre_choice: self.is_self_selected() && step < self.horizon(),
        })
    }

    /// Accepts one rating. Replays of already accepted steps are
    /// acknowledged as duplicates without touching the session.
    pub fn submit_rating(
        &mut self,
        config: &ExperimentConfig,
        catalog: &Catalog,
        submission: &RatingSubmission,
        now_ms: u64,
    ) -> Result<RatingOutcome, SessionError> {
        if self.phase == Phase::Registered {
            return Err(SessionError::WrongPhase { expected: "RATING", actual: self.phase });
        }
        if submission.step >= 1 && (submission.step as usize) <= self.records.len() {
            return Ok(RatingOutcome::Duplicate { step: submission.step });
        }
        self.require_phase(Phase::Rating, "RATING")?;
        let step = self.current_step();
        if submission.step != step {
            return Err(SessionError::StepMismatch { expected: step, got: submission.step });
        }
        let reward = LikertReward::from_i64(submission.reward)
            .map_err(|_| SessionError::RatingOutOfRange(submission.reward))?;

        let required = config.min_dwell_seconds;
        if !(submission.dwell_seconds >= required) {
            return Err(SessionError::DwellTooShort { required, observed: submission.dwell_seconds });
        }
        let served_at = self.step_started_at_ms.unwrap_or(self.registered_at_ms);
        let server_dwell = now_ms.saturating_sub(served_at) as f64 / 1000.0;
        if server_dwell + 1e-9 < required {
            return Err(SessionError::DwellTooShort { required, observed: server_dwell });
        }

        let last_step = step == self.horizon();
        let next_choice = if last_step && self.is_self_selected() {
            // no next step to choose for
            match submission.chosen_next_arm {
                Some(arm) => Some(
                    ArmId::new(arm, self.policy.num_arms).map_err(|_| SessionError::InvalidGenreChoice(arm))?,
                ),
                None => None,
            }
        } else {
            self.check_choice(submission.chosen_next_arm)?
        };

        let next = self.next_item(catalog)?;
        let mut policy = self.policy.clone();
        update_arm(&mut policy, step, next.arm, reward)?;
        self.history.push(step, next.arm, reward)?;
        self.policy = policy;
        self.records.push(PullRecord {
            t: step,
            arm: next.arm,
            within_arm_index: next.within_arm_index,
            item_id: next.item.item_id.clone(),
            reward,
            dwell_seconds: submission.dwell_seconds,
            server_dwell_seconds: server_dwell,
            attention_answer: submission.attention_answer,
            attention_correct: submission.attention_answer == next.item.attention_key,
            served_at_ms: served_at,
            submitted_at_ms: now_ms,
        });
        self.pending_choice = next_choice;
        self.step_started_at_ms = Some(now_ms);
        if last_step {
            self.phase = Phase::Survey;
        }
        Ok(RatingOutcome::Accepted { step, phase: self.phase })
    }

    /// Share of correct attention answers and whether it meets `threshold`
    /// (inclusive).
    pub fn attention_pass(&self, threshold: f64) -> Result<AttentionSummary, SessionError> {
        if self.phase < Phase::Survey {
            return Err(SessionError::WrongPhase { expected: "SURVEY or COMPLETE", actual: self.phase });
        }
        Ok(self.attention_summary(threshold))
    }

    pub(crate) fn attention_summary(&self, threshold: f64) -> AttentionSummary {
        let total = self.horizon();
        let correct = self.records.iter().filter(|r| r.attention_correct).count() as u32;
        let rate = correct as f64 / total as f64;
        AttentionSummary {
            correct,
            total,
            rate,
            passed: correct as f64 >= threshold * total as f64 - 1e-9,
        }
    }

    /// Memory questions for the post-study survey, drawn with the session
    /// seed so they are stable across reloads.
    pub fn survey_questions(&self, config: &ExperimentConfig, catalog: &Catalog) -> Result<SurveyQuestions, SessionError> {
        if self.phase < Phase::Survey {
            return Err(SessionError::WrongPhase { expected: "SURVEY", actual: self.phase });
        }
        let mut rng = derived_rng(self.seed, stream::SURVEY, 0);
        let all: Vec<&CatalogItem> = catalog.all_items().map(|(_, _, item)| item).collect();
        let n_read = config.reading_memory_questions.min(all.len());
        let reading_memory = sample(&mut rng, all.len(), n_read)
            .into_iter()
            .map(|i| all[i].item_id.clone())
            .collect();
        let n_rate = config.rating_memory_questions.min(self.records.len());
        let rating_memory = sample(&mut rng, self.records.len(), n_rate)
            .into_iter()
            .map(|i| self.records[i].item_id.clone())
            .collect();
        Ok(SurveyQuestions { reading_memory, rating_memory })
    }

    /// Grades the memory questions and stores the survey; moves to COMPLETE.
    pub fn grade_survey(
        &mut self,
        config: &ExperimentConfig,
        catalog: &Catalog,
        answers: SurveyAnswers,
    ) -> Result<SurveyResult, SessionError> {
        self.require_phase(Phase::Survey, "SURVEY")?;
        if answers.reading_memory.len() != config.reading_memory_questions {
            return Err(SessionError::InvalidSurvey(format!(
                "expected {} reading-memory answers, got {}",
                config.reading_memory_questions,
                answers.reading_memory.len()
            )));
        }
        if answers.rating_memory.len() != config.rating_memory_questions {
            return Err(SessionError::InvalidSurvey(format!(
                "expected {} rating-memory answers, got {}",
                config.rating_memory_questions,
                answers.rating_memory.len()
            )));
        }
        let shown: HashSet<&str> = self.records.iter().map(|r| r.item_id.as_str()).collect();
        let mut reading_correct = 0;
        for a in &answers.reading_memory {
            if catalog.locate(&a.item_id).is_none() {
                return Err(SessionError::UnknownItem(a.item_id.clone()));
            }
            if a.answer == shown.contains(a.item_id.as_str()) {
                reading_correct += 1;
            }
        }
        let mut rating_correct = 0;
        for a in &answers.rating_memory {
            let record = self
                .records
                .iter()
                .find(|r| r.item_id == a.item_id)
                .ok_or_else(|| SessionError::NotInTrajectory(a.item_id.clone()))?;
            if a.answer == (record.reward.get() >= config.rating_memory_threshold) {
                rating_correct += 1;
            }
        }
        let result = SurveyResult {
            reading_memory_correct: reading_correct,
            reading_memory_total: answers.reading_memory.len() as u32,
            rating_memory_correct: rating_correct,
            rating_memory_total: answers.rating_memory.len() as u32,
            hindsight_satisfied: answers.hindsight_satisfied,
            prefers_autonomy: answers.prefers_autonomy,
        };
        self.survey = Some(SurveyRecord { answers, result });
        self.exit_code = Some(format!("{:016x}", derive_seed(self.seed, stream::EXIT_CODE, 0)));
        self.phase = Phase::Complete;
        Ok(result)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const STEP_MS: u64 = 10_000;

    fn setup(algorithm: Algorithm) -> (ExperimentConfig, Catalog, Session) {
        let config = ExperimentConfig::default();
        let catalog = Catalog::synthetic(&config, 50);
        let mut s = Session::with_algorithm(&config, algorithm, "p1", "code", BackgroundProfile::default(), 9, 0).unwrap();
        let choice = (algorithm == Algorithm::SelfSelected).then_some(1);
        assert!(s.start(choice, 0).unwrap());
        (config, catalog, s)
    }

    fn rate(s: &mut Session, config: &ExperimentConfig, catalog: &Catalog, reward: i64, correct: bool) -> RatingOutcome {
        let next = s.next_item(catalog).unwrap();
        let key = next.item.attention_key;
        let step = next.step;
        let sub = RatingSubmission {
            step,
            reward,
            attention_answer: if correct { key } else { key + 100 },
            dwell_seconds: 10.0,
            chosen_next_arm: (s.is_self_selected() && step < s.horizon()).then_some(((step % 5) + 1) as u32),
        };
        s.submit_rating(config, catalog, &sub, step as u64 * STEP_MS).unwrap()
    }

    #[test]
    fn cycle_step_six_is_second_item_of_arm_one() {
        let (c, cat, mut s) = setup(Algorithm::Cycle);
        for _ in 0..5 {
            rate(&mut s, &c, &cat, 5, true);
        }
        let next = s.next_item(&cat).unwrap();
        assert_eq!((next.step, next.arm.get(), next.within_arm_index), (6, 1, 2));
    }

    #[test]
    fn repeat_step_eleven_is_first_item_of_arm_one() {
        let (c, cat, mut s) = setup(Algorithm::Repeat);
        for _ in 0..10 {
            rate(&mut s, &c, &cat, 5, true);
        }
        let next = s.next_item(&cat).unwrap();
        assert_eq!((next.step, next.arm.get(), next.within_arm_index), (11, 1, 1));
    }

    #[test]
    fn next_item_is_idempotent() {
        let (_, cat, s) = setup(Algorithm::Ts);
        assert_eq!(s.next_item(&cat).unwrap(), s.next_item(&cat).unwrap());
    }

    #[test]
    fn dwell_and_range_validation() {
        let (c, cat, mut s) = setup(Algorithm::Ucb);
        let mut sub = RatingSubmission { step: 1, reward: 5, attention_answer: 1, dwell_seconds: 9.9, chosen_next_arm: None };
        let err = s.submit_rating(&c, &cat, &sub, STEP_MS).unwrap_err();
        assert_eq!(err.code(), "DWELL_TOO_SHORT");
        sub.dwell_seconds = 10.0;
        // client claims ten seconds, server saw three
        let err = s.submit_rating(&c, &cat, &sub, 3_000).unwrap_err();
        assert_eq!(err.code(), "DWELL_TOO_SHORT");
        sub.reward = 10;
        assert_eq!(s.submit_rating(&c, &cat, &sub, STEP_MS).unwrap_err().code(), "RATING_OUT_OF_RANGE");
        sub.reward = 0;
        assert_eq!(s.submit_rating(&c, &cat, &sub, STEP_MS).unwrap_err().code(), "RATING_OUT_OF_RANGE");
        sub.reward = 5;
        sub.chosen_next_arm = Some(2);
        assert_eq!(s.submit_rating(&c, &cat, &sub, STEP_MS).unwrap_err().code(), "UNEXPECTED_GENRE_CHOICE");
        sub.chosen_next_arm = None;
        sub.step = 2;
        assert_eq!(s.submit_rating(&c, &cat, &sub, STEP_MS).unwrap_err().code(), "STEP_MISMATCH");
        assert!(s.records().is_empty());
    }

    #[test]
    fn self_selected_requires_choice() {
        let config = ExperimentConfig::default();
        let catalog = Catalog::synthetic(&config, 50);
        let mut s = Session::with_algorithm(&config, Algorithm::SelfSelected, "p", "c", Default::default(), 1, 0).unwrap();
        assert_eq!(s.start(None, 0).unwrap_err().code(), "MISSING_GENRE_CHOICE");
        assert_eq!(s.start(Some(9), 0).unwrap_err().code(), "INVALID_GENRE_CHOICE");
        s.start(Some(3), 0).unwrap();
        assert_eq!(s.next_item(&catalog).unwrap().arm.get(), 3);
        let sub = RatingSubmission { step: 1, reward: 5, attention_answer: 0, dwell_seconds: 12.0, chosen_next_arm: None };
        assert_eq!(s.submit_rating(&config, &catalog, &sub, STEP_MS).unwrap_err().code(), "MISSING_GENRE_CHOICE");
        let sub = RatingSubmission { chosen_next_arm: Some(5), ..sub };
        s.submit_rating(&config, &catalog, &sub, STEP_MS).unwrap();
        let next = s.next_item(&catalog).unwrap();
        assert_eq!((next.arm.get(), next.within_arm_index), (5, 1));
        assert!(next.requires_genre_choice);
    }

    #[test]
    fn fifty_ratings_reach_survey_and_duplicates_are_ignored() {
        let (c, cat, mut s) = setup(Algorithm::EpsGreedy);
        let before = s.clone();
        assert!(!s.clone().start(None, 0).unwrap());
        for i in 0..50 {
            assert!(matches!(rate(&mut s, &c, &cat, 1 + i % 9, true), RatingOutcome::Accepted { .. }));
        }
        assert_eq!(s.phase(), Phase::Survey);
        assert_eq!(s.history().len(), 50);
        let replay = RatingSubmission { step: 50, reward: 3, attention_answer: 0, dwell_seconds: 11.0, chosen_next_arm: None };
        let snapshot = s.clone();
        assert_eq!(s.submit_rating(&c, &cat, &replay, 999_999).unwrap(), RatingOutcome::Duplicate { step: 50 });
        assert_eq!(s, snapshot);
        assert_eq!(s.next_item(&cat).unwrap_err().code(), "WRONG_PHASE");
        assert_ne!(before, s);
    }

    #[test]
    fn attention_threshold_is_inclusive() {
        for (correct, rate_expected, passed) in [(35, 0.70, true), (34, 0.68, false), (50, 1.0, true)] {
            let (c, cat, mut s) = setup(Algorithm::Cycle);
            assert_eq!(s.attention_pass(0.7).unwrap_err().code(), "WRONG_PHASE");
            for i in 0..50 {
                rate(&mut s, &c, &cat, 5, i < correct);
            }
            let summary = s.attention_pass(c.attention_pass_threshold).unwrap();
            assert_eq!(summary.correct, correct as u32);
            assert!((summary.rate - rate_expected).abs() < 1e-12);
            assert_eq!(summary.passed, passed);
            // pure function of stored answers
            assert_eq!(s.attention_pass(0.7).unwrap(), summary);
        }
    }

    #[test]
    fn survey_grading() {
        let (c, cat, mut s) = setup(Algorithm::Cycle);
        for i in 0..50 {
            rate(&mut s, &c, &cat, if i == 0 { 7 } else if i == 1 { 5 } else { 2 }, true);
        }
        let q = s.survey_questions(&c, &cat).unwrap();
        assert_eq!(q, s.survey_questions(&c, &cat).unwrap());
        assert_eq!(q.reading_memory.len(), 3);
        let shown0 = s.records()[0].item_id.clone(); // rated 7
        let shown1 = s.records()[1].item_id.clone(); // rated 5
        let shown2 = s.records()[2].item_id.clone(); // rated 2
        let never = "a1-050".to_string();
        assert!(s.records().iter().all(|r| r.item_id != never));
        let answers = SurveyAnswers {
            reading_memory: vec![
                MemoryAnswer { item_id: never.clone(), answer: false },
                MemoryAnswer { item_id: shown0.clone(), answer: true },
                MemoryAnswer { item_id: shown2.clone(), answer: false },
            ],
            rating_memory: vec![
                MemoryAnswer { item_id: shown0.clone(), answer: true },
                MemoryAnswer { item_id: shown1.clone(), answer: true },
                MemoryAnswer { item_id: shown2.clone(), answer: true },
            ],
            hindsight_satisfied: true,
            prefers_autonomy: false,
        };
        let mut bad = answers.clone();
        bad.rating_memory[0].item_id = never.clone();
        assert_eq!(s.clone().grade_survey(&c, &cat, bad).unwrap_err().code(), "NOT_IN_TRAJECTORY");
        let result = s.grade_survey(&c, &cat, answers.clone()).unwrap();
        assert_eq!(result.reading_memory_correct, 2);
        assert_eq!(result.rating_memory_correct, 2);
        assert!(result.hindsight_satisfied && !result.prefers_autonomy);
        assert_eq!(s.phase(), Phase::Complete);
        assert!(s.exit_code().is_some());
        assert_eq!(s.grade_survey(&c, &cat, answers).unwrap_err().code(), "WRONG_PHASE");
    }

    #[test]
    fn heavy_reader_predicate() {
        let mut b = BackgroundProfile::default();
        assert!(!b.is_heavy_reader());
        b.reading_frequency = ReadingFrequency::Daily;
        assert!(b.is_heavy_reader());
    }

    #[test]
    fn replaying_accepted_prefix_reproduces_state() {
        let (c, cat, mut s) = setup(Algorithm::Ts);
        let mut subs = Vec::new();
        for i in 0..30u32 {
            let next = s.next_item(&cat).unwrap();
            let sub = RatingSubmission {
                step: next.step,
                reward: (1 + (i * 5) % 9) as i64,
                attention_answer: next.item.attention_key,
                dwell_seconds: 10.0,
                chosen_next_arm: None,
            };
            s.submit_rating(&c, &cat, &sub, (i as u64 + 1) * STEP_MS).unwrap();
            subs.push(sub);
        }
        let (_, _, mut replayed) = setup(Algorithm::Ts);
        for (i, sub) in subs.iter().enumerate() {
            replayed.submit_rating(&c, &cat, sub, (i as u64 + 1) * STEP_MS).unwrap();
        }
        assert_eq!(
            serde_json::to_string(replayed.policy()).unwrap(),
            serde_json::to_string(s.policy()).unwrap()
        );
        assert_eq!(replayed.next_item(&cat).unwrap(), s.next_item(&cat).unwrap());
    }
}
