//! Trajectory interchange format.
//!
//! JSON carries the full dataset (strata flags, survey results). CSV is the
//! flat per-pull export with the fixed column order
//! `participant_id,policy,t,arm,within_arm_index,item_id,reward,dwell_s,attention_correct`.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bandit::{ArmId, LikertReward};
use crate::config::{Algorithm, ExperimentConfig};
use crate::session::{Phase, Session, SurveyResult};

pub const SCHEMA_VERSION: u32 = 1;

pub const CSV_HEADER: [&str; 9] = [
    "participant_id",
    "policy",
    "t",
    "arm",
    "within_arm_index",
    "item_id",
    "reward",
    "dwell_s",
    "attention_correct",
];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported schema_version {0}")]
    SchemaVersion(u32),
    #[error("INVALID_DATASET: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PullRow {
    pub t: u32,
    pub arm: ArmId,
    pub within_arm_index: u32,
    pub item_id: String,
    pub reward: LikertReward,
    pub dwell_s: f64,
    pub attention_correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantTrajectory {
    pub id: String,
    pub policy: Algorithm,
    #[serde(default)]
    pub heavy: Option<bool>,
    #[serde(default)]
    pub attention_rate: Option<f64>,
    #[serde(default)]
    pub attention_passed: Option<bool>,
    pub pulls: Vec<PullRow>,
    #[serde(default)]
    pub survey: Option<SurveyResult>,
}

impl ParticipantTrajectory {
    pub fn from_session(session: &Session, attention_threshold: f64) -> Self {
        let attention = session.attention_summary(attention_threshold);
        ParticipantTrajectory {
            id: session.participant_id().to_string(),
            policy: session.algorithm(),
            heavy: Some(session.background().is_heavy_reader()),
            attention_rate: Some(attention.rate),
            attention_passed: Some(attention.passed),
            pulls: session
                .records()
                .iter()
                .map(|r| PullRow {
                    t: r.t,
                    arm: r.arm,
                    within_arm_index: r.within_arm_index,
                    item_id: r.item_id.clone(),
                    reward: r.reward,
                    dwell_s: r.dwell_seconds,
                    attention_correct: r.attention_correct,
                })
                .collect(),
            survey: session.survey().map(|s| s.result),
        }
    }

    pub fn arm_pull_count(&self, arm: ArmId) -> usize {
        self.pulls.iter().filter(|p| p.arm == arm).count()
    }

    pub fn rewards(&self) -> impl Iterator<Item = u8> + '_ {
        self.pulls.iter().map(|p| p.reward.get())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportFilter {
    #[default]
    All,
    /// Only participants meeting the attention-check threshold.
    Passed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryDataset {
    pub schema_version: u32,
    #[serde(default)]
    pub study_id: Option<String>,
    #[serde(rename = "K")]
    pub num_arms: usize,
    #[serde(rename = "T")]
    pub horizon: u32,
    #[serde(default)]
    pub arm_labels: Vec<String>,
    pub participants: Vec<ParticipantTrajectory>,
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    participant_id: String,
    policy: Algorithm,
    t: u32,
    arm: u32,
    within_arm_index: u32,
    item_id: String,
    reward: u8,
    dwell_s: f64,
    attention_correct: bool,
}

impl TrajectoryDataset {
    pub fn empty(config: &ExperimentConfig) -> Self {
        TrajectoryDataset {
            schema_version: SCHEMA_VERSION,
            study_id: Some(config.study_id.clone()),
            num_arms: config.num_arms,
            horizon: config.horizon,
            arm_labels: config.arm_labels.clone(),
            participants: Vec::new(),
        }
    }

    /// Completed sessions only, optionally restricted to attention-passing
    /// participants.
    pub fn from_sessions<'a, I>(config: &ExperimentConfig, sessions: I, filter: ExportFilter) -> Self
    where
        I: IntoIterator<Item = &'a Session>,
    {
        let mut dataset = Self::empty(config);
        for session in sessions {
            if session.phase() != Phase::Complete {
                continue;
            }
            let trajectory = ParticipantTrajectory::from_session(session, config.attention_pass_threshold);
            if filter == ExportFilter::Passed && trajectory.attention_passed != Some(true) {
                continue;
            }
            dataset.participants.push(trajectory);
        }
        dataset
    }

    /// Pulls per arm in a balanced fixed sequence.
    pub fn pulls_per_arm(&self) -> u32 {
        self.horizon / self.num_arms as u32
    }

    pub fn arm_label(&self, arm: ArmId) -> String {
        self.arm_labels
            .get(arm.slot())
            .cloned()
            .unwrap_or_else(|| format!("arm {arm}"))
    }

    pub fn group(&self, policy: Algorithm) -> Vec<&ParticipantTrajectory> {
        self.participants.iter().filter(|p| p.policy == policy).collect()
    }

    pub fn policies(&self) -> Vec<Algorithm> {
        let mut seen: Vec<Algorithm> = self.participants.iter().map(|p| p.policy).collect();
        seen.sort();
        seen.dedup();
        seen
    }

    /// Structural checks: arms in range, times `1..=len` in order, and
    /// fixed-sequence trajectories of length T.
    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(DatasetError::SchemaVersion(self.schema_version));
        }
        if self.num_arms < 2 || self.horizon == 0 {
            return Err(DatasetError::Invalid(format!(
                "K = {}, T = {} is not a valid design",
                self.num_arms, self.horizon
            )));
        }
        for p in &self.participants {
            for (i, pull) in p.pulls.iter().enumerate() {
                if pull.t as usize != i + 1 {
                    return Err(DatasetError::Invalid(format!(
                        "participant {}: pull #{} has t = {}",
                        p.id,
                        i + 1,
                        pull.t
                    )));
                }
                if pull.arm.check(self.num_arms).is_err() {
                    return Err(DatasetError::Invalid(format!(
                        "participant {}: arm {} out of range",
                        p.id, pull.arm
                    )));
                }
            }
            if p.pulls.len() > self.horizon as usize {
                return Err(DatasetError::Invalid(format!(
                    "participant {} has {} pulls, T = {}",
                    p.id,
                    p.pulls.len(),
                    self.horizon
                )));
            }
        }
        Ok(())
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<(), DatasetError> {
        serde_json::to_writer_pretty(writer, self)?;
        Ok(())
    }

    pub fn read_json<R: Read>(reader: R) -> Result<Self, DatasetError> {
        let dataset: TrajectoryDataset = serde_json::from_reader(reader)?;
        dataset.validate()?;
        Ok(dataset)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DatasetError> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        w.write_record(CSV_HEADER)?;
        for p in &self.participants {
            for pull in &p.pulls {
                w.serialize(CsvRow {
                    participant_id: p.id.clone(),
                    policy: p.policy,
                    t: pull.t,
                    arm: pull.arm.get(),
                    within_arm_index: pull.within_arm_index,
                    item_id: pull.item_id.clone(),
                    reward: pull.reward.get(),
                    dwell_s: pull.dwell_s,
                    attention_correct: pull.attention_correct,
                })?;
            }
        }
        w.flush().map_err(|source| DatasetError::Io { path: "<csv>".into(), source })?;
        Ok(())
    }

    /// Reads the flat CSV. K and T are inferred from the data when not given;
    /// strata flags and survey results are not part of the CSV.
    pub fn read_csv<R: Read>(reader: R, num_arms: Option<usize>, horizon: Option<u32>) -> Result<Self, DatasetError> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != CSV_HEADER {
            return Err(DatasetError::Invalid(format!(
                "unexpected CSV header {:?}",
                headers.iter().collect::<Vec<_>>()
            )));
        }
        let mut order: Vec<String> = Vec::new();
        let mut by_id: BTreeMap<String, ParticipantTrajectory> = BTreeMap::new();
        let mut max_arm = 0u32;
        for row in r.deserialize::<CsvRow>() {
            let row = row?;
            let reward = LikertReward::new(row.reward)
                .map_err(|e| DatasetError::Invalid(format!("participant {}: {e}", row.participant_id)))?;
            if row.arm == 0 {
                return Err(DatasetError::Invalid(format!("participant {}: arm 0", row.participant_id)));
            }
            max_arm = max_arm.max(row.arm);
            let entry = by_id.entry(row.participant_id.clone()).or_insert_with(|| {
                order.push(row.participant_id.clone());
                ParticipantTrajectory {
                    id: row.participant_id.clone(),
                    policy: row.policy,
                    heavy: None,
                    attention_rate: None,
                    attention_passed: None,
                    pulls: Vec::new(),
                    survey: None,
                }
            });
            if entry.policy != row.policy {
                return Err(DatasetError::Invalid(format!(
                    "participant {} listed under two policies",
                    row.participant_id
                )));
            }
            entry.pulls.push(PullRow {
                t: row.t,
                arm: ArmId::from_zero_based(row.arm as usize - 1),
                within_arm_index: row.within_arm_index,
                item_id: row.item_id,
                reward,
                dwell_s: row.dwell_s,
                attention_correct: row.attention_correct,
            });
        }
        let mut participants: Vec<ParticipantTrajectory> =
            order.iter().map(|id| by_id.remove(id).expect("ordered id")).collect();
        for p in &mut participants {
            p.pulls.sort_by_key(|pull| pull.t);
            let correct = p.pulls.iter().filter(|pull| pull.attention_correct).count();
            if !p.pulls.is_empty() {
                p.attention_rate = Some(correct as f64 / p.pulls.len() as f64);
            }
        }
        let inferred_t = participants.iter().map(|p| p.pulls.len()).max().unwrap_or(0) as u32;
        let dataset = TrajectoryDataset {
            schema_version: SCHEMA_VERSION,
            study_id: None,
            num_arms: num_arms.unwrap_or(max_arm.max(2) as usize),
            horizon: horizon.unwrap_or(inferred_t.max(1)),
            arm_labels: Vec::new(),
            participants,
        };
        dataset.validate()?;
        Ok(dataset)
    }

    /// Loads `.csv` files as CSV and anything else as JSON.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let reader = std::io::BufReader::new(file);
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            Self::read_csv(reader, None, None)
        } else {
            Self::read_json(reader)
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DatasetError> {
        let path = path.as_ref();
        let io_err = |source| DatasetError::Io { path: path.display().to_string(), source };
        let file = std::fs::File::create(path).map_err(io_err)?;
        let mut writer = std::io::BufWriter::new(file);
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            self.write_csv(&mut writer)?;
        } else {
            self.write_json(&mut writer)?;
        }
        writer.flush().map_err(io_err)
    }
}
