use std::collections::{BTreeMap, HashSet};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use banditfield::bandit::ArmId;
use banditfield::dataset::ExportFilter;
use banditfield::seed::{derive_seed, stream};
use banditfield::session::{BackgroundProfile, RatingOutcome, RatingSubmission, SurveyAnswers};
use banditfield::{Phase, Session, TrajectoryDataset};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::ApiError;
use crate::store::StoredSession;
use crate::{AppState, Inner};

pub const SESSION_TOKEN_HEADER: &str = "x-session-token";

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/register", post(register))
        .route("/session/{id}/start", post(start))
        .route("/session/{id}/next", get(next))
        .route("/session/{id}/rate", post(rate))
        .route("/session/{id}/survey", get(survey_questions).post(submit_survey))
        .route("/session/{id}/status", get(status))
        .route("/export", get(export))
        .with_state(state)
}

fn parse_body<T: DeserializeOwned + Default>(body: &Bytes) -> Result<T, ApiError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request("BAD_REQUEST", format!("invalid JSON body: {e}")))
}

fn parse_required<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request("BAD_REQUEST", format!("invalid JSON body: {e}")))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenreOption {
    pub arm: u32,
    pub label: String,
}

fn genres(inner: &Inner) -> Vec<GenreOption> {
    (0..inner.config.num_arms)
        .map(|slot| {
            let arm = ArmId::from_zero_based(slot);
            GenreOption { arm: arm.get(), label: inner.config.arm_label(arm) }
        })
        .collect()
}

#[derive(Debug, Default, Deserialize)]
struct RegisterRequest {
    completion_code: String,
    #[serde(default)]
    background: BackgroundProfile,
    #[serde(default)]
    gate_answer: Option<i64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RegisterResponse {
    pub participant_id: String,
    pub session_token: String,
    /// The assigned policy is never disclosed.
    pub policy_hidden: bool,
    pub requires_genre_choice: bool,
    pub phase: Phase,
    pub total_steps: u32,
    pub genres: Vec<GenreOption>,
}

async fn register(State(state): State<AppState>, body: Bytes) -> Result<Json<RegisterResponse>, ApiError> {
    let req: RegisterRequest = parse_required(&body)?;
    let inner = &state.0;
    let code = req.completion_code.trim().to_string();
    if code.is_empty() {
        return Err(ApiError::bad_request("INVALID_CODE", "completion code is required"));
    }
    if let Some(gate) = &inner.config.gate {
        if req.gate_answer != Some(gate.answer) {
            return Err(ApiError::bad_request("GATE_FAILED", "screening question answered incorrectly"));
        }
    }
    // registrations are serialized: the code set doubles as the registration lock
    let mut used = inner.used_codes.lock().expect("code lock");
    if inner.config.valid_codes.as_ref().is_some_and(|valid| !valid.contains(&code)) {
        return Err(ApiError::bad_request("INVALID_CODE", "unknown completion code"));
    }
    if used.contains(&code) {
        return Err(ApiError::new(StatusCode::CONFLICT, "CODE_REUSED", "completion code already used"));
    }
    let index = inner.sessions.read().expect("session map lock").len() as u64;
    let participant_id = format!("P{index:06}");
    let seed = derive_seed(inner.config.seed, stream::REGISTRATION, index);
    let session = Session::register(&inner.config, &participant_id, &code, req.background, seed, inner.clock.now_ms())?;
    let stored = StoredSession { token: uuid::Uuid::new_v4().simple().to_string(), session };
    inner.store.save(&stored)?;

    let response = RegisterResponse {
        participant_id: participant_id.clone(),
        session_token: stored.token.clone(),
        policy_hidden: true,
        requires_genre_choice: stored.session.is_self_selected(),
        phase: stored.session.phase(),
        total_steps: stored.session.horizon(),
        genres: genres(inner),
    };
    used.insert(code);
    inner.sessions.write().expect("session map lock").insert(participant_id, Arc::new(Mutex::new(stored)));
    Ok(Json(response))
}

fn slot(inner: &Inner, id: &str, headers: &HeaderMap) -> Result<Arc<Mutex<StoredSession>>, ApiError> {
    let slot = inner
        .sessions
        .read()
        .expect("session map lock")
        .get(id)
        .cloned()
        .ok_or_else(|| ApiError::not_found(format!("no participant {id}")))?;
    let token = headers.get(SESSION_TOKEN_HEADER).and_then(|v| v.to_str().ok());
    if token != Some(slot.lock().expect("session lock").token.as_str()) {
        return Err(ApiError::unauthorized());
    }
    Ok(slot)
}

fn read_session<T>(
    inner: &Inner,
    id: &str,
    headers: &HeaderMap,
    f: impl FnOnce(&Session) -> Result<T, ApiError>,
) -> Result<T, ApiError> {
    let slot = slot(inner, id, headers)?;
    let guard = slot.lock().expect("session lock");
    f(&guard.session)
}

/// Applies `f` to a copy of the session and, when it reports a change,
/// persists the copy before making it visible.
fn mutate_session<T>(
    inner: &Inner,
    id: &str,
    headers: &HeaderMap,
    f: impl FnOnce(&mut Session) -> Result<(T, bool), ApiError>,
) -> Result<T, ApiError> {
    let slot = slot(inner, id, headers)?;
    let mut guard = slot.lock().expect("session lock");
    let mut next = guard.clone();
    let (out, changed) = f(&mut next.session)?;
    if changed {
        inner.store.save(&next)?;
        *guard = next;
    }
    Ok(out)
}

#[derive(Debug, Default, Deserialize)]
struct StartRequest {
    #[serde(default)]
    chosen_arm: Option<u32>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StartResponse {
    pub started: bool,
    pub phase: Phase,
}

async fn start(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Json<StartResponse>, ApiError> {
    let req: StartRequest = parse_body(&body)?;
    let now = state.0.clock.now_ms();
    mutate_session(&state.0, &id, &headers, |s| {
        let started = s.start(req.chosen_arm, now)?;
        Ok((StartResponse { started, phase: s.phase() }, started))
    })
    .map(Json)
}

/// Participant-facing view of a catalog item; the attention key stays on
/// the server.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ItemView {
    pub item_id: String,
    pub attention_question: Option<String>,
    pub metadata: BTreeMap<String, String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct NextResponse {
    pub step: u32,
    pub total_steps: u32,
    pub genre: String,
    pub item: ItemView,
    pub requires_genre_choice: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub genres: Vec<GenreOption>,
}

fn wrong_phase_hint(id: &str, s: &Session) -> Option<ApiError> {
    let hint = match s.phase() {
        Phase::Registered => format!("session not started; POST /session/{id}/start"),
        Phase::Survey => format!("rating loop finished; continue at /session/{id}/survey"),
        Phase::Complete => "study already completed".to_string(),
        Phase::Rating => return None,
    };
    Some(ApiError::new(StatusCode::CONFLICT, "WRONG_PHASE", hint))
}

async fn next(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> Result<Json<NextResponse>, ApiError> {
    let inner = &state.0;
    read_session(inner, &id, &headers, |s| {
        if let Some(e) = wrong_phase_hint(&id, s) {
            return Err(e);
        }
        let next = s.next_item(&inner.catalog)?;
        Ok(NextResponse {
            step: next.step,
            total_steps: next.total_steps,
            genre: inner.config.arm_label(next.arm),
            item: ItemView {
                item_id: next.item.item_id,
                attention_question: next.item.attention_question,
                metadata: next.item.metadata,
            },
            requires_genre_choice: next.requires_genre_choice,
            genres: if next.requires_genre_choice { genres(inner) } else { Vec::new() },
        })
    })
    .map(Json)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RateResponse {
    pub accepted: bool,
    pub step: u32,
    pub phase: Phase,
    pub next_available: bool,
}

async fn rate(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Json<RateResponse>, ApiError> {
    let submission: RatingSubmission = parse_required(&body)?;
    let inner = &state.0;
    let now = inner.clock.now_ms();
    mutate_session(inner, &id, &headers, |s| {
        let outcome = s.submit_rating(&inner.config, &inner.catalog, &submission, now)?;
        let phase = s.phase();
        Ok(match outcome {
            RatingOutcome::Accepted { step, phase } => {
                (RateResponse { accepted: true, step, phase, next_available: phase == Phase::Rating }, true)
            }
            RatingOutcome::Duplicate { step } => {
                (RateResponse { accepted: false, step, phase, next_available: phase == Phase::Rating }, false)
            }
        })
    })
    .map(Json)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SurveyView {
    pub reading_memory: Vec<String>,
    pub rating_memory: Vec<String>,
    pub rating_threshold: u8,
}

async fn survey_questions(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> Result<Json<SurveyView>, ApiError> {
    let inner = &state.0;
    read_session(inner, &id, &headers, |s| {
        let q = s.survey_questions(&inner.config, &inner.catalog)?;
        if s.phase() != Phase::Survey {
            return Err(ApiError::new(StatusCode::CONFLICT, "WRONG_PHASE", "survey already submitted"));
        }
        Ok(SurveyView {
            reading_memory: q.reading_memory,
            rating_memory: q.rating_memory,
            rating_threshold: inner.config.rating_memory_threshold,
        })
    })
    .map(Json)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SurveyResponse {
    pub accepted: bool,
    pub phase: Phase,
    pub exit_code: Option<String>,
}

async fn submit_survey(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Json<SurveyResponse>, ApiError> {
    let answers: SurveyAnswers = parse_required(&body)?;
    let inner = &state.0;
    mutate_session(inner, &id, &headers, |s| {
        if s.phase() == Phase::Complete {
            let replay = SurveyResponse { accepted: false, phase: s.phase(), exit_code: s.exit_code().map(String::from) };
            return Ok((replay, false));
        }
        let q = s.survey_questions(&inner.config, &inner.catalog)?;
        let asked = |ids: &[String]| ids.iter().cloned().collect::<HashSet<_>>();
        let answered = |a: &[banditfield::session::MemoryAnswer]| a.iter().map(|x| x.item_id.clone()).collect::<HashSet<_>>();
        if asked(&q.reading_memory) != answered(&answers.reading_memory)
            || asked(&q.rating_memory) != answered(&answers.rating_memory)
        {
            return Err(ApiError::bad_request("INVALID_SURVEY", "answers must cover exactly the questions asked"));
        }
        s.grade_survey(&inner.config, &inner.catalog, answers)?;
        Ok((SurveyResponse { accepted: true, phase: s.phase(), exit_code: s.exit_code().map(String::from) }, true))
    })
    .map(Json)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StatusResponse {
    pub participant_id: String,
    pub phase: Phase,
    pub completed_steps: u32,
    pub total_steps: u32,
    pub exit_code: Option<String>,
}

async fn status(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> Result<Json<StatusResponse>, ApiError> {
    read_session(&state.0, &id, &headers, |s| {
        Ok(StatusResponse {
            participant_id: s.participant_id().into(),
            phase: s.phase(),
            completed_steps: s.records().len() as u32,
            total_steps: s.horizon(),
            exit_code: s.exit_code().map(String::from),
        })
    })
    .map(Json)
}

#[derive(Debug, Default, Deserialize)]
struct ExportQuery {
    study: Option<String>,
    filter: Option<String>,
    format: Option<String>,
}

async fn export(
    State(state): State<AppState>,
    Query(q): Query<ExportQuery>,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    let inner = &state.0;
    let presented = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    match (&inner.operator_token, presented) {
        (Some(expected), Some(got)) if expected == got => {}
        _ => return Err(ApiError::unauthorized()),
    }
    if let Some(study) = &q.study {
        if *study != inner.config.study_id {
            return Err(ApiError::not_found(format!("no study {study}")));
        }
    }
    let filter = match q.filter.as_deref().unwrap_or("passed") {
        "passed" => ExportFilter::Passed,
        "all" => ExportFilter::All,
        other => return Err(ApiError::bad_request("BAD_REQUEST", format!("unknown filter {other:?}"))),
    };
    let snapshot = state.snapshot();
    let dataset = TrajectoryDataset::from_sessions(&inner.config, snapshot.iter().map(|s| &s.session), filter);
    let mut buf = Vec::new();
    let internal = |e: banditfield::dataset::DatasetError| {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "EXPORT_FAILED", e.to_string())
    };
    let content_type = match q.format.as_deref().unwrap_or("json") {
        "json" => {
            dataset.write_json(&mut buf).map_err(internal)?;
            "application/json"
        }
        "csv" => {
            dataset.write_csv(&mut buf).map_err(internal)?;
            "text/csv"
        }
        other => return Err(ApiError::bad_request("BAD_REQUEST", format!("unknown format {other:?}"))),
    };
    Ok(([(header::CONTENT_TYPE, content_type)], buf).into_response())
}
