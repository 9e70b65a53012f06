use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::journal::{Event, Journal};
use super::state::StudyState;
use super::{AppState, StudyHandle};
use crate::audio::{encode_wav, SampleFormat};
use crate::prepare::prepare_file;
use crate::study::{build_groups, write_ratings_csv, StudyConfig, StudyError};

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/studies", post(create_study))
        .route("/studies/{id}/sessions", post(create_session))
        .route("/studies/{id}/export", get(export))
        .route("/studies/{id}/dmos", get(dmos))
        .route("/sessions/{id}/next", get(next_trial))
        .route("/sessions/{id}/ratings", post(submit_rating))
        .route("/audio/{file}", get(audio))
        .with_state(state)
}

struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, kind: &'static str, message: impl Into<String>) -> Self {
        Self { status, kind, message: message.into() }
    }

    fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "NotFound", format!("unknown {what} {id:?}"))
    }

    fn invalid(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "Validation", message)
    }

    fn internal(err: impl std::fmt::Display) -> Self {
        log::error!("internal error: {err}");
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", err.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.kind, "message": self.message }))).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::invalid(r.body_text())
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

fn is_audio_name(name: &str) -> bool {
    name.strip_suffix(".wav")
        .is_some_and(|h| h.len() == 64 && h.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)))
}

/// Prepares every distinct source file and stores it under its content hash.
fn render_audio(paths: &BTreeSet<String>, audio_dir: &Path, target_lufs: f64) -> Result<BTreeMap<String, String>, String> {
    paths
        .iter()
        .map(|src| {
            let (buffer, _) = prepare_file(src, target_lufs).map_err(|e| format!("{src}: {e}"))?;
            let bytes = encode_wav(&[buffer], SampleFormat::Float32).map_err(|e| format!("{src}: {e}"))?;
            let hash: String = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
            let dest = audio_dir.join(format!("{hash}.wav"));
            if !dest.exists() {
                let tmp = audio_dir.join(format!(".{hash}.tmp"));
                std::fs::write(&tmp, &bytes).and_then(|_| std::fs::rename(&tmp, &dest)).map_err(|e| e.to_string())?;
            }
            Ok((src.clone(), hash))
        })
        .collect()
}

async fn create_study(State(app): State<Arc<AppState>>, body: Result<Json<Value>, JsonRejection>) -> ApiResult<Response> {
    let Json(mut body) = body?;
    let obj = body.as_object_mut().ok_or_else(|| ApiError::invalid("study config must be a JSON object"))?;
    obj.entry("rng_seed").or_insert(json!(app.config.seed));
    let config: StudyConfig = serde_json::from_value(body).map_err(|e| ApiError::invalid(e.to_string()))?;
    let groups = build_groups(&config).map_err(|e| ApiError::invalid(e.to_string()))?;

    let paths: BTreeSet<String> =
        config.stimuli.iter().flat_map(|s| [s.reference_path.clone(), s.test_path.clone()]).collect();
    let audio_dir = app.config.audio_dir();
    let target = app.config.target_lufs;
    let audio = tokio::task::spawn_blocking(move || render_audio(&paths, &audio_dir, target))
        .await
        .map_err(ApiError::internal)?
        .map_err(|m| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "AudioPreparation", m))?;

    let study_id = uuid::Uuid::new_v4().simple().to_string();
    let path = app.config.studies_dir().join(format!("{study_id}.ndjson"));
    let event = Event::StudyCreated { study_id: study_id.clone(), config: config.clone(), groups: groups.clone(), audio: audio.clone() };
    let mut journal = Journal::create(&path).map_err(ApiError::internal)?;
    journal.append(&event).map_err(ApiError::internal)?;

    let summary: Vec<Value> = groups
        .groups
        .iter()
        .map(|g| json!({ "group_id": g.id, "trial_count": g.session_len() }))
        .collect();
    let state = StudyState::new(study_id.clone(), config, groups, audio);
    app.studies
        .write()
        .unwrap()
        .insert(study_id.clone(), Arc::new(StudyHandle { journal: Mutex::new(journal), state: RwLock::new(state) }));
    log::info!("created study {study_id}");
    Ok((StatusCode::CREATED, Json(json!({ "study_id": study_id, "groups": summary }))).into_response())
}

#[derive(Deserialize)]
struct SessionRequest {
    participant_id: String,
}

async fn create_session(
    State(app): State<Arc<AppState>>,
    UrlPath(study_id): UrlPath<String>,
    body: Result<Json<SessionRequest>, JsonRejection>,
) -> ApiResult<Response> {
    let study = app.study(&study_id).ok_or_else(|| ApiError::not_found("study", &study_id))?;
    let Json(req) = body?;
    if req.participant_id.trim().is_empty() {
        return Err(ApiError::invalid("participant_id must not be empty"));
    }

    let mut journal = study.journal.lock().unwrap();
    let (group_id, trial_order) = {
        let state = study.state.read().unwrap();
        let group_id = state.choose_group(&req.participant_id).ok_or_else(|| {
            ApiError::new(StatusCode::CONFLICT, "NoGroupAvailable", "participant already has a session in every group")
        })?;
        (group_id, state.trial_order(group_id))
    };
    let session_id = uuid::Uuid::new_v4().simple().to_string();
    let trial_count = trial_order.len();
    let event = Event::SessionCreated {
        session_id: session_id.clone(),
        participant_id: req.participant_id,
        group_id,
        trial_order,
        timestamp: now_ms(),
    };
    journal.append(&event).map_err(ApiError::internal)?;
    study.state.write().unwrap().apply(&event).map_err(ApiError::internal)?;
    drop(journal);
    app.sessions.write().unwrap().insert(session_id.clone(), study_id);

    Ok((
        StatusCode::CREATED,
        Json(json!({ "session_id": session_id, "group_id": group_id, "trial_count": trial_count })),
    )
        .into_response())
}

async fn next_trial(State(app): State<Arc<AppState>>, UrlPath(session_id): UrlPath<String>) -> ApiResult<Response> {
    let study = app.session_study(&session_id).ok_or_else(|| ApiError::not_found("session", &session_id))?;
    let state = study.state.read().unwrap();
    let session = &state.sessions[&session_id];
    if session.is_complete() {
        return Ok(StatusCode::NO_CONTENT.into_response());
    }
    let pair = &state.pairs[&session.trial_order[session.cursor]];
    let url = |path: &str| format!("/audio/{}.wav", state.audio[path]);
    Ok(Json(json!({
        "trial_index": session.cursor,
        "reference_url": url(&pair.reference_path),
        "test_url": url(&pair.test_path),
        "is_last": session.cursor + 1 == session.trial_order.len(),
    }))
    .into_response())
}

#[derive(Deserialize)]
struct RatingSubmission {
    trial_index: i64,
    rating: i64,
}

async fn submit_rating(
    State(app): State<Arc<AppState>>,
    UrlPath(session_id): UrlPath<String>,
    body: Result<Json<RatingSubmission>, JsonRejection>,
) -> ApiResult<Response> {
    let study = app.session_study(&session_id).ok_or_else(|| ApiError::not_found("session", &session_id))?;
    let Json(sub) = body?;
    let rating = u8::try_from(sub.rating)
        .ok()
        .filter(|r| (1..=5).contains(r))
        .ok_or_else(|| ApiError::invalid(format!("rating {} outside 1..=5", sub.rating)))?;

    let mut journal = study.journal.lock().unwrap();
    let (event, remaining) = {
        let state = study.state.read().unwrap();
        let session = &state.sessions[&session_id];
        if session.is_complete() {
            return Err(ApiError::new(StatusCode::CONFLICT, "SessionComplete", "all trials already rated"));
        }
        if sub.trial_index < session.cursor as i64 {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                "DuplicateRating",
                format!("trial {} already rated; next trial is {}", sub.trial_index, session.cursor),
            ));
        }
        if sub.trial_index != session.cursor as i64 {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                "OutOfOrder",
                format!("trial {} submitted; next trial is {}", sub.trial_index, session.cursor),
            ));
        }
        let event = Event::RatingAccepted {
            session_id: session_id.clone(),
            trial_index: session.cursor,
            stimulus_id: session.trial_order[session.cursor].clone(),
            rating,
            timestamp: now_ms(),
        };
        (event, session.trial_order.len() - session.cursor - 1)
    };
    journal.append(&event).map_err(ApiError::internal)?;
    study.state.write().unwrap().apply(&event).map_err(ApiError::internal)?;
    drop(journal);

    Ok((StatusCode::CREATED, Json(json!({ "trial_index": sub.trial_index, "remaining": remaining }))).into_response())
}

async fn export(State(app): State<Arc<AppState>>, UrlPath(study_id): UrlPath<String>) -> ApiResult<Response> {
    let study = app.study(&study_id).ok_or_else(|| ApiError::not_found("study", &study_id))?;
    let rows = study.state.read().unwrap().export_rows();
    let mut buf = Vec::new();
    write_ratings_csv(&mut buf, &rows, true).map_err(ApiError::internal)?;
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], buf).into_response())
}

#[derive(Deserialize)]
struct DmosQuery {
    #[serde(default)]
    partial: bool,
}

async fn dmos(
    State(app): State<Arc<AppState>>,
    UrlPath(study_id): UrlPath<String>,
    Query(q): Query<DmosQuery>,
) -> ApiResult<Response> {
    let study = app.study(&study_id).ok_or_else(|| ApiError::not_found("study", &study_id))?;
    let state = study.state.read().unwrap().clone();
    let summaries = tokio::task::spawn_blocking(move || state.dmos(q.partial)).await.map_err(ApiError::internal)?;
    match summaries {
        Ok(s) => Ok(Json(s).into_response()),
        Err(e @ StudyError::UnratedStimulus(_)) => Err(ApiError::new(StatusCode::CONFLICT, "UnratedStimulus", e.to_string())),
        Err(e) => Err(ApiError::internal(e)),
    }
}

async fn audio(State(app): State<Arc<AppState>>, UrlPath(file): UrlPath<String>) -> ApiResult<Response> {
    if !is_audio_name(&file) {
        return Err(ApiError::not_found("audio file", &file));
    }
    match std::fs::read(app.config.audio_dir().join(&file)) {
        Ok(bytes) => Ok((
            [(header::CONTENT_TYPE, "audio/wav"), (header::CACHE_CONTROL, "public, max-age=31536000, immutable")],
            bytes,
        )
            .into_response()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(ApiError::not_found("audio file", &file)),
        Err(e) => Err(ApiError::internal(e)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn audio_names() {
        assert!(is_audio_name(&format!("{}.wav", "a".repeat(64))));
        assert!(!is_audio_name(&format!("{}.wav", "A".repeat(64))));
        assert!(!is_audio_name("../../etc/passwd"));
        assert!(!is_audio_name(&"a".repeat(64)));
    }
}
