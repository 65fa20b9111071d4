//! JSON over HTTP. Every route except `/health` needs `Authorization: Bearer <token>`.
//!
//! | method | path | body |
//! |---|---|---|
//! | GET | `/patients` | |
//! | POST | `/patients` | import document |
//! | GET | `/patients/{id}` | |
//! | POST | `/patients/{id}/changes` | `{base_revision?, tab?, ops}` |
//! | POST | `/patients/{id}/chat` | `{text}` |
//! | POST | `/patients/{id}/questionnaire` | `{concept, value, refinement?, base_revision?}` |
//! | POST | `/patients/{id}/validate` | |
//! | GET | `/patients/{id}/views/{tab}` | |
//! | GET | `/patients/{id}/events?since=N&wait_ms=M` | |
//!
//! Errors are `{"error": <kind>, "message": <text>}`.

use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{FromRequestParts, Path, Query, State};
use axum::http::request::Parts;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::json;

use crate::hub::{AnswerRequest, ChangeRequest, Hub, HubError};
use crate::tabs::Tab;
use crate::users::{Role, Session};

/// Longest a long-poll request is held open.
pub const MAX_WAIT: Duration = Duration::from_secs(30);

pub struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, kind: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            kind,
            message: message.into(),
        }
    }
}

impl From<HubError> for ApiError {
    fn from(e: HubError) -> Self {
        let (status, kind) = match &e {
            HubError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            HubError::Exists(_) => (StatusCode::CONFLICT, "exists"),
            HubError::Forbidden(_) => (StatusCode::FORBIDDEN, "forbidden"),
            HubError::Stale(_) => (StatusCode::CONFLICT, "stale"),
            HubError::Mutation(medreview_core::patient::MutationError::FrozenLog) => {
                (StatusCode::CONFLICT, "frozen")
            }
            HubError::AlreadyValidated(_) => (StatusCode::CONFLICT, "frozen"),
            HubError::EmptyReview => (StatusCode::UNPROCESSABLE_ENTITY, "empty_review"),
            HubError::Mutation(_) | HubError::Questionnaire(_) | HubError::Review(_) => {
                (StatusCode::UNPROCESSABLE_ENTITY, "invalid")
            }
            HubError::Import(_) | HubError::BadRequest(_) => {
                (StatusCode::BAD_REQUEST, "bad_request")
            }
            HubError::Store(_) => (StatusCode::INTERNAL_SERVER_ERROR, "store"),
        };
        ApiError::new(status, kind, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(json!({ "error": self.kind, "message": self.message })),
        )
            .into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

impl FromRequestParts<Arc<Hub>> for Session {
    type Rejection = ApiError;

    async fn from_request_parts(
        parts: &mut Parts,
        hub: &Arc<Hub>,
    ) -> Result<Self, Self::Rejection> {
        let token = parts
            .headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .ok_or_else(|| {
                ApiError::new(
                    StatusCode::UNAUTHORIZED,
                    "unauthorized",
                    "missing bearer token",
                )
            })?;
        hub.session(token.trim())
            .ok_or_else(|| ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "unknown token"))
    }
}

fn body<T: DeserializeOwned>(bytes: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(bytes)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.to_string()))
}

pub fn router(hub: Arc<Hub>) -> Router {
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/patients", get(list).post(import))
        .route("/patients/{id}", get(open))
        .route("/patients/{id}/changes", post(changes))
        .route("/patients/{id}/chat", post(chat))
        .route("/patients/{id}/questionnaire", post(questionnaire))
        .route("/patients/{id}/validate", post(validate))
        .route("/patients/{id}/views/{tab}", get(view))
        .route("/patients/{id}/events", get(events))
        .with_state(hub)
}

async fn list(State(hub): State<Arc<Hub>>, _session: Session) -> Json<Vec<String>> {
    Json(hub.patient_ids())
}

async fn import(
    State(hub): State<Arc<Hub>>,
    session: Session,
    bytes: Bytes,
) -> ApiResult<Response> {
    if session.role != Role::Pharmacist {
        return Err(HubError::Forbidden("only the pharmacist imports patients".into()).into());
    }
    let text = std::str::from_utf8(&bytes)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.to_string()))?;
    let snapshot = hub.import(text)?;
    Ok((StatusCode::CREATED, Json(snapshot.as_ref())).into_response())
}

async fn open(
    State(hub): State<Arc<Hub>>,
    _session: Session,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    Ok(Json(hub.open(&id)?.as_ref()).into_response())
}

async fn changes(
    State(hub): State<Arc<Hub>>,
    session: Session,
    Path(id): Path<String>,
    bytes: Bytes,
) -> ApiResult<Response> {
    let request: ChangeRequest = body(&bytes)?;
    Ok(Json(hub.submit(&session, &id, request)?).into_response())
}

#[derive(Deserialize)]
struct ChatBody {
    text: String,
}

async fn chat(
    State(hub): State<Arc<Hub>>,
    session: Session,
    Path(id): Path<String>,
    bytes: Bytes,
) -> ApiResult<Response> {
    let request: ChatBody = body(&bytes)?;
    Ok(Json(hub.post_chat(&session, &id, &request.text)?).into_response())
}

async fn questionnaire(
    State(hub): State<Arc<Hub>>,
    session: Session,
    Path(id): Path<String>,
    bytes: Bytes,
) -> ApiResult<Response> {
    let request: AnswerRequest = body(&bytes)?;
    Ok(Json(hub.answer(&session, &id, request)?).into_response())
}

async fn validate(
    State(hub): State<Arc<Hub>>,
    session: Session,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    Ok(Json(hub.validate(&session, &id)?).into_response())
}

async fn view(
    State(hub): State<Arc<Hub>>,
    _session: Session,
    Path((id, tab)): Path<(String, String)>,
) -> ApiResult<Response> {
    let tab: Tab = tab.parse().map_err(|e: crate::tabs::UnknownTab| {
        ApiError::new(StatusCode::NOT_FOUND, "not_found", e.to_string())
    })?;
    let (revision, view) = hub.view(&id, tab)?;
    Ok(
        Json(json!({ "patient_id": id, "revision": revision, "tab": tab, "view": view }))
            .into_response(),
    )
}

#[derive(Deserialize)]
struct EventsQuery {
    #[serde(default)]
    since: u64,
    #[serde(default)]
    wait_ms: u64,
}

async fn events(
    State(hub): State<Arc<Hub>>,
    _session: Session,
    Path(id): Path<String>,
    Query(q): Query<EventsQuery>,
) -> ApiResult<Response> {
    let wait = Duration::from_millis(q.wait_ms).min(MAX_WAIT);
    Ok(Json(hub.wait_events(&id, q.since, wait).await?).into_response())
}
