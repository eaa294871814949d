//! HTTP API. Every JSON body uses the canonical serialization (sorted keys,
//! pretty printed, trailing newline).

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::extract::{DefaultBodyLimit, FromRequestParts, Multipart, Path, Query, State};
use axum::http::request::Parts;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use vizcritique::ingest::IngestError;
use vizcritique::report::canonicalize;

use crate::service::{ProjectService, ServiceError};

#[derive(Clone)]
pub struct AppState {
    pub service: Arc<ProjectService>,
    /// Bearer token to user id.
    pub tokens: Arc<BTreeMap<String, String>>,
}

pub fn canonical_body(value: &impl Serialize) -> String {
    let v = canonicalize(serde_json::to_value(value).expect("response bodies serialize"));
    let mut text = serde_json::to_string_pretty(&v).expect("values serialize");
    text.push('\n');
    text
}

fn json_text(status: StatusCode, text: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], text).into_response()
}

fn json(status: StatusCode, value: &impl Serialize) -> Response {
    json_text(status, canonical_body(value))
}

#[derive(Debug)]
pub enum ApiError {
    Unauthorized,
    BadRequest(String),
    NotFound(String),
    Service(ServiceError),
    Internal(String),
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        ApiError::Service(e)
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
    message: String,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, kind, message) = match self {
            ApiError::Unauthorized => (
                StatusCode::UNAUTHORIZED,
                "unauthorized",
                "missing or unknown bearer token".to_string(),
            ),
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, "bad_request", m),
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, "not_found", m),
            ApiError::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, "internal", m),
            ApiError::Service(e) => {
                let (status, kind) = match &e {
                    ServiceError::Validation(_) => (StatusCode::BAD_REQUEST, "validation"),
                    ServiceError::UnknownProject(_) => (StatusCode::NOT_FOUND, "unknown_project"),
                    ServiceError::UnknownRevision { .. } => (StatusCode::NOT_FOUND, "unknown_revision"),
                    ServiceError::NotReady { .. } => (StatusCode::CONFLICT, "not_ready"),
                    ServiceError::Image(IngestError::Size { .. }) => (StatusCode::UNPROCESSABLE_ENTITY, "size"),
                    ServiceError::Image(IngestError::Format(_)) => (StatusCode::UNPROCESSABLE_ENTITY, "format"),
                    ServiceError::Image(_) => (StatusCode::UNPROCESSABLE_ENTITY, "decode"),
                    ServiceError::Store(_) | ServiceError::CorruptReport(_) => {
                        (StatusCode::INTERNAL_SERVER_ERROR, "storage")
                    }
                };
                (status, kind, e.to_string())
            }
        };
        json(status, &ErrorBody { error: kind, message })
    }
}

/// The authenticated user id.
pub struct User(pub String);

impl FromRequestParts<AppState> for User {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &AppState) -> Result<Self, Self::Rejection> {
        let token = parts
            .headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .map(str::trim)
            .ok_or(ApiError::Unauthorized)?;
        state
            .tokens
            .get(token)
            .map(|u| User(u.clone()))
            .ok_or(ApiError::Unauthorized)
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
}

#[derive(Deserialize)]
struct NewProject {
    name: String,
}

async fn create_project(
    State(s): State<AppState>,
    User(user): User,
    Json(body): Json<NewProject>,
) -> Result<Response, ApiError> {
    let p = blocking(move || Ok(s.service.create_project(&user, &body.name)?)).await?;
    Ok(json(StatusCode::CREATED, &p))
}

async fn list_projects(State(s): State<AppState>, User(user): User) -> Result<Response, ApiError> {
    let ps = blocking(move || Ok(s.service.list_projects(&user)?)).await?;
    Ok(json(StatusCode::OK, &ps))
}

async fn delete_project(
    State(s): State<AppState>,
    User(user): User,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    blocking(move || Ok(s.service.delete_project(&user, &id)?)).await?;
    Ok(StatusCode::NO_CONTENT.into_response())
}

async fn upload_revision(
    State(s): State<AppState>,
    User(user): User,
    Path(id): Path<String>,
    mut multipart: Multipart,
) -> Result<Response, ApiError> {
    let mut image = None;
    while let Some(field) = multipart
        .next_field()
        .await
        .map_err(|e| ApiError::BadRequest(e.to_string()))?
    {
        if field.name() != Some("image") {
            continue;
        }
        let format = field
            .file_name()
            .and_then(|n| n.rsplit_once('.').map(|(_, ext)| ext.to_string()))
            .or_else(|| field.content_type().map(str::to_string))
            .unwrap_or_default();
        let bytes = field.bytes().await.map_err(|e| ApiError::BadRequest(e.to_string()))?;
        image = Some((bytes, format));
    }
    let (bytes, format) = image.ok_or_else(|| ApiError::BadRequest("multipart field `image` is required".into()))?;
    let rec = blocking(move || Ok(s.service.upload_revision(&user, &id, &bytes, &format)?)).await?;
    Ok(json(StatusCode::ACCEPTED, &rec))
}

async fn list_revisions(
    State(s): State<AppState>,
    User(user): User,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let revs = blocking(move || Ok(s.service.list_revisions(&user, &id)?)).await?;
    Ok(json(StatusCode::OK, &revs))
}

async fn get_report(
    State(s): State<AppState>,
    User(user): User,
    Path((id, seq)): Path<(String, u32)>,
) -> Result<Response, ApiError> {
    let text = blocking(move || Ok(s.service.report_text(&user, &id, seq)?)).await?;
    Ok(json_text(StatusCode::OK, text))
}

#[derive(Deserialize)]
struct ArchiveQuery {
    a: u32,
    b: u32,
}

#[derive(Serialize)]
struct ArchiveBody {
    a: vizcritique::report::DesignReport,
    b: vizcritique::report::DesignReport,
}

async fn archive(
    State(s): State<AppState>,
    User(user): User,
    Path(id): Path<String>,
    Query(q): Query<ArchiveQuery>,
) -> Result<Response, ApiError> {
    let (a, b) = blocking(move || Ok(s.service.archive(&user, &id, q.a, q.b)?)).await?;
    Ok(json(StatusCode::OK, &ArchiveBody { a, b }))
}

/// `/artifacts/<project>/<seq>/<path inside the revision directory>`.
async fn artifact(State(s): State<AppState>, User(user): User, Path(path): Path<String>) -> Result<Response, ApiError> {
    let mut parts = path.splitn(3, '/');
    let (Some(project), Some(seq), Some(rel)) = (parts.next(), parts.next(), parts.next()) else {
        return Err(ApiError::NotFound(path));
    };
    let seq: u32 = seq.parse().map_err(|_| ApiError::NotFound(path.clone()))?;
    let content_type = match rel.rsplit('.').next() {
        Some("png") => "image/png",
        Some("jpg") => "image/jpeg",
        _ => return Err(ApiError::NotFound(path)),
    };
    let (project, rel) = (project.to_string(), rel.to_string());
    let bytes = blocking(move || Ok(s.service.revision_file(&user, &project, seq, &rel)?))
        .await?
        .ok_or(ApiError::NotFound(path))?;
    Ok(([(header::CONTENT_TYPE, content_type)], bytes).into_response())
}

pub fn router(state: AppState, max_upload_bytes: usize) -> Router {
    Router::new()
        .route("/projects", post(create_project).get(list_projects))
        .route("/projects/{id}", delete(delete_project))
        .route("/projects/{id}/revisions", post(upload_revision).get(list_revisions))
        .route("/projects/{id}/revisions/{seq}/report", get(get_report))
        .route("/projects/{id}/archive", get(archive))
        .route("/artifacts/{*path}", get(artifact))
        .layer(DefaultBodyLimit::max(max_upload_bytes))
        .with_state(state)
}
