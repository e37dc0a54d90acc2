//! JSON-over-HTTP routes.
//!
//! Everything except registration, login and the catalog listing needs an
//! `Authorization: Bearer <token>` header from `POST /api/login`.

use std::sync::Arc;

use axum::extract::{FromRequestParts, Path, Query, State};
use axum::http::request::Parts;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use diva_core::recommend::Feedback;
use diva_core::{MovieRecord, TriageLists};
use serde::{Deserialize, Serialize};

use crate::advisor::{
    AccountView, Advisor, FeedbackAck, RegisterRequest, SearchRequest, SearchResponse, ServiceError,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default)]
    pub detail: Option<serde_json::Value>,
}

pub struct ApiError(ServiceError);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            ServiceError::LoginTaken(_) => StatusCode::CONFLICT,
            ServiceError::Invalid(_) => StatusCode::BAD_REQUEST,
            ServiceError::Unauthorized => StatusCode::UNAUTHORIZED,
            ServiceError::Forbidden(_) => StatusCode::FORBIDDEN,
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::SessionClosed(_) => StatusCode::GONE,
            ServiceError::EmptyTriage => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::Store(_) | ServiceError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let detail = match &self.0 {
            ServiceError::LoginTaken(login) => Some(serde_json::json!({ "login": login })),
            ServiceError::SessionClosed(sid) => Some(serde_json::json!({ "session_id": sid })),
            _ => None,
        };
        let body = ErrorBody {
            code: self.0.code().to_string(),
            message: self.0.to_string(),
            detail,
        };
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

/// The login behind the request's bearer token.
pub struct Authed(pub String);

impl FromRequestParts<Arc<Advisor>> for Authed {
    type Rejection = ApiError;

    async fn from_request_parts(
        parts: &mut Parts,
        advisor: &Arc<Advisor>,
    ) -> Result<Self, Self::Rejection> {
        let token = parts
            .headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .ok_or(ServiceError::Unauthorized)?;
        Ok(Authed(advisor.authenticate(token.trim())?))
    }
}

/// Runs CPU-bound advisor work off the async executor.
async fn blocking<T: Send + 'static>(
    advisor: &Arc<Advisor>,
    f: impl FnOnce(&Advisor) -> Result<T, ServiceError> + Send + 'static,
) -> Result<T, ApiError> {
    let advisor = advisor.clone();
    tokio::task::spawn_blocking(move || f(&advisor))
        .await
        .map_err(|e| ApiError(ServiceError::Internal(format!("worker failed: {e}"))))?
        .map_err(ApiError)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoginRequest {
    pub login: String,
    pub password: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoginResponse {
    pub login: String,
    pub token: String,
}

#[derive(Debug, Deserialize)]
struct MovieQuery {
    title_prefix: Option<String>,
}

async fn register(
    State(a): State<Arc<Advisor>>,
    Json(req): Json<RegisterRequest>,
) -> Result<Response, ApiError> {
    let view = blocking(&a, move |a| a.register(req)).await?;
    Ok((StatusCode::CREATED, Json(view)).into_response())
}

async fn login(
    State(a): State<Arc<Advisor>>,
    Json(req): Json<LoginRequest>,
) -> ApiResult<LoginResponse> {
    let login = req.login.clone();
    let token = blocking(&a, move |a| a.login(&req.login, &req.password)).await?;
    Ok(Json(LoginResponse { login, token }))
}

async fn movies(
    State(a): State<Arc<Advisor>>,
    Query(q): Query<MovieQuery>,
) -> Json<Vec<MovieRecord>> {
    Json(a.movies(q.title_prefix.as_deref()))
}

fn same_user(authed: &str, login: &str) -> Result<(), ApiError> {
    if authed == login {
        Ok(())
    } else {
        Err(ServiceError::Forbidden(authed.to_string()).into())
    }
}

async fn get_account(
    State(a): State<Arc<Advisor>>,
    Authed(me): Authed,
    Path(login): Path<String>,
) -> ApiResult<AccountView> {
    same_user(&me, &login)?;
    Ok(Json(a.account(&login)?))
}

async fn put_triage(
    State(a): State<Arc<Advisor>>,
    Authed(me): Authed,
    Path(login): Path<String>,
    Json(triage): Json<TriageLists>,
) -> ApiResult<AccountView> {
    same_user(&me, &login)?;
    Ok(Json(
        blocking(&a, move |a| a.set_triage(&login, triage)).await?,
    ))
}

async fn search(
    State(a): State<Arc<Advisor>>,
    Authed(me): Authed,
    Json(req): Json<SearchRequest>,
) -> ApiResult<SearchResponse> {
    Ok(Json(blocking(&a, move |a| a.search(&me, req)).await?))
}

async fn feedback(
    State(a): State<Arc<Advisor>>,
    Authed(me): Authed,
    Path(sid): Path<String>,
    Json(fb): Json<Feedback>,
) -> ApiResult<FeedbackAck> {
    Ok(Json(
        blocking(&a, move |a| a.feedback(&me, &sid, fb)).await?,
    ))
}

async fn continue_search(
    State(a): State<Arc<Advisor>>,
    Authed(me): Authed,
    Path(sid): Path<String>,
) -> ApiResult<SearchResponse> {
    Ok(Json(
        blocking(&a, move |a| a.continue_search(&me, &sid)).await?,
    ))
}

async fn close(
    State(a): State<Arc<Advisor>>,
    Authed(me): Authed,
    Path(sid): Path<String>,
) -> Result<StatusCode, ApiError> {
    blocking(&a, move |a| a.close(&me, &sid)).await?;
    Ok(StatusCode::NO_CONTENT)
}

pub fn router(advisor: Arc<Advisor>) -> Router {
    Router::new()
        .route("/api/users", post(register))
        .route("/api/login", post(login))
        .route("/api/movies", get(movies))
        .route("/api/users/{login}", get(get_account))
        .route("/api/users/{login}/triage", put(put_triage))
        .route("/api/search", post(search))
        .route("/api/search/{sid}/feedback", post(feedback))
        .route("/api/search/{sid}/continue", post(continue_search))
        .route("/api/search/{sid}/close", post(close))
        .with_state(advisor)
}
