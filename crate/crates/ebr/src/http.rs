//! HTTP API over [`Service`]. Bodies are UTF-8 JSON; errors come back as
//! `{"error": "..."}` with a matching status code.

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use ebr_core::calculus::SymbolicProbability;
use ebr_core::ontology::{EvidenceItem, SourceProfile};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::files::{Alert, ReferenceKnowledgeBase};
use crate::service::{Service, ServiceError};

pub struct ApiError(StatusCode, String);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        let status = match &e {
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::Conflict(_) | ServiceError::NoKnowledgeBase => StatusCode::CONFLICT,
            ServiceError::Crashed => StatusCode::SERVICE_UNAVAILABLE,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn parse<T: DeserializeOwned>(body: &str, what: &str) -> ApiResult<T> {
    serde_json::from_str(body).map_err(|e| ApiError(StatusCode::BAD_REQUEST, format!("{what} does not parse: {e}")))
}

/// Runs a blocking service call off the async executor.
async fn blocking<T, F>(service: Service, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(Service) -> Result<T, ServiceError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(service))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(ApiError::from)
}

pub fn router(service: Service) -> Router {
    Router::new()
        .route("/alerts", post(post_alert))
        .route("/analyses", get(list_analyses))
        .route("/analyses/{id}", get(get_analysis))
        .route("/analyses/{id}/history", get(get_history))
        .route("/analyses/{id}/assumptions", post(post_assumption))
        .route("/analyses/{id}/resume", post(post_resume))
        .route("/analyses/{id}/veto", get(get_veto).post(post_veto))
        .route("/analyses/{id}/report", get(get_report))
        .route("/analyses/{id}/biases", get(get_biases))
        .route("/evidence", post(post_evidence))
        .route("/kb", get(get_kb).put(put_kb))
        .route("/patterns", get(get_patterns))
        .route("/profiles/{id}", put(put_profile))
        .route("/assessments", post(post_assessment))
        .with_state(service)
}

async fn post_alert(State(service): State<Service>, body: String) -> ApiResult<Response> {
    let alert = Alert::parse(&body).map_err(|e| ApiError(StatusCode::BAD_REQUEST, e))?;
    let submitted = blocking(service, move |s| {
        let submitted = s.submit_alert(alert)?;
        if submitted.created {
            s.start(&submitted.id)?;
        }
        Ok(submitted)
    })
    .await?;
    let status = if submitted.created { StatusCode::CREATED } else { StatusCode::OK };
    Ok((status, Json(submitted)).into_response())
}

async fn list_analyses(State(service): State<Service>) -> ApiResult<Response> {
    Ok(Json(blocking(service, |s| s.list()).await?).into_response())
}

async fn get_analysis(State(service): State<Service>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(blocking(service, move |s| s.get_analysis(&id)).await?).into_response())
}

async fn get_history(State(service): State<Service>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(blocking(service, move |s| s.history(&id)).await?).into_response())
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct AssumptionBody {
    node: String,
    /// Absent or null clears the assumption.
    #[serde(default)]
    value: Option<SymbolicProbability>,
}

async fn post_assumption(
    State(service): State<Service>,
    Path(id): Path<String>,
    body: String,
) -> ApiResult<Response> {
    let body: AssumptionBody = parse(&body, "assumption")?;
    let result = blocking(service, move |s| s.post_assumption(&id, &body.node, body.value)).await?;
    Ok(Json(result).into_response())
}

async fn post_resume(State(service): State<Service>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(blocking(service, move |s| s.resume(&id)).await?).into_response())
}

async fn get_veto(State(service): State<Service>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(blocking(service, move |s| s.veto_state(&id)).await?).into_response())
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
struct VetoBody {
    #[serde(default)]
    reason: String,
}

async fn post_veto(State(service): State<Service>, Path(id): Path<String>, body: String) -> ApiResult<Response> {
    let body: VetoBody = if body.trim().is_empty() { VetoBody::default() } else { parse(&body, "veto")? };
    blocking(service, move |s| s.veto(&id, &body.reason)).await?;
    Ok(StatusCode::NO_CONTENT.into_response())
}

#[derive(Debug, Deserialize)]
struct ReportQuery {
    format: Option<String>,
}

async fn get_report(
    State(service): State<Service>,
    Path(id): Path<String>,
    Query(query): Query<ReportQuery>,
) -> ApiResult<Response> {
    match query.format.as_deref() {
        Some("text") => {
            let text = blocking(service, move |s| s.report_text(&id)).await?;
            Ok(([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], text).into_response())
        }
        None | Some("json") => Ok(Json(blocking(service, move |s| s.report(&id)).await?).into_response()),
        Some(other) => Err(ApiError(StatusCode::BAD_REQUEST, format!("unknown report format {other:?}"))),
    }
}

async fn get_biases(State(service): State<Service>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(blocking(service, move |s| s.biases(&id)).await?).into_response())
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
struct Affected {
    affected: Vec<String>,
}

async fn post_evidence(State(service): State<Service>, body: String) -> ApiResult<Response> {
    let item: EvidenceItem = parse(&body, "evidence item")?;
    let affected = blocking(service, move |s| s.ingest_evidence(item)).await?;
    Ok(Json(Affected { affected }).into_response())
}

async fn get_kb(State(service): State<Service>) -> ApiResult<Response> {
    let kb = blocking(service, |s| s.kb()).await?;
    Ok(Json(kb.as_ref().clone()).into_response())
}

async fn put_kb(State(service): State<Service>, body: String) -> ApiResult<Response> {
    let kb: ReferenceKnowledgeBase = parse(&body, "knowledge base")?;
    let version = blocking(service, move |s| s.put_kb(kb)).await?;
    Ok(Json(serde_json::json!({ "version": version })).into_response())
}

async fn get_patterns(State(service): State<Service>) -> ApiResult<Response> {
    let patterns = blocking(service, |s| Ok(s.patterns())).await?;
    Ok(Json(patterns.into_values().collect::<Vec<_>>()).into_response())
}

async fn put_profile(State(service): State<Service>, Path(id): Path<String>, body: String) -> ApiResult<Response> {
    let profile: SourceProfile = parse(&body, "source profile")?;
    if profile.id != id {
        return Err(ApiError(StatusCode::BAD_REQUEST, format!("profile id {:?} does not match path {id:?}", profile.id)));
    }
    let affected = blocking(service, move |s| s.update_profile(profile)).await?;
    Ok(Json(Affected { affected }).into_response())
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct AssessmentBody {
    item: EvidenceItem,
    #[serde(default)]
    profile: Option<SourceProfile>,
}

async fn post_assessment(State(service): State<Service>, body: String) -> ApiResult<Response> {
    let body: AssessmentBody = parse(&body, "assessment request")?;
    let assessment = blocking(service, move |s| s.assess(&body.item, body.profile)).await?;
    Ok(Json(assessment).into_response())
}

/// Serves until ctrl-c.
pub async fn serve(service: Service, listener: tokio::net::TcpListener) -> std::io::Result<()> {
    axum::serve(listener, router(service))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
