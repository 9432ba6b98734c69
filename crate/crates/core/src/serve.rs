//! Read-only HTTP API over a report bundle.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Query as QueryParams, Request, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmm::ChainModel;
use crate::io::{HorizonMatrix, ReportBundle, DEFAULT_HORIZON_MONTHS};
use crate::outputs::{filter_subjects, horizon_matrix, state_summary, Query, StateSummary, SubjectTimeline};

const INDEX_HTML: &str = include_str!("../assets/index.html");

/// Immutable server state shared by all handlers.
#[derive(Debug)]
pub struct ServerState {
    bundle: ReportBundle,
    model: ChainModel,
}

impl ServerState {
    pub fn new(bundle: ReportBundle) -> Result<Self> {
        let model = bundle.chain_model()?;
        Ok(Self { bundle, model })
    }

    pub fn bundle(&self) -> &ReportBundle {
        &self.bundle
    }
}

#[derive(Debug, Serialize)]
struct ApiError {
    error: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    position: Option<usize>,
}

fn error_response(status: StatusCode, error: Error) -> Response {
    let position = match &error {
        Error::Query { position, .. } => Some(*position),
        _ => None,
    };
    let body = ApiError {
        error: error.to_string(),
        position,
    };
    (status, Json(body)).into_response()
}

fn bad_request(error: Error) -> Response {
    error_response(StatusCode::BAD_REQUEST, error)
}

type Shared = State<Arc<ServerState>>;

async fn model(State(s): Shared) -> Response {
    Json(&s.bundle.model).into_response()
}

async fn states_summary(State(s): Shared) -> Response {
    Json(&s.bundle.state_summary).into_response()
}

async fn dwell(State(s): Shared) -> Response {
    Json(&s.bundle.dwell).into_response()
}

async fn selection(State(s): Shared) -> Response {
    Json(&s.bundle.selection).into_response()
}

async fn segments(State(s): Shared) -> Response {
    Json(&s.bundle.segments).into_response()
}

async fn transitions(State(s): Shared, QueryParams(params): QueryParams<HashMap<String, String>>) -> Response {
    let months = match params.get("horizon") {
        None => DEFAULT_HORIZON_MONTHS,
        Some(text) => match text.trim().parse::<u32>() {
            Ok(m) => m,
            Err(_) => {
                return bad_request(Error::InvalidArgument(format!(
                    "horizon must be a non-negative integer number of months, got `{text}`"
                )))
            }
        },
    };
    if let Some(stored) = s.bundle.horizon(months) {
        return Json(stored).into_response();
    }
    match horizon_matrix(&s.model, f64::from(months)) {
        Ok(p) => Json(HorizonMatrix {
            months,
            matrix: p.to_rows(),
        })
        .into_response(),
        Err(e) => bad_request(e),
    }
}

fn parse_filter(text: Option<&str>) -> std::result::Result<Query, Response> {
    Query::parse(text.unwrap_or("")).map_err(bad_request)
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
struct TimelinesResponse<'a> {
    filter: String,
    count: usize,
    timelines: Vec<&'a SubjectTimeline>,
}

async fn timelines(State(s): Shared, QueryParams(params): QueryParams<HashMap<String, String>>) -> Response {
    let query = match parse_filter(params.get("filter").map(String::as_str)) {
        Ok(q) => q,
        Err(r) => return r,
    };
    let labeled = &s.bundle.labeled;
    let timelines: Vec<&SubjectTimeline> = labeled
        .subjects
        .iter()
        .zip(&s.bundle.timelines)
        .filter(|(subject, _)| query.matches(subject))
        .map(|(_, t)| t)
        .collect();
    Json(TimelinesResponse {
        filter: query.to_string(),
        count: timelines.len(),
        timelines,
    })
    .into_response()
}

#[derive(Debug, Deserialize)]
struct SubgroupRequest {
    #[serde(default)]
    filter: String,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
struct SubgroupResponse {
    filter: String,
    count: usize,
    subject_ids: Vec<String>,
    summary: StateSummary,
}

async fn subgroups(State(s): Shared, body: std::result::Result<Json<SubgroupRequest>, JsonRejection>) -> Response {
    let request = match body {
        Ok(Json(r)) => r,
        Err(rejection) => return bad_request(Error::InvalidArgument(rejection.body_text())),
    };
    let query = match parse_filter(Some(&request.filter)) {
        Ok(q) => q,
        Err(r) => return r,
    };
    let ids = filter_subjects(&s.bundle.labeled, &query);
    let subgroup = s.bundle.labeled.restrict(&ids);
    match state_summary(&s.model, &subgroup, &s.bundle.summary_options) {
        Ok(summary) => Json(SubgroupResponse {
            filter: query.to_string(),
            count: ids.len(),
            subject_ids: ids,
            summary,
        })
        .into_response(),
        Err(e) => error_response(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}

async fn index() -> Html<&'static str> {
    Html(INDEX_HTML)
}

async fn not_found() -> Response {
    error_response(StatusCode::NOT_FOUND, Error::InvalidArgument("no such route".into()))
}

/// True for `http(s)://localhost`, `127.0.0.1` and `[::1]`, any port.
pub fn is_local_origin(origin: &str) -> bool {
    let Some(rest) = origin.strip_prefix("http://").or_else(|| origin.strip_prefix("https://")) else {
        return false;
    };
    let host = if rest.starts_with('[') {
        rest.split_inclusive(']').next().unwrap_or("")
    } else {
        rest.split(':').next().unwrap_or("")
    };
    let port_ok = match &rest[host.len()..] {
        "" => true,
        p => p.strip_prefix(':').is_some_and(|n| !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit())),
    };
    port_ok && matches!(host, "localhost" | "127.0.0.1" | "[::1]")
}

async fn local_cors(request: Request, next: Next) -> Response {
    let origin = request
        .headers()
        .get(header::ORIGIN)
        .and_then(|v| v.to_str().ok())
        .filter(|o| is_local_origin(o))
        .and_then(|o| HeaderValue::from_str(o).ok());
    let mut response = if request.method() == Method::OPTIONS && origin.is_some() {
        StatusCode::NO_CONTENT.into_response()
    } else {
        next.run(request).await
    };
    if let Some(origin) = origin {
        let h = response.headers_mut();
        h.insert(header::ACCESS_CONTROL_ALLOW_ORIGIN, origin);
        h.insert(header::ACCESS_CONTROL_ALLOW_METHODS, HeaderValue::from_static("GET, POST, OPTIONS"));
        h.insert(header::ACCESS_CONTROL_ALLOW_HEADERS, HeaderValue::from_static("content-type"));
        h.insert(header::VARY, HeaderValue::from_static("origin"));
    }
    response
}

pub fn router(state: Arc<ServerState>) -> Router {
    Router::new()
        .route("/", get(index))
        .route("/api/model", get(model))
        .route("/api/states/summary", get(states_summary))
        .route("/api/dwell", get(dwell))
        .route("/api/transitions", get(transitions))
        .route("/api/selection", get(selection))
        .route("/api/segments", get(segments))
        .route("/api/timelines", get(timelines))
        .route("/api/subgroups", post(subgroups))
        .fallback(not_found)
        .layer(middleware::from_fn(local_cors))
        .with_state(state)
}

/// Serves `bundle` on `addr` until Ctrl-C.
pub async fn serve(bundle: ReportBundle, addr: SocketAddr) -> Result<()> {
    let app = router(Arc::new(ServerState::new(bundle)?));
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::is_local_origin;

    #[test]
    fn only_local_origins_are_allowed() {
        for o in ["http://localhost:5173", "http://127.0.0.1", "https://[::1]:8080", "http://localhost"] {
            assert!(is_local_origin(o), "{o}");
        }
        for o in ["http://example.com", "http://localhost.evil.com", "http://127.0.0.1.nip.io", "localhost:3000", "http://localhost:"] {
            assert!(!is_local_origin(o), "{o}");
        }
    }
}
