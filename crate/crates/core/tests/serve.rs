mod common;

use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use common::*;
use cthmm::io::{build_report, ReportOptions};
use cthmm::serve::{router, ServerState};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn app() -> Router {
    let (cohort, _) = three_segment_cohort();
    let bundle = build_report(&eleven_state_model(), &cohort, &ReportOptions::default()).unwrap();
    router(Arc::new(ServerState::new(bundle).unwrap()))
}

async fn send(app: &Router, request: Request<Body>) -> (StatusCode, axum::http::HeaderMap, Vec<u8>) {
    let response = app.clone().oneshot(request).await.unwrap();
    let status = response.status();
    let headers = response.headers().clone();
    let body = response.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, headers, body)
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    let (status, _, body) = send(app, Request::get(uri).body(Body::empty()).unwrap()).await;
    (status, serde_json::from_slice(&body).unwrap())
}

fn subgroup_request(filter: &str) -> Request<Body> {
    Request::post("/api/subgroups")
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(json!({ "filter": filter }).to_string()))
        .unwrap()
}

async fn post_subgroup(app: &Router, filter: &str) -> (StatusCode, Vec<u8>) {
    let (status, _, body) = send(app, subgroup_request(filter)).await;
    (status, body)
}

#[tokio::test]
async fn dwell_lists_every_state() {
    let app = app();
    let (status, dwell) = get(&app, "/api/dwell").await;
    assert_eq!(status, StatusCode::OK);
    let entries = dwell.as_array().unwrap();
    assert_eq!(entries.len(), 11);
    assert_eq!(entries[10]["sink"], json!(true));
    assert!(entries[10]["meanYears"].is_null());
    assert!(entries[..10].iter().all(|e| e["sink"] == json!(false)));
    assert!((entries[0]["meanYears"].as_f64().unwrap() - 1.0 / 0.6).abs() < 1e-12);
}

#[tokio::test]
async fn zero_horizon_is_identity() {
    let app = app();
    let (status, body) = get(&app, "/api/transitions?horizon=0").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["months"], json!(0));
    let rows = body["matrix"].as_array().unwrap();
    assert_eq!(rows.len(), 11);
    for (i, row) in rows.iter().enumerate() {
        for (j, p) in row.as_array().unwrap().iter().enumerate() {
            assert_eq!(p.as_f64().unwrap(), if i == j { 1.0 } else { 0.0 });
        }
    }
    let (_, default) = get(&app, "/api/transitions").await;
    assert_eq!(default["months"], json!(24));
    let (_, six) = get(&app, "/api/transitions?horizon=6").await;
    let oracle = oracle_transition(&eleven_state_model(), 0.5);
    assert!((six["matrix"][0][1].as_f64().unwrap() - oracle[(0, 1)]).abs() < 1e-10);
    for bad in ["abc", "-1", "1.5"] {
        let (status, err) = get(&app, &format!("/api/transitions?horizon={bad}")).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{bad}");
        assert!(err["error"].is_string());
    }
}

#[tokio::test]
async fn subgroup_of_the_first_segment() {
    let app = app();
    let (_, first) = three_segment_cohort();
    let (status, body) = post_subgroup(&app, "visited == {0,1,2}").await;
    assert_eq!(status, StatusCode::OK);
    let body: Value = serde_json::from_slice(&body).unwrap();
    let mut ids: Vec<String> = serde_json::from_value(body["subjectIds"].clone()).unwrap();
    ids.sort();
    assert_eq!(ids, first);
    assert_eq!(body["count"], json!(12));
    let states = body["summary"]["states"].as_array().unwrap();
    assert_eq!(states.len(), 11);
    assert!(states[3..].iter().all(|s| s["visits"] == json!(0)));
    assert!(states[..3].iter().all(|s| s["visits"].as_u64().unwrap() > 0));
}

#[tokio::test]
async fn timelines_follow_the_filter() {
    let app = app();
    let (_, all) = get(&app, "/api/timelines").await;
    assert_eq!(all["count"], json!(36));
    let (_, some) = get(&app, "/api/timelines?filter=starts_in(8)").await;
    assert_eq!(some["count"], json!(12));
    let ids: Vec<&str> = some["timelines"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t["subjectId"].as_str().unwrap())
        .collect();
    assert!(ids.iter().all(|id| id.starts_with('C')));
}

#[tokio::test]
async fn malformed_filters_report_the_position() {
    let app = app();
    let (status, body) = post_subgroup(&app, "visited == {0,1").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let body: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(body["position"], json!(15));
    let (status, body) = get(&app, "/api/timelines?filter=dwell(3)%20%3E").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(body["position"].is_u64());
    let garbage = Request::post("/api/subgroups")
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from("{not json"))
        .unwrap();
    assert_eq!(send(&app, garbage).await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn unknown_routes_are_404() {
    let app = app();
    let (status, body) = get(&app, "/api/nope").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert!(body["error"].is_string());
    let (status, _, _) = send(&app, Request::delete("/api/dwell").body(Body::empty()).unwrap()).await;
    assert_ne!(status, StatusCode::OK);
}

#[tokio::test]
async fn summary_and_model_endpoints() {
    let app = app();
    let (_, summary) = get(&app, "/api/states/summary").await;
    assert_eq!(summary["states"].as_array().unwrap().len(), 11);
    assert_eq!(summary["totalVisits"].as_u64().unwrap() as usize, three_segment_cohort().0.visit_count());
    let (_, model) = get(&app, "/api/model").await;
    assert_eq!(model["K"], json!(11));
    assert_eq!(model["rates"].as_array().unwrap().len(), 10);
    let (status, selection) = get(&app, "/api/selection").await;
    assert_eq!(status, StatusCode::OK);
    assert!(selection.is_null());
    let (_, segments) = get(&app, "/api/segments").await;
    assert_eq!(segments.as_array().unwrap().len(), 3);
}

#[tokio::test]
async fn index_is_html() {
    let app = app();
    let (status, headers, body) = send(&app, Request::get("/").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    assert!(headers[header::CONTENT_TYPE].to_str().unwrap().starts_with("text/html"));
    assert!(String::from_utf8(body).unwrap().contains("<html"));
}

#[tokio::test]
async fn cors_is_local_only() {
    let app = app();
    let with_origin = |origin: &str| {
        Request::get("/api/dwell")
            .header(header::ORIGIN, origin)
            .body(Body::empty())
            .unwrap()
    };
    let (_, headers, _) = send(&app, with_origin("http://localhost:5173")).await;
    assert_eq!(headers[header::ACCESS_CONTROL_ALLOW_ORIGIN], "http://localhost:5173");
    let (_, headers, _) = send(&app, with_origin("http://127.0.0.1:8080")).await;
    assert_eq!(headers[header::ACCESS_CONTROL_ALLOW_ORIGIN], "http://127.0.0.1:8080");
    for foreign in ["https://example.com", "http://localhost.evil.com", "null"] {
        let (status, headers, _) = send(&app, with_origin(foreign)).await;
        assert_eq!(status, StatusCode::OK);
        assert!(!headers.contains_key(header::ACCESS_CONTROL_ALLOW_ORIGIN), "{foreign}");
    }
    let preflight = Request::builder()
        .method(Method::OPTIONS)
        .uri("/api/subgroups")
        .header(header::ORIGIN, "http://localhost:3000")
        .header(header::ACCESS_CONTROL_REQUEST_METHOD, "POST")
        .body(Body::empty())
        .unwrap();
    let (status, headers, _) = send(&app, preflight).await;
    assert_eq!(status, StatusCode::NO_CONTENT);
    assert!(headers[header::ACCESS_CONTROL_ALLOW_METHODS].to_str().unwrap().contains("POST"));
}

#[tokio::test]
async fn subgroup_requests_are_pure() {
    let app = app();
    let filters = ["visited == {0,1,2}", "starts_in(3) AND dwell(3) > 0.2", "ends_in(10)", ""];
    let baseline: Vec<Vec<u8>> = {
        let mut out = Vec::new();
        for f in filters {
            out.push(post_subgroup(&app, f).await.1);
        }
        out
    };
    let (_, _, summary_before) = send(&app, Request::get("/api/states/summary").body(Body::empty()).unwrap()).await;
    // interleave in a different order, concurrently
    let mut handles = Vec::new();
    for round in 0..8 {
        let app = app.clone();
        handles.push(tokio::spawn(async move {
            let i = (round * 3) % filters.len();
            (i, post_subgroup(&app, filters[i]).await.1)
        }));
    }
    for h in handles {
        let (i, body) = h.await.unwrap();
        assert_eq!(body, baseline[i]);
    }
    for (i, f) in filters.iter().enumerate().rev() {
        assert_eq!(post_subgroup(&app, f).await.1, baseline[i]);
    }
    let (_, _, summary_after) = send(&app, Request::get("/api/states/summary").body(Body::empty()).unwrap()).await;
    assert_eq!(summary_before, summary_after);
}
