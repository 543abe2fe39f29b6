use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use querybuilder_core::{Corpus, Engine, IngestConfig, SessionConfig, SessionStore};
use querybuilder_server::{router, AppState};
use serde_json::{json, Value};
use tower::ServiceExt;

fn app(dir: &std::path::Path) -> Router {
    let corpus = Corpus::from_texts(
        IngestConfig::default(),
        [
            (
                "d1",
                "Flint switched its water source to the river. Lead leached from old pipes. Residents noticed brown water.",
            ),
            (
                "d2",
                "The emergency manager approved the switch. Officials said the water was safe. Lead levels rose in children.",
            ),
            ("d3", "The governor apologized for the crisis. Pipes were replaced across the city."),
        ],
    )
    .unwrap();
    let engine = Engine::from_corpus(corpus).unwrap();
    let store = SessionStore::open(dir).unwrap();
    router(AppState::new(
        Arc::new(engine),
        store,
        SessionConfig::default(),
    ))
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, value)
}

async fn new_session(app: &Router) -> String {
    let (status, body) = call(
        app,
        Method::POST,
        "/api/sessions",
        Some(json!({"task_narrative": "Flint water crisis", "request_narrative": "Health effects of lead"})),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED);
    body["session_id"].as_str().unwrap().to_string()
}

#[tokio::test]
async fn health_reports_doc_count() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (status, body) = call(&app, Method::GET, "/api/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, json!({"status": "ok", "corpus_docs": 3}));
}

#[tokio::test]
async fn unknown_session_is_404() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (status, body) = call(
        &app,
        Method::POST,
        "/api/sessions/nope/search",
        Some(json!({"terms": "lead"})),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["code"], "session_not_found");
    let (status, body) = call(&app, Method::GET, "/api/nothing", None).await;
    assert_eq!(
        (status, body["code"].as_str()),
        (StatusCode::NOT_FOUND, Some("not_found"))
    );
}

#[tokio::test]
async fn malformed_requests_are_structured_400s() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let id = new_session(&app).await;
    let uri = format!("/api/sessions/{id}/judgments");
    let (status, body) = call(
        &app,
        Method::POST,
        &uri,
        Some(json!({"sentence_id": "d1:1", "level": "Great"})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["code"], "bad_judgment_level");

    let (status, body) = call(&app, Method::POST, &uri, Some(json!({"sentence": 1}))).await;
    assert_eq!(
        (status, body["code"].as_str()),
        (StatusCode::BAD_REQUEST, Some("bad_request"))
    );

    let (status, body) = call(
        &app,
        Method::POST,
        "/api/sessions",
        Some(json!({"task_narrative": "", "request_narrative": "r"})),
    )
    .await;
    assert_eq!(
        (status, body["code"].as_str()),
        (StatusCode::BAD_REQUEST, Some("empty_narrative"))
    );

    let (status, body) = call(
        &app,
        Method::POST,
        &format!("/api/sessions/{id}/enrich"),
        None,
    )
    .await;
    assert_eq!(
        (status, body["code"].as_str()),
        (StatusCode::BAD_REQUEST, Some("no_examples"))
    );

    let (status, body) = call(&app, Method::GET, "/api/sentences/d9:0", None).await;
    assert_eq!(
        (status, body["code"].as_str()),
        (StatusCode::NOT_FOUND, Some("unknown_sentence"))
    );
}

#[tokio::test]
async fn full_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let id = new_session(&app).await;

    let (status, first) = call(
        &app,
        Method::POST,
        &format!("/api/sessions/{id}/search"),
        Some(json!({"terms": "lead water", "k": 3})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(first["iteration"], 1);
    let results = first["results"].as_array().unwrap();
    assert_eq!(results.len(), 3);
    let top = &results[0];
    assert!(!top["matched"]["search_terms"]
        .as_array()
        .unwrap()
        .is_empty());

    let judged = top["sentence_id"].as_str().unwrap().to_string();
    let (status, body) = call(
        &app,
        Method::POST,
        &format!("/api/sessions/{id}/judgments"),
        Some(json!({"sentence_id": judged, "level": "RelevantToRequest"})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["session"]["selected_sentence_ids"], json!([judged]));

    let (_, second) = call(
        &app,
        Method::POST,
        &format!("/api/sessions/{id}/search"),
        Some(json!({"terms": "lead water", "k": 3})),
    )
    .await;
    let ids: Vec<&str> = second["results"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["sentence_id"].as_str().unwrap())
        .collect();
    assert!(!ids.contains(&judged.as_str()));
    let expanded = second["results"]
        .as_array()
        .unwrap()
        .iter()
        .any(|r| !r["matched"]["expanded"].as_array().unwrap().is_empty());
    assert!(
        expanded,
        "selected sentence terms should show up as expanded matches"
    );

    let (status, enriched) = call(
        &app,
        Method::POST,
        &format!("/api/sessions/{id}/enrich"),
        Some(json!({"k": 4})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(enriched["example_count"], 1);
    assert_eq!(enriched["results"].as_array().unwrap().len(), 4);

    let (_, stats) = call(
        &app,
        Method::GET,
        &format!("/api/sessions/{id}/stats"),
        None,
    )
    .await;
    assert_eq!(stats["sessions"], 1);
    assert_eq!(stats["stages"][0]["rows"][0]["relevant"], 1.0);

    let (_, sentence) = call(&app, Method::GET, "/api/sentences/d1:1", None).await;
    assert_eq!(sentence["previous"]["sentence_id"], "d1:0");
    assert_eq!(sentence["next"]["sentence_id"], "d1:2");

    let (status, export) = call(
        &app,
        Method::POST,
        &format!("/api/sessions/{id}/export"),
        None,
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(export["selected_sentence_ids"], json!([judged]));
    assert!(dir.path().join(format!("{id}.export.json")).is_file());

    let (status, body) = call(
        &app,
        Method::POST,
        &format!("/api/sessions/{id}/search"),
        Some(json!({"terms": "lead"})),
    )
    .await;
    assert_eq!(
        (status, body["code"].as_str()),
        (StatusCode::CONFLICT, Some("session_frozen"))
    );
}

#[tokio::test]
async fn sessions_survive_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let id = {
        let app = app(dir.path());
        let id = new_session(&app).await;
        call(
            &app,
            Method::POST,
            &format!("/api/sessions/{id}/search"),
            Some(json!({"terms": "pipes"})),
        )
        .await;
        call(
            &app,
            Method::POST,
            &format!("/api/sessions/{id}/judgments"),
            Some(json!({"sentence_id": "d3:1", "level": "relevant_to_task"})),
        )
        .await;
        id
    };
    let app = app(dir.path());
    let (status, snap) = call(&app, Method::GET, &format!("/api/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(snap["search_history"].as_array().unwrap().len(), 1);
    assert_eq!(snap["judgments"][0]["level"], "RelevantToTask");
}

#[tokio::test]
async fn identical_requests_give_identical_bodies() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let a = new_session(&app).await;
    let b = new_session(&app).await;
    let search = |id: &str| format!("/api/sessions/{id}/search");
    let (_, ra) = call(
        &app,
        Method::POST,
        &search(&a),
        Some(json!({"terms": "water", "k": 5})),
    )
    .await;
    let (_, rb) = call(
        &app,
        Method::POST,
        &search(&b),
        Some(json!({"terms": "water", "k": 5})),
    )
    .await;
    assert_eq!(ra["results"], rb["results"]);
    assert_eq!(ra["query"], rb["query"]);
}
