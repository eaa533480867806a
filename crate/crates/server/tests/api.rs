use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use dw_server::api::{router, AppState};
use dw_server::store::SessionStore;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn app(dir: &std::path::Path) -> Router {
    router(Arc::new(AppState::new(SessionStore::open(dir).unwrap())))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let request = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(match body {
            Some(v) => Body::from(v.to_string()),
            None => Body::empty(),
        })
        .unwrap();
    let response = app.clone().oneshot(request).await.unwrap();
    let status = response.status();
    let bytes = response.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, value)
}

async fn start(app: &Router, features: Value) -> String {
    let (status, body) = call(app, "POST", "/sessions", Some(json!({ "features": features }))).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    body["id"].as_str().unwrap().to_string()
}

fn prognosis_bindings() -> Value {
    json!({ "bindings": { "prognosis": [0.5, 0.5], "utilities": [100.0, 40.0, 0.0, 40.0] } })
}

#[tokio::test]
async fn prognosis_consultation() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let id = start(&app, json!({ "prognosis_uncertain": true })).await;

    let (status, body) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["phase"], "FORMULATE");
    assert_eq!(body["schema_id"], "prognosis");

    let (status, body) = call(&app, "POST", &format!("/sessions/{id}/bindings"), Some(prognosis_bindings())).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["session"]["phase"], "REFINE");
    assert_eq!(body["report"]["recommended"], "treat");
    assert_eq!(body["report"]["expected_utility"], 50.0);

    let (status, body) = call(
        &app,
        "POST",
        &format!("/sessions/{id}/whatif"),
        Some(json!({ "param": "S//good", "value": 0.3 })),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["changed_decision"], true);
    assert_eq!(body["trial_alternative"], "wait");

    let (_, body) = call(&app, "POST", &format!("/sessions/{id}/evpi"), Some(json!({ "chance": "S", "decision": "D" }))).await;
    assert!((body["evpi"].as_f64().unwrap() - 20.0).abs() < 1e-9);

    let (_, body) = call(
        &app,
        "POST",
        &format!("/sessions/{id}/sweep"),
        Some(json!({ "param": "S//good", "grid": [0.0, 0.4, 1.0] })),
    )
    .await;
    let optimal: Vec<_> = body["points"].as_array().unwrap().iter().map(|p| p["optimal_alternative"].clone()).collect();
    assert_eq!(optimal, vec![json!("wait"), json!("treat"), json!("treat")]);

    let (status, body) = call(
        &app,
        "POST",
        &format!("/sessions/{id}/commit"),
        Some(json!({ "param": "S//good", "value": 0.3 })),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert!((body["session"]["expected_utility"].as_f64().unwrap() - 40.0).abs() < 1e-9);
    assert_eq!(body["report"]["recommended"], "wait");

    let (status, doc) = call(&app, "GET", &format!("/diagrams/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(doc["version"], 1);
    let d = dw_core::format::decode(&doc.to_string()).unwrap();
    assert!((dw_core::solve(&d).unwrap().expected_utility - 40.0).abs() < 1e-9);
}

#[tokio::test]
async fn error_model() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());

    let (status, body) = call(&app, "GET", "/sessions/does-not-exist", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["code"], "SESSION_NOT_FOUND");

    let (status, body) = call(&app, "POST", "/sessions", Some(json!({ "features": { "urgent": true } }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["code"], "UNKNOWN_FEATURE");
    assert_eq!(body["context"], "urgent");

    let id = start(&app, json!({})).await;
    let (status, body) = call(&app, "GET", &format!("/sessions/{id}/report"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["code"], "WRONG_PHASE");

    let (status, body) = call(&app, "POST", &format!("/sessions/{id}/whatif"), Some(json!({ "param": "O/treat/success", "value": 0.5 }))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["code"], "WRONG_PHASE");

    let bad = json!({ "bindings": {
        "outcome_if_treat": [0.7, 0.4], "outcome_if_wait": [0.2, 0.8], "outcome_value": [100.0, 0.0]
    }});
    let (status, body) = call(&app, "POST", &format!("/sessions/{id}/bindings"), Some(bad)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["code"], "INVALID_ROW");
    assert_eq!(body["context"], "outcome_if_treat");
    let (_, body) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(body["phase"], "FORMULATE");
    assert_eq!(body["events"], 2);

    let request = Request::builder()
        .method("POST")
        .uri(format!("/sessions/{id}/bindings"))
        .body(Body::from("{not json"))
        .unwrap();
    let response = app.clone().oneshot(request).await.unwrap();
    assert_eq!(response.status(), StatusCode::BAD_REQUEST);
    let body: Value = serde_json::from_slice(&response.into_body().collect().await.unwrap().to_bytes()).unwrap();
    assert_eq!(body["code"], "PARSE_ERROR");
}

#[tokio::test]
async fn sessions_survive_restart() {
    let dir = tempfile::tempdir().unwrap();
    let first = app(dir.path());
    let a = start(&first, json!({ "prognosis_uncertain": true })).await;
    let b = start(&first, json!({})).await;
    call(&first, "POST", &format!("/sessions/{a}/bindings"), Some(prognosis_bindings())).await;
    let (_, report_before) = call(&first, "GET", &format!("/sessions/{a}/report"), None).await;

    let second = app(dir.path());
    let (_, list) = call(&second, "GET", "/sessions", None).await;
    let mut ids = vec![a.clone(), b.clone()];
    ids.sort();
    let listed: Vec<_> = list.as_array().unwrap().iter().map(|s| s["id"].as_str().unwrap().to_string()).collect();
    assert_eq!(listed, ids);
    let (_, report_after) = call(&second, "GET", &format!("/sessions/{a}/report"), None).await;
    assert_eq!(report_before, report_after);
}

#[tokio::test]
async fn schemas_carry_prompts() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (status, body) = call(&app, "GET", "/schemas", None).await;
    assert_eq!(status, StatusCode::OK);
    let schemas = body["schemas"].as_array().unwrap();
    assert_eq!(schemas.len(), 3);
    assert!(schemas.iter().all(|s| s["slots"].as_array().unwrap().iter().all(|slot| slot["prompt"].is_string())));
    assert_eq!(body["features"].as_array().unwrap().len(), 2);
}

#[tokio::test]
async fn concurrent_commits_are_serialized() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let id = start(&app, json!({ "prognosis_uncertain": true })).await;
    call(&app, "POST", &format!("/sessions/{id}/bindings"), Some(prognosis_bindings())).await;
    let mut tasks = Vec::new();
    for k in 0..16 {
        let app = app.clone();
        let id = id.clone();
        tasks.push(tokio::spawn(async move {
            let value = if k % 2 == 0 { 0.3 } else { 0.5 };
            call(&app, "POST", &format!("/sessions/{id}/commit"), Some(json!({ "param": "S//good", "value": value }))).await.0
        }));
    }
    for t in tasks {
        assert_eq!(t.await.unwrap(), StatusCode::OK);
    }
    let (_, body) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(body["events"], 3 + 16);
    let store = SessionStore::open(dir.path()).unwrap();
    let replayed = store.load(&id).unwrap();
    let seqs: Vec<u64> = replayed.events.iter().map(|e| e.seq).collect();
    assert_eq!(seqs, (0..19).collect::<Vec<_>>());
}
