use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use ebn::model::{load_model, CompiledModel};
use ebn_service::{parse_sets, router, AppState};

fn toy() -> CompiledModel {
    load_model(include_str!("fixtures/toy.json")).unwrap().compile(Some(1)).unwrap()
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
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, v)
}

async fn upload(app: &Router) -> String {
    let (st, v) = call(app, Method::POST, "/sessions", Some(json!({ "network": toy() }))).await;
    assert_eq!(st, StatusCode::CREATED, "{v}");
    assert_eq!(v["revision"], 0);
    v["id"].as_str().unwrap().to_string()
}

#[tokio::test]
async fn scenarios_are_listed() {
    let app = router(Arc::new(AppState::new(Some(1))));
    let (st, v) = call(&app, Method::GET, "/scenarios", None).await;
    assert_eq!(st, StatusCode::OK);
    let names: Vec<&str> = v.as_array().unwrap().iter().map(|s| s["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["frame", "lifecycle", "infranet"]);
}

#[tokio::test]
async fn unknown_scenario_and_session_are_not_found() {
    let app = router(Arc::new(AppState::new(Some(1))));
    let (st, v) = call(&app, Method::POST, "/sessions", Some(json!({ "scenario": "bridge" }))).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    assert_eq!(v["error"]["kind"], "unknown_scenario");
    assert_eq!(v["error"]["code"], 2);
    let (st, _) = call(&app, Method::GET, "/sessions/nope/log", None).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    let (st, _) = call(&app, Method::POST, "/sessions", Some(json!({}))).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn two_sessions_have_distinct_ids() {
    let app = router(Arc::new(AppState::new(Some(1))));
    assert_ne!(upload(&app).await, upload(&app).await);
}

#[tokio::test]
async fn evidence_revisions_and_rejections() {
    let app = router(Arc::new(AppState::new(Some(1))));
    let id = upload(&app).await;
    let ev = format!("/sessions/{id}/evidence");

    let (st, v) = call(&app, Method::POST, &ev, Some(json!({ "findings": [], "expected_revision": 0 }))).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(v["revision"], 0);

    let body = json!({ "findings": [{ "node": "E1", "state": "survive" }], "expected_revision": 0 });
    let (st, v) = call(&app, Method::POST, &ev, Some(body.clone())).await;
    assert_eq!(st, StatusCode::OK, "{v}");
    assert_eq!(v["revision"], 1);
    assert!((v["evidence_probability"].as_f64().unwrap() - 0.926).abs() < 1e-12);

    let (st, v) = call(&app, Method::POST, &ev, Some(body)).await;
    assert_eq!(st, StatusCode::CONFLICT);
    assert_eq!(v["error"]["kind"], "revision_conflict");

    let bad = json!({ "findings": [{ "node": "E1", "state": "fail" }], "expected_revision": 1 });
    let (st, v) = call(&app, Method::POST, &ev, Some(bad)).await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"]["code"], 3);
    assert!(v["error"]["message"].as_str().unwrap().contains("`E1`"));

    let (_, log) = call(&app, Method::GET, &format!("/sessions/{id}/log"), None).await;
    let log = log.as_array().unwrap();
    assert_eq!(log.len(), 2);
    assert_eq!(log[0]["event"], "created");
    assert_eq!(log[1]["event"], "evidence");
    assert!(log[1]["at_ms"].as_u64().is_some());
}

#[tokio::test]
async fn queries_carry_the_revision() {
    let app = router(Arc::new(AppState::new(Some(1))));
    let id = upload(&app).await;

    let (st, v) = call(&app, Method::GET, &format!("/sessions/{id}/timeline"), None).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(v["revision"], 0);
    assert!((v["result"]["rows"][1]["pf"].as_f64().unwrap() - 0.15458).abs() < 1e-12);

    let (_, v) = call(&app, Method::GET, &format!("/sessions/{id}/decision"), None).await;
    assert_eq!(v["result"]["optimal"], "strengthen");
    assert!((v["result"]["expected_utilities"][0].as_f64().unwrap() + 3091.6).abs() < 1e-9);

    let (_, v) = call(&app, Method::GET, &format!("/sessions/{id}/voi?sets=M"), None).await;
    assert!((v["result"][0]["voi"].as_f64().unwrap() - 129.28).abs() < 1e-9);

    let (st, v) = call(&app, Method::GET, &format!("/sessions/{id}/posterior?node=X"), None).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(v["result"]["probabilities"].as_array().unwrap().len(), 5);
    assert!(v["result"]["density"].is_object());

    let (st, v) = call(&app, Method::GET, &format!("/sessions/{id}/posterior?node=Z"), None).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    assert_eq!(v["error"]["kind"], "unknown_node");

    let body = json!({ "findings": [{ "node": "M", "state": "low" }], "expected_revision": 0 });
    call(&app, Method::POST, &format!("/sessions/{id}/evidence"), Some(body)).await;
    let (_, v) = call(&app, Method::GET, &format!("/sessions/{id}/posterior?node=Q"), None).await;
    assert_eq!(v["revision"], 1);
    // 0.3·0.8 / (0.3·0.8 + 0.7·0.3)
    assert!((v["result"]["probabilities"][0].as_f64().unwrap() - 0.24 / 0.45).abs() < 1e-12);
}

#[tokio::test]
async fn sessions_survive_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(Arc::new(AppState::open(dir.path(), Some(1)).await.unwrap()));
    let id = upload(&app).await;
    for (k, f) in [json!({ "node": "M", "state": "high" }), json!({ "node": "E1", "state": "survive" })]
        .into_iter()
        .enumerate()
    {
        let body = json!({ "findings": [f], "expected_revision": k });
        let (st, _) = call(&app, Method::POST, &format!("/sessions/{id}/evidence"), Some(body)).await;
        assert_eq!(st, StatusCode::OK);
    }
    let (_, before) = call(&app, Method::GET, &format!("/sessions/{id}/log"), None).await;
    let (_, d0) = call(&app, Method::GET, &format!("/sessions/{id}/decision"), None).await;

    let app = router(Arc::new(AppState::open(dir.path(), Some(1)).await.unwrap()));
    let (_, after) = call(&app, Method::GET, &format!("/sessions/{id}/log"), None).await;
    assert_eq!(before, after);
    let (_, d1) = call(&app, Method::GET, &format!("/sessions/{id}/decision"), None).await;
    assert_eq!(d0, d1);
    assert_eq!(d1["revision"], 2);
}

#[test]
fn sets_parse() {
    assert_eq!(parse_sets("M4;M5; M4 ,M5;"), vec![vec!["M4"], vec!["M5"], vec!["M4", "M5"]]);
    assert!(parse_sets("").is_empty());
}
