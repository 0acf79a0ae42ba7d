use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use seqlod_core::Config;
use seqlod_server::{router, Engine};

const EVENTS: &str = "record_id,event_type,timestamp\n\
    p1,A,2021-03-01T08:00:00Z\np1,B,2021-03-01T09:00:00Z\n\
    p2,A,2021-03-02T08:00:00Z\np2,B,2021-03-02T09:00:00Z\n\
    p3,B,2021-03-03T08:00:00Z\np3,A,2021-03-03T09:00:00Z\np3,B,2021-03-03T10:00:00Z\n\
    p4,C,2021-04-01T08:00:00Z\np4,D,2021-04-01T09:00:00Z\n\
    p5,C,2021-04-02T08:00:00Z\np5,C,2021-04-02T09:00:00Z\np5,D,2021-04-02T10:00:00Z\n\
    p6,D,2021-05-01T08:00:00Z\n";
const ATTRS: &str = "record_id,age,gender\np1,34,F\np2,71,M\np3,5,F\np4,45,M\np5,52,F\np6,19,M\n";

async fn call(app: &Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    let (s, b) = call(app, Request::get(uri).body(Body::empty()).unwrap()).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

async fn post_json(app: &Router, uri: &str, body: Value) -> (StatusCode, Value) {
    let req = Request::post(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let (s, b) = call(app, req).await;
    (s, serde_json::from_slice(&b).unwrap())
}

fn multipart(events: &str, attrs: Option<&str>) -> Request<Body> {
    let boundary = "XBOUNDARYX";
    let mut body = String::new();
    let mut part = |name: &str, content: &str| {
        body.push_str(&format!(
            "--{boundary}\r\nContent-Disposition: form-data; name=\"{name}\"; filename=\"{name}.csv\"\r\nContent-Type: text/csv\r\n\r\n{content}\r\n"
        ));
    };
    part("events", events);
    if let Some(a) = attrs {
        part("attributes", a);
    }
    body.push_str(&format!("--{boundary}--\r\n"));
    Request::post("/datasets")
        .header("content-type", format!("multipart/form-data; boundary={boundary}"))
        .body(Body::from(body))
        .unwrap()
}

async fn wait_ready(app: &Router, id: &str) -> Value {
    for _ in 0..500 {
        let (_, s) = get(app, &format!("/datasets/{id}/status")).await;
        if s["status"] != "building" {
            return s;
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    panic!("build did not finish");
}

async fn ready_app() -> (Router, String) {
    let app = router(Arc::new(Engine::new(Config::default(), None)));
    let (status, bytes) = call(&app, multipart(EVENTS, Some(ATTRS))).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let body: Value = serde_json::from_slice(&bytes).unwrap();
    let id = body["dataset_id"].as_str().unwrap().to_owned();
    assert_eq!(body["api_version"], seqlod_server::API_VERSION);
    let status = wait_ready(&app, &id).await;
    assert_eq!(status["status"], "ready", "{status}");
    (app, id)
}

#[tokio::test(flavor = "multi_thread")]
async fn upload_and_overview() {
    let (app, id) = ready_app().await;
    let (s, status) = get(&app, &format!("/datasets/{id}/status")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(status["n_records"], 6);
    assert_eq!(status["n_sequences"], 5);

    let (s, o) = get(&app, &format!("/datasets/{id}/overview?k=2&itau=0.6")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(o["k"], 2);
    assert_eq!(o["clusters"].as_array().unwrap().len(), 2);
    let share: f64 = o["clusters"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["record_share"].as_f64().unwrap())
        .sum();
    assert!((share - 1.0).abs() < 1e-9);
    assert_eq!(o["event_types"], json!(["A", "B", "C", "D"]));

    // default k is the top recommendation
    let (_, rec) = get(&app, &format!("/datasets/{id}/recommendations")).await;
    let (_, default) = get(&app, &format!("/datasets/{id}/overview")).await;
    assert_eq!(default["k"], rec["recommendations"][0]["k"]);

    // same upload again is the same dataset
    let (status, bytes) = call(&app, multipart(EVENTS, Some(ATTRS))).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let again: Value = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(again["dataset_id"], id.as_str());
    assert_eq!(again["status"], "ready");
}

#[tokio::test(flavor = "multi_thread")]
async fn error_codes() {
    let (app, id) = ready_app().await;
    let (s, e) = get(&app, &format!("/datasets/{id}/overview?k=0")).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(e["error"]["code"], "KOutOfRange");
    assert_eq!(e["api_version"], seqlod_server::API_VERSION);
    let (s, e) = get(&app, &format!("/datasets/{id}/overview?k=6")).await;
    assert_eq!((s, e["error"]["code"].as_str()), (StatusCode::BAD_REQUEST, Some("KOutOfRange")));
    let (s, e) = get(&app, &format!("/datasets/{id}/overview?k=2&itau=1.5")).await;
    assert_eq!((s, e["error"]["code"].as_str()), (StatusCode::BAD_REQUEST, Some("BadThreshold")));
    let (s, _) = get(&app, "/datasets/nope/overview?k=2").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = get(&app, &format!("/datasets/{id}/overview?k=2&filters_sig=abc")).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, e) = get(&app, &format!("/datasets/{id}/overview?frontier=0,1")).await;
    assert_eq!((s, e["error"]["code"].as_str()), (StatusCode::BAD_REQUEST, Some("InvalidFrontier")));
    let (s, e) = post_json(&app, &format!("/datasets/{id}/frontier/split"), json!({"k": 5, "node": 0})).await;
    assert_eq!((s, e["error"]["code"].as_str()), (StatusCode::BAD_REQUEST, Some("LeafNotSplittable")));
    let (s, _) = get(&app, &format!("/datasets/{id}/unique/S99/records")).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread")]
async fn building_dataset_answers_409() {
    let engine = Arc::new(Engine::new(Config::default(), None));
    let (ds, _) = engine.register(EVENTS.as_bytes().to_vec(), None).unwrap();
    ds.begin(&[]);
    let app = router(engine);
    let (s, e) = get(&app, &format!("/datasets/{}/overview?k=2", ds.id)).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(e["error"]["code"], "Building");
}

#[tokio::test(flavor = "multi_thread")]
async fn filters_rebuild_and_keep_only_matching_records() {
    let (app, id) = ready_app().await;
    let filter = json!({"filters": [{"kind": "event_occurrence", "op": "=", "value": "C"}]});
    let (s, created) = post_json(&app, &format!("/datasets/{id}/filters"), filter.clone()).await;
    assert!(s == StatusCode::ACCEPTED || s == StatusCode::OK);
    let sig = created["filter_signature"].as_str().unwrap().to_owned();
    let mut overview = Value::Null;
    for _ in 0..500 {
        let (s, o) = get(&app, &format!("/datasets/{id}/overview?k=1&filters_sig={sig}")).await;
        if s == StatusCode::OK {
            overview = o;
            break;
        }
        assert_eq!(s, StatusCode::CONFLICT);
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    assert_eq!(overview["total_records"], 2);
    let (_, again) = post_json(&app, &format!("/datasets/{id}/filters"), filter).await;
    assert_eq!(again["filter_signature"], sig.as_str());
    assert_eq!(again["status"], "ready");

    let bad = json!({"filters": [{"kind": "attribute", "attribute": "gender", "op": "<", "value": "F"}]});
    let (s, e) = post_json(&app, &format!("/datasets/{id}/filters"), bad).await;
    assert_eq!((s, e["error"]["code"].as_str()), (StatusCode::BAD_REQUEST, Some("TypeMismatch")));
    let empty = json!({"filters": [{"kind": "year", "op": "=", "value": 1990}]});
    let (_, created) = post_json(&app, &format!("/datasets/{id}/filters"), empty).await;
    let sig = created["filter_signature"].as_str().unwrap().to_owned();
    for _ in 0..500 {
        let (s, e) = get(&app, &format!("/datasets/{id}/overview?k=1&filters_sig={sig}")).await;
        if s != StatusCode::CONFLICT {
            assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
            assert!(e["error"]["message"].as_str().unwrap().contains("no records"));
            return;
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    panic!("empty filter build did not finish");
}

#[tokio::test(flavor = "multi_thread")]
async fn split_drill_down_and_charts() {
    let (app, id) = ready_app().await;
    let (_, o) = get(&app, &format!("/datasets/{id}/overview?k=2")).await;
    let node = o["clusters"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["rows"].as_array().unwrap().len() > 1)
        .unwrap()["node_id"]
        .as_u64()
        .unwrap();
    let (s, split) = post_json(&app, &format!("/datasets/{id}/frontier/split"), json!({"k": 2, "node": node})).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(split["k"], 3);
    let frontier: Vec<String> = split["frontier"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.to_string())
        .collect();
    let (s, o3) = get(&app, &format!("/datasets/{id}/overview?frontier={}", frontier.join(","))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(o3["clusters"].as_array().unwrap().len(), 3);

    let (s, seqs) = get(&app, &format!("/datasets/{id}/clusters/{node}/unique-sequences?sort=frequency&anchors=A")).await;
    assert_eq!(s, StatusCode::OK);
    let listed = seqs["sequences"].as_array().unwrap();
    let total: u64 = listed.iter().map(|u| u["frequency"].as_u64().unwrap()).sum();
    assert_eq!(total, seqs["record_count"].as_u64().unwrap());
    assert!(listed.iter().all(|u| u["anchor"].is_object()));

    let label = listed[0]["label"].as_str().unwrap();
    let freq = listed[0]["frequency"].as_u64().unwrap();
    let (s, recs) = get(&app, &format!("/datasets/{id}/unique/{label}/records?attrs=age")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(recs["records"].as_array().unwrap().len() as u64, freq);
    assert!(recs["records"][0]["attributes"].get("gender").is_none());

    let (s, chart) = get(&app, &format!("/datasets/{id}/aggregate?chart=cluster&attribute=gender&k=2")).await;
    assert_eq!(s, StatusCode::OK);
    let sum: u64 = chart["series"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|s| s["counts"].as_array().unwrap().iter().map(|c| c.as_u64().unwrap()))
        .sum();
    assert_eq!(sum, 6);
    let (s, chart) = get(&app, &format!("/datasets/{id}/aggregate?chart=selected_data&attribute=age&scope={node}")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(chart["series"][0]["total"].as_u64().unwrap() + chart["series"][1]["total"].as_u64().unwrap(), 6);
    let (s, chart) = get(&app, &format!("/datasets/{id}/aggregate?chart=sequence&attribute=age&scope=S1,S2")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(chart["series"].as_array().unwrap().len(), 2);
    let (s, _) = get(&app, &format!("/datasets/{id}/aggregate?chart=pie&attribute=age")).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, e) = get(&app, &format!("/datasets/{id}/aggregate?chart=cluster&attribute=height&k=2")).await;
    assert_eq!((s, e["error"]["code"].as_str()), (StatusCode::BAD_REQUEST, Some("UnknownAttribute")));
}

#[tokio::test(flavor = "multi_thread")]
async fn silhouette_csv_export() {
    let (app, id) = ready_app().await;
    let (s, body) = call(&app, Request::get(format!("/datasets/{id}/silhouette.csv")).body(Body::empty()).unwrap()).await;
    assert_eq!(s, StatusCode::OK);
    let text = String::from_utf8(body).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("k,avg_silhouette_width"));
    assert_eq!(lines.count(), 3);
}

#[tokio::test(flavor = "multi_thread")]
async fn repeated_requests_are_byte_identical() {
    let (app, id) = ready_app().await;
    let uri = format!("/datasets/{id}/overview?k=3&itau=0.4&order=frequency");
    let (_, first) = call(&app, Request::get(&uri).body(Body::empty()).unwrap()).await;
    for _ in 0..5 {
        let (_, again) = call(&app, Request::get(&uri).body(Body::empty()).unwrap()).await;
        assert_eq!(first, again);
    }
}
