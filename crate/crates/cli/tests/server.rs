use std::collections::HashMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use battleship_cli::server::{router, spawn_loop};
use battleship_core::dataset::{DatasetSplit, Label};
use battleship_core::matcher::MatcherConfig;
use battleship_core::selector::LoopConfig;
use battleship_core::session::{QueueItem, Session, SessionStatus};
use battleship_core::synth::{generate, SynthConfig};
use battleship_core::{IterationReport, OracleMode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

const BUDGET: usize = 10;

fn config() -> LoopConfig {
    LoopConfig {
        budget: BUDGET,
        iterations: 2,
        q: 5,
        seed_positives: 10,
        seed_negatives: 10,
        oracle: OracleMode::Human,
        matcher: MatcherConfig {
            feature_space_size: 1 << 12,
            hidden_dim: 8,
            epochs: 3,
            ..MatcherConfig::default()
        },
        ..LoopConfig::default()
    }
}

fn split() -> Arc<DatasetSplit> {
    let pairs = generate(&SynthConfig {
        n_pairs: 400,
        positive_rate: 0.2,
        seed: 11,
        ..SynthConfig::default()
    });
    Arc::new(DatasetSplit::from_pairs(pairs, None, 11).unwrap())
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let request = Request::builder().method(method).uri(uri);
    let request = match body {
        Some(b) => request
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => request.body(Body::empty()).unwrap(),
    };
    let response = app.clone().oneshot(request).await.unwrap();
    let status = response.status();
    let bytes = response.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or(Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, value)
}

async fn wait_for_batch(app: &Router) -> SessionStatus {
    let start = Instant::now();
    loop {
        let (code, body) = call(app, "GET", "/status", None).await;
        assert_eq!(code, StatusCode::OK);
        let status: SessionStatus = serde_json::from_value(body).unwrap();
        if status.pending > 0 || !status.running {
            return status;
        }
        assert!(start.elapsed() < Duration::from_secs(120), "no batch appeared");
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
}

async fn label_all(app: &Router, truth: &HashMap<String, Label>) -> Vec<String> {
    let (_, body) = call(app, "GET", "/queue", None).await;
    let queue: Vec<QueueItem> = serde_json::from_value(body).unwrap();
    for item in &queue {
        let label = truth[&item.pair_id];
        let (code, body) = call(
            app,
            "POST",
            "/label",
            Some(json!({"pair_id": item.pair_id, "label": label, "annotator_id": "a1"})),
        )
        .await;
        assert_eq!(code, StatusCode::OK, "{body}");
        assert_eq!(body["status"], "accepted");
    }
    queue.into_iter().map(|q| q.pair_id).collect()
}

#[tokio::test(flavor = "multi_thread")]
async fn full_session_over_http() {
    let split = split();
    let truth: HashMap<String, Label> = split
        .train_pool
        .iter()
        .map(|p| (p.pair_id.clone(), p.ground_truth.unwrap()))
        .collect();
    let session = Session::new(&split.train_pool, None).unwrap();
    let app = router(session.clone());
    let worker = spawn_loop(config(), split.clone(), session.clone());

    let status = wait_for_batch(&app).await;
    assert!(status.running);
    assert_eq!(status.pending, BUDGET);
    assert_eq!(status.total_labels, 20);

    // queue honours the limit and never exceeds the budget
    let (_, body) = call(&app, "GET", "/queue?limit=3", None).await;
    assert_eq!(body.as_array().unwrap().len(), 3);
    let (_, body) = call(&app, "GET", "/queue", None).await;
    let queue: Vec<QueueItem> = serde_json::from_value(body).unwrap();
    assert_eq!(queue.len(), BUDGET);
    assert!(queue[0].text.starts_with("[CLS] "));

    // advancing early is refused
    let (_, body) = call(&app, "POST", "/advance", None).await;
    assert_eq!(body["advanced"], false);

    let first = &queue[0].pair_id;
    let label = truth[first];
    let (code, _) = call(&app, "POST", "/label", Some(json!({"pair_id": first, "label": label, "annotator_id": "a1"}))).await;
    assert_eq!(code, StatusCode::OK);
    let (code, body) = call(&app, "POST", "/label", Some(json!({"pair_id": first, "label": label, "annotator_id": "a2"}))).await;
    assert_eq!(code, StatusCode::OK);
    assert_eq!(body["status"], "duplicate");
    let (code, _) = call(&app, "POST", "/label", Some(json!({"pair_id": first, "label": 1 - label, "annotator_id": "a2"}))).await;
    assert_eq!(code, StatusCode::CONFLICT);
    let (code, _) = call(&app, "POST", "/label", Some(json!({"pair_id": "no-such-pair", "label": 1, "annotator_id": "a1"}))).await;
    assert_eq!(code, StatusCode::CONFLICT);
    let (code, _) = call(&app, "POST", "/label", Some(json!({"pair_id": queue[1].pair_id, "label": 2, "annotator_id": "a1"}))).await;
    assert_eq!(code, StatusCode::BAD_REQUEST);

    let (_, body) = call(&app, "GET", "/status", None).await;
    assert_eq!(body["pending"], BUDGET - 1);
    assert_eq!(body["labeled_this_iteration"], 1);

    let mut labeled = vec![first.clone()];
    labeled.extend(label_all(&app, &truth).await);
    let (_, body) = call(&app, "POST", "/advance", None).await;
    assert_eq!(body["advanced"], true);

    // second iteration
    let status = wait_for_batch(&app).await;
    assert!(status.running);
    assert_eq!(status.total_labels, 20 + BUDGET);
    let second = label_all(&app, &truth).await;
    assert_eq!(second.len(), BUDGET);
    assert!(second.iter().all(|id| !labeled.contains(id)));
    let (_, body) = call(&app, "POST", "/advance", None).await;
    assert_eq!(body["advanced"], true);

    tokio::task::spawn_blocking(move || worker.join().unwrap()).await.unwrap().unwrap();
    let (_, body) = call(&app, "GET", "/status", None).await;
    assert_eq!(body["running"], false);
    assert_eq!(body["pending"], 0);
    let (code, body) = call(&app, "GET", "/reports", None).await;
    assert_eq!(code, StatusCode::OK);
    let reports: Vec<IterationReport> = serde_json::from_value(body).unwrap();
    assert_eq!(reports.iter().map(|r| r.labels_used).collect::<Vec<_>>(), vec![20, 30, 40]);
    assert_eq!(reports[1].oracle_calls, BUDGET);
}

#[tokio::test]
async fn idle_session_has_empty_queue() {
    let split = split();
    let session = Session::new(&split.train_pool, None).unwrap();
    let app = router(session);
    let (code, body) = call(&app, "GET", "/queue", None).await;
    assert_eq!(code, StatusCode::OK);
    assert_eq!(body, json!([]));
    let (code, _) = call(&app, "POST", "/label", Some(json!({"pair_id": split.train_pool[0].pair_id, "label": 1, "annotator_id": "a"}))).await;
    assert_eq!(code, StatusCode::CONFLICT);
    let (_, body) = call(&app, "POST", "/advance", None).await;
    assert_eq!(body["advanced"], false);
    let (_, body) = call(&app, "GET", "/reports", None).await;
    assert_eq!(body, json!([]));
}
