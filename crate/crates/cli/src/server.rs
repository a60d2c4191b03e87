//! HTTP endpoints over a live labeling session.

use std::sync::Arc;
use std::thread::JoinHandle;

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use battleship_core::dataset::DatasetSplit;
use battleship_core::selector::{ActiveLearner, LoopConfig};
use battleship_core::session::{LabelRequest, Rejection, Session, SessionOracle, Submission};
use serde::Deserialize;
use serde_json::json;

pub fn router(session: Arc<Session>) -> Router {
    Router::new()
        .route("/status", get(status))
        .route("/queue", get(queue))
        .route("/label", post(label))
        .route("/reports", get(reports))
        .route("/advance", post(advance))
        .with_state(session)
}

async fn status(State(session): State<Arc<Session>>) -> Response {
    Json(session.status()).into_response()
}

#[derive(Debug, Deserialize)]
struct QueueParams {
    limit: Option<usize>,
}

async fn queue(State(session): State<Arc<Session>>, Query(params): Query<QueueParams>) -> Response {
    Json(session.queue(params.limit)).into_response()
}

async fn label(State(session): State<Arc<Session>>, Json(request): Json<LabelRequest>) -> Response {
    match session.submit(&request) {
        Ok(Submission::Accepted) => Json(json!({"status": "accepted"})).into_response(),
        Ok(Submission::Duplicate) => Json(json!({"status": "duplicate"})).into_response(),
        Err(rejection) => {
            let code = match rejection {
                Rejection::Invalid(_) => StatusCode::BAD_REQUEST,
                Rejection::NotPending(_) | Rejection::Conflict { .. } => StatusCode::CONFLICT,
            };
            (code, Json(json!({"status": "rejected", "error": rejection.to_string()}))).into_response()
        }
    }
}

async fn reports(State(session): State<Arc<Session>>) -> Response {
    Json(session.reports()).into_response()
}

async fn advance(State(session): State<Arc<Session>>) -> Response {
    Json(json!({"advanced": session.advance()})).into_response()
}

/// Run the loop on its own thread, publishing each report to the session and
/// blocking at every labeling step until the annotator advances.
pub fn spawn_loop(
    config: LoopConfig,
    split: Arc<DatasetSplit>,
    session: Arc<Session>,
) -> JoinHandle<battleship_core::Result<()>> {
    std::thread::spawn(move || {
        let result = (|| {
            let mut learner = ActiveLearner::new(config, &split)?;
            session.publish(learner.start()?.clone());
            let mut oracle = SessionOracle(session.clone());
            for _ in 0..learner.config.iterations {
                match learner.step(&mut oracle)? {
                    Some(report) => session.publish(report.clone()),
                    None => break,
                }
                if learner.state.pool_exhausted {
                    break;
                }
            }
            Ok(())
        })();
        session.finish();
        result
    })
}
