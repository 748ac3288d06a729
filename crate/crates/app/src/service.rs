use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use lore_core::pipeline::{answer_question, PipelineConfig, PipelineError, Retrievers};
use lore_core::reader::Reader;
use serde::Deserialize;
use serde_json::json;

pub struct AppState {
    pub retrievers: Retrievers,
    pub reader: Box<dyn Reader>,
    pub pipeline: PipelineConfig,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AskRequest {
    question: String,
    top_k: Option<usize>,
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/ask", post(ask))
        .route("/healthz", get(healthz))
        .with_state(state)
}

async fn healthz() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

async fn ask(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let request: AskRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("malformed body: {e}")),
    };
    if request.question.trim().is_empty() {
        return error(StatusCode::BAD_REQUEST, "question must not be empty");
    }
    let mut config = state.pipeline.clone();
    if let Some(k) = request.top_k {
        if k == 0 {
            return error(StatusCode::BAD_REQUEST, "top_k must be >= 1");
        }
        config.top_k = k;
        config.retrieval_depth = config.retrieval_depth.max(k);
    }

    let worker = Arc::clone(&state);
    let question = request.question;
    let outcome = tokio::task::spawn_blocking(move || {
        answer_question(&question, &config, &worker.retrievers, worker.reader.as_ref())
    })
    .await;

    match outcome {
        Ok(Ok(trace)) => {
            let contexts: Vec<_> = trace
                .fused
                .iter()
                .map(|f| json!({"passage_id": f.passage_id, "rrf_score": f.rrf_score, "context_rank": f.context_rank}))
                .collect();
            Json(json!({
                "answer": trace.selected.text,
                "passage_id": trace.selected.passage_id,
                "lor_score": trace.selected.lor_score,
                "mean_score": trace.selected.mean_score,
                "context_rank": trace.selected.context_rank,
                "contexts": contexts,
            }))
            .into_response()
        }
        Ok(Err(PipelineError::NoEvidence)) => error(StatusCode::UNPROCESSABLE_ENTITY, "no evidence for question"),
        Ok(Err(e)) if e.is_reader_unavailable() => error(StatusCode::SERVICE_UNAVAILABLE, e.to_string()),
        Ok(Err(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, format!("worker panicked: {e}")),
    }
}

pub async fn serve(state: AppState, port: u16) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(("127.0.0.1", port)).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(state)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
