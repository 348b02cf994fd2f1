use std::future::Future;
use std::io::{BufRead, Write};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{HarnessError, RunConfig};
use crate::reward::{RewardEngine, RewardScore, TaskKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardItem {
    pub rollout: String,
    pub gt: String,
    /// Overrides the command's default task for this item.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<TaskKind>,
}

/// The one scoring path shared by file mode and the endpoint.
pub fn score_items(engine: &RewardEngine, default_task: TaskKind, items: &[RewardItem]) -> Vec<RewardScore> {
    use rayon::prelude::*;
    items
        .par_iter()
        .map(|it| engine.score_rollout(it.task.unwrap_or(default_task), &it.rollout, &it.gt))
        .collect()
}

/// Scores one JSONL line. Bad input becomes an error object so the output
/// stays line-aligned with the input.
pub fn score_line(engine: &RewardEngine, task: Option<TaskKind>, line_no: usize, line: &str) -> serde_json::Value {
    if line.trim().is_empty() {
        return json!({"line": line_no, "error": "empty line"});
    }
    let item: RewardItem = match serde_json::from_str(line) {
        Ok(item) => item,
        Err(e) => return json!({"line": line_no, "error": e.to_string()}),
    };
    let Some(task) = item.task.or(task) else {
        return json!({"line": line_no, "error": "no task given on the line or the command"});
    };
    let score = &score_items(engine, task, std::slice::from_ref(&item))[0];
    serde_json::to_value(score).expect("scores serialize")
}

/// Line in, line out. Returns the number of error lines.
pub fn cmd_reward(config: &RunConfig, input: impl BufRead, mut output: impl Write) -> Result<usize, HarnessError> {
    let engine = RewardEngine::default().strict(config.strict_gating);
    let mut errors = 0;
    for (n, line) in input.lines().enumerate() {
        let line = line.map_err(|e| HarnessError::Input { path: "<input>".into(), message: e.to_string() })?;
        let v = score_line(&engine, config.task, n + 1, &line);
        if v.get("error").is_some() {
            errors += 1;
        }
        writeln!(output, "{v}").map_err(|e| HarnessError::Internal(format!("writing output: {e}")))?;
    }
    output.flush().map_err(|e| HarnessError::Internal(format!("writing output: {e}")))?;
    Ok(errors)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreRequest {
    #[serde(default)]
    pub task: Option<TaskKind>,
    pub items: Vec<RewardItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub scores: Vec<RewardScore>,
}

#[derive(Clone)]
pub struct ServeState {
    pub engine: Arc<RewardEngine>,
    pub default_task: Option<TaskKind>,
    pub payload_cap_bytes: usize,
}

impl ServeState {
    pub fn from_config(config: &RunConfig) -> Self {
        ServeState {
            engine: Arc::new(RewardEngine::default().strict(config.strict_gating)),
            default_task: config.task,
            payload_cap_bytes: config.serve.payload_cap_bytes,
        }
    }
}

fn bad_request(path: &str, message: String) -> Response {
    (StatusCode::BAD_REQUEST, Json(json!({"error": message, "path": path}))).into_response()
}

async fn score(State(state): State<ServeState>, body: Bytes) -> Response {
    if body.len() > state.payload_cap_bytes {
        return (StatusCode::PAYLOAD_TOO_LARGE, Json(json!({"error": "payload too large"}))).into_response();
    }
    let de = &mut serde_json::Deserializer::from_slice(&body);
    let req: ScoreRequest = match serde_path_to_error::deserialize(de) {
        Ok(r) => r,
        Err(e) => {
            let path = e.path().to_string();
            return bad_request(&path, e.into_inner().to_string());
        }
    };
    let default_task = req.task.or(state.default_task);
    if let Some(i) = req.items.iter().position(|it| it.task.or(default_task).is_none()) {
        return bad_request(&format!("items[{i}].task"), "no task given on the item, request or server".into());
    }
    let engine = state.engine.clone();
    // the fallback task is never used: every item resolved one above
    let fallback = default_task.unwrap_or(TaskKind::Seal);
    let scored = tokio::task::spawn_blocking(move || score_items(&engine, fallback, &req.items)).await;
    match scored {
        Ok(scores) => Json(ScoreResponse { scores }).into_response(),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, Json(json!({"error": e.to_string()}))).into_response(),
    }
}

async fn health() -> &'static str {
    "ok"
}

pub fn router(state: ServeState) -> Router {
    // the handler enforces the cap itself; axum's limit sits just above it so
    // the body is still buffered and the 413 comes from one place
    let limit = state.payload_cap_bytes.saturating_add(1);
    Router::new()
        .route("/score", post(score))
        .route("/health", get(health))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}

/// Serves until `shutdown` resolves.
pub async fn serve_on(
    listener: tokio::net::TcpListener,
    state: ServeState,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
    log::info!("shutting down");
}

/// Blocking entry point for the `serve` command.
pub fn serve(config: &RunConfig) -> Result<(), HarnessError> {
    config.validate_serve()?;
    let state = ServeState::from_config(config);
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| HarnessError::Internal(format!("runtime: {e}")))?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&config.serve.addr)
            .await
            .map_err(|e| HarnessError::Config(format!("serve.addr: cannot bind {}: {e}", config.serve.addr)))?;
        let addr = listener.local_addr().map_err(|e| HarnessError::Internal(e.to_string()))?;
        log::info!("listening on http://{addr}");
        eprintln!("listening on http://{addr}");
        serve_on(listener, state, shutdown_signal()).await.map_err(|e| HarnessError::Internal(e.to_string()))
    })
}
