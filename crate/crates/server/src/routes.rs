//! Request handlers under `/api/v1`.

use std::convert::Infallible;
use std::str::FromStr;

use axum::extract::{Path, Query, Request, State};
use axum::http::header::AUTHORIZATION;
use axum::http::StatusCode;
use axum::middleware::Next;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::Json;
use ctt_core::codegraph::{Change, NodeId, NodeKind, NodeStats};
use ctt_core::coverage::{criticality, CoverageReport};
use ctt_core::orchestrator::{CycleReport, EngineNotice, PendingChange, Suggestion, SuggestionId, SuggestionStatus, Verdict};
use ctt_core::time::Timestamp;
use futures_util::stream::{self, Stream};
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast::error::RecvError;

use crate::error::ApiError;
use crate::state::App;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusCounts {
    pub pending: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub superseded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub version: u64,
    pub last_seq: u64,
    pub nodes: usize,
    pub edges: usize,
    pub source_nodes: usize,
    pub test_nodes: usize,
    pub suggestions: StatusCounts,
    pub model_calls: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDetail {
    pub id: NodeId,
    pub path: String,
    pub kind: NodeKind,
    pub line_count: u32,
    pub content_hash: String,
    pub stats: NodeStats,
    pub cursor_line: Option<u32>,
    pub last_edit_line: Option<u32>,
    pub last_test_failed: Option<bool>,
    pub degree: usize,
    pub centrality: f64,
    pub criticality: f64,
    /// Nodes this file imports.
    pub imports: Vec<NodeId>,
    pub imported_by: Vec<NodeId>,
    /// References that resolved to no file.
    pub unresolved: Vec<String>,
    pub suggestions: Vec<SuggestionId>,
    pub text: String,
}

/// Body of `POST /changes`: a path plus a change in the event-log shape.
#[derive(Debug, Clone, Deserialize)]
pub struct ChangeRequest {
    pub path: String,
    /// Defaults to the engine clock.
    #[serde(default)]
    pub at: Option<Timestamp>,
    #[serde(flatten)]
    pub change: Change,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReviewResponse {
    pub suggestion: Suggestion,
    pub event: Option<ctt_core::codegraph::ChangeEvent>,
    /// The cycle run right after the review.
    pub cycle: CycleReport,
}

/// One server-sent event. `seq` counts from 1 on every connection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiEvent {
    pub seq: u64,
    pub kind: String,
    pub payload: serde_json::Value,
}

impl ApiEvent {
    pub fn new(seq: u64, notice: &EngineNotice) -> Self {
        let payload = match serde_json::to_value(notice) {
            Ok(serde_json::Value::Object(mut map)) => map.remove("payload").unwrap_or_default(),
            _ => serde_json::Value::Null,
        };
        ApiEvent {
            seq,
            kind: notice.kind().to_string(),
            payload,
        }
    }
}

#[derive(Debug, Deserialize)]
pub struct StatusFilter {
    pub status: Option<String>,
}

pub async fn require_token(State(app): State<App>, request: Request, next: Next) -> Response {
    let Some(token) = app.token() else {
        return next.run(request).await;
    };
    let from_header = request
        .headers()
        .get(AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .is_some_and(|t| t == token);
    // EventSource cannot set headers, so the stream also takes `?token=`.
    let from_query = request
        .uri()
        .query()
        .is_some_and(|q| q.split('&').any(|kv| kv.strip_prefix("token=") == Some(token)));
    if from_header || from_query {
        next.run(request).await
    } else {
        ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or wrong bearer token").into_response()
    }
}

pub async fn graph_summary(State(app): State<App>) -> Json<GraphSummary> {
    let snap = app.snapshot();
    let count = |s| snap.suggestions.iter().filter(|x| x.status == s).count();
    let graph = &snap.graph;
    let test_nodes = graph.nodes().filter(|n| n.kind == NodeKind::Test).count();
    Json(GraphSummary {
        version: graph.version(),
        last_seq: graph.last_seq(),
        nodes: graph.len(),
        edges: graph.edge_count(),
        source_nodes: graph.len() - test_nodes,
        test_nodes,
        suggestions: StatusCounts {
            pending: count(SuggestionStatus::Pending),
            accepted: count(SuggestionStatus::Accepted),
            rejected: count(SuggestionStatus::Rejected),
            superseded: count(SuggestionStatus::Superseded),
        },
        model_calls: snap.model_calls,
    })
}

fn parse_node_id(raw: &str) -> Result<NodeId, ApiError> {
    raw.strip_prefix('#')
        .unwrap_or(raw)
        .parse()
        .map(NodeId)
        .map_err(|_| ApiError::bad_request(format!("invalid node id {raw:?}")))
}

pub async fn node_detail(State(app): State<App>, Path(raw): Path<String>) -> Result<Json<NodeDetail>, ApiError> {
    let id = parse_node_id(&raw)?;
    let snap = app.snapshot();
    let graph = &snap.graph;
    let node = graph.node(id).ok_or_else(|| ApiError::not_found(format!("node {id} not found")))?;
    Ok(Json(NodeDetail {
        id,
        path: node.path.clone(),
        kind: node.kind,
        line_count: node.line_count,
        content_hash: format!("{:016x}", node.content_hash),
        stats: node.stats.clone(),
        cursor_line: node.cursor_line,
        last_edit_line: node.last_edit_line,
        last_test_failed: node.last_test_failed,
        degree: graph.degree(id),
        centrality: graph.centrality(id)?,
        criticality: criticality(graph, id, snap.now, snap.edit_window_ms)?,
        imports: graph.successors(id).collect(),
        imported_by: graph.predecessors(id).collect(),
        unresolved: node
            .deps
            .iter()
            .filter(|(_, target)| target.is_none())
            .map(|(name, _)| name.clone())
            .collect(),
        suggestions: snap
            .suggestions
            .iter()
            .filter(|s| s.draft.path == node.path)
            .map(|s| s.id)
            .collect(),
        text: node.text.clone(),
    }))
}

pub async fn list_suggestions(
    State(app): State<App>,
    Query(filter): Query<StatusFilter>,
) -> Result<Json<Vec<Suggestion>>, ApiError> {
    let status = match filter.status.as_deref() {
        None | Some("") | Some("all") => None,
        Some(s) => Some(SuggestionStatus::from_str(s).map_err(|_| ApiError::bad_request(format!("unknown status {s:?}")))?),
    };
    let snap = app.snapshot();
    Ok(Json(
        snap.suggestions
            .iter()
            .filter(|s| status.is_none_or(|want| s.status == want))
            .cloned()
            .collect(),
    ))
}

fn parse_suggestion_id(raw: &str) -> Result<SuggestionId, ApiError> {
    raw.parse()
        .map_err(|_| ApiError::not_found(format!("suggestion {raw} not found")))
}

pub async fn get_suggestion(State(app): State<App>, Path(raw): Path<String>) -> Result<Json<Suggestion>, ApiError> {
    let id = parse_suggestion_id(&raw)?;
    app.snapshot()
        .suggestions
        .iter()
        .find(|s| s.id == id)
        .cloned()
        .map(Json)
        .ok_or_else(|| ApiError::not_found(format!("suggestion {raw} not found")))
}

async fn review(app: App, raw: String, verdict: Verdict) -> Result<Json<ReviewResponse>, ApiError> {
    let id = parse_suggestion_id(&raw)?;
    let response = app
        .mutate(move |engine| {
            let outcome = engine.review(id, verdict)?;
            // An accepted patch re-triggers its file; run that now.
            let cycle = engine.run_cycle()?;
            Ok(ReviewResponse {
                suggestion: outcome.suggestion,
                event: outcome.event,
                cycle,
            })
        })
        .await?;
    Ok(Json(response))
}

pub async fn accept(State(app): State<App>, Path(raw): Path<String>) -> Result<Json<ReviewResponse>, ApiError> {
    review(app, raw, Verdict::Accept).await
}

pub async fn reject(State(app): State<App>, Path(raw): Path<String>) -> Result<Json<ReviewResponse>, ApiError> {
    review(app, raw, Verdict::Reject).await
}

pub async fn coverage(State(app): State<App>) -> Result<Json<CoverageReport>, ApiError> {
    app.snapshot()
        .coverage
        .clone()
        .map(Json)
        .ok_or_else(|| ApiError::internal("coverage unavailable"))
}

/// Injects one change and runs a cycle over it. Meant for tests and
/// scripted demos; the working tree is not touched.
pub async fn inject_change(
    State(app): State<App>,
    Json(request): Json<ChangeRequest>,
) -> Result<Json<CycleReport>, ApiError> {
    if request.path.is_empty() && !matches!(request.change, Change::TestResult { .. }) {
        return Err(ApiError::bad_request("path must not be empty"));
    }
    let report = app
        .mutate(move |engine| {
            let at = request.at.unwrap_or_else(|| engine.clock().now());
            engine.submit(PendingChange {
                at,
                path: request.path,
                change: request.change,
            });
            engine.run_cycle()
        })
        .await?;
    Ok(Json(report))
}

pub async fn events(State(app): State<App>) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    let rx = app.subscribe();
    let stream = stream::unfold((rx, 0u64), |(mut rx, seq)| async move {
        loop {
            match rx.recv().await {
                Ok(notice) => {
                    let seq = seq + 1;
                    let api = ApiEvent::new(seq, &notice);
                    let event = Event::default()
                        .id(seq.to_string())
                        .event(api.kind.clone())
                        .json_data(&api)
                        .unwrap_or_else(|_| Event::default().comment("unserializable notice"));
                    return Some((Ok(event), (rx, seq)));
                }
                Err(RecvError::Lagged(n)) => tracing::warn!("event stream fell {n} notices behind"),
                Err(RecvError::Closed) => return None,
            }
        }
    });
    Sse::new(stream).keep_alive(KeepAlive::default())
}

pub async fn fallback() -> ApiError {
    ApiError::not_found("no such endpoint")
}

