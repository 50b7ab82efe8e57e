//! HTTP and server-sent-events API over a running engine.
//!
//! All routes live under `/api/v1`. Reads are served from the snapshot
//! published after the last mutation; accept, reject and injected changes
//! go through the engine one at a time and each runs a cycle before it
//! returns. `GET /api/v1/events` streams engine notices, numbered per
//! connection.

mod error;
pub mod routes;
mod state;

use std::future::Future;
use std::net::SocketAddr;

use axum::routing::{get, post};
use axum::Router;
use tokio::net::TcpListener;

pub use error::{ApiError, StartupError};
pub use routes::{ApiEvent, ChangeRequest, GraphSummary, NodeDetail, StatusCounts};
pub use state::{App, Snapshot};

/// Builds the `/api/v1` router over `app`.
pub fn router(app: App) -> Router {
    let api = Router::new()
        .route("/graph/summary", get(routes::graph_summary))
        .route("/nodes/{id}", get(routes::node_detail))
        .route("/suggestions", get(routes::list_suggestions))
        .route("/suggestions/{id}", get(routes::get_suggestion))
        .route("/suggestions/{id}/accept", post(routes::accept))
        .route("/suggestions/{id}/reject", post(routes::reject))
        .route("/coverage", get(routes::coverage))
        .route("/changes", post(routes::inject_change))
        .route("/events", get(routes::events))
        .fallback(routes::fallback)
        .layer(axum::middleware::from_fn_with_state(app.clone(), routes::require_token));
    Router::new()
        .nest("/api/v1", api)
        .fallback(routes::fallback)
        .with_state(app)
}

/// A bound but not yet running HTTP service.
pub struct Server {
    listener: TcpListener,
    app: App,
}

impl Server {
    /// Binds `addr`; a busy port is a [`StartupError::Bind`].
    pub async fn bind(addr: SocketAddr, app: App) -> Result<Self, StartupError> {
        let listener = TcpListener::bind(addr)
            .await
            .map_err(|source| StartupError::Bind { addr, source })?;
        Ok(Server { listener, app })
    }

    pub fn local_addr(&self) -> Result<SocketAddr, StartupError> {
        self.listener.local_addr().map_err(StartupError::Serve)
    }

    /// Serves until `shutdown` resolves, then flushes the engine's logs.
    pub async fn run(self, shutdown: impl Future<Output = ()> + Send + 'static) -> Result<(), StartupError> {
        let app = self.app.clone();
        axum::serve(self.listener, router(self.app))
            .with_graceful_shutdown(shutdown)
            .await
            .map_err(StartupError::Serve)?;
        tokio::task::spawn_blocking(move || app.flush())
            .await
            .map_err(|e| StartupError::Serve(std::io::Error::other(e)))?
            .map_err(|e| StartupError::Serve(std::io::Error::other(e.message)))?;
        Ok(())
    }
}
