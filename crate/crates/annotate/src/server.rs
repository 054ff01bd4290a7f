use std::net::{SocketAddr, TcpListener};
use std::sync::Arc;
use std::thread::JoinHandle;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use tokio::sync::oneshot;
use tower_http::cors::CorsLayer;

use crate::error::ServiceError;
use crate::records::{ErrorBody, LabelSubmission, QueryList, SCHEMA_VERSION};
use crate::store::RoundStore;

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let (status, code, stored_label) = match &self {
            ServiceError::NoRound => (StatusCode::NOT_FOUND, "no_round", None),
            ServiceError::UnknownSample(_) => (StatusCode::UNPROCESSABLE_ENTITY, "unknown_sample", None),
            ServiceError::BadLabel(_) => (StatusCode::UNPROCESSABLE_ENTITY, "bad_label", None),
            ServiceError::Duplicate { stored, .. } => (StatusCode::CONFLICT, "duplicate", Some(*stored)),
            ServiceError::RoundBusy => (StatusCode::CONFLICT, "round_busy", None),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal", None),
        };
        let body = ErrorBody {
            schema_version: SCHEMA_VERSION,
            error: code.to_string(),
            message: self.to_string(),
            stored_label,
        };
        (status, Json(body)).into_response()
    }
}

async fn current_round(State(store): State<Arc<RoundStore>>) -> Result<impl IntoResponse, ServiceError> {
    Ok(Json(store.status()?))
}

async fn current_queries(State(store): State<Arc<RoundStore>>) -> Result<impl IntoResponse, ServiceError> {
    let (round, queries) = store.queries()?;
    Ok(Json(QueryList {
        schema_version: SCHEMA_VERSION,
        round,
        queries,
    }))
}

async fn submit_label(
    State(store): State<Arc<RoundStore>>,
    Json(body): Json<LabelSubmission>,
) -> Result<impl IntoResponse, ServiceError> {
    // The journal write syncs to disk; keep it off the async workers.
    let ack = tokio::task::spawn_blocking(move || store.submit(body.sample_id, body.label, &body.annotator))
        .await
        .map_err(|e| ServiceError::Journal(e.to_string()))??;
    Ok(Json(ack))
}

pub fn router(store: Arc<RoundStore>) -> Router {
    Router::new()
        .route("/rounds/current", get(current_round))
        .route("/rounds/current/queries", get(current_queries))
        .route("/labels", post(submit_label))
        .layer(CorsLayer::permissive())
        .with_state(store)
}

/// The service running on a background thread. Dropping the handle stops it.
#[derive(Debug)]
pub struct ServiceHandle {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<std::io::Result<()>>>,
}

impl ServiceHandle {
    /// Binds `addr` (port 0 picks a free port) and starts serving `store`.
    pub fn spawn(store: Arc<RoundStore>, addr: SocketAddr) -> std::io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let (tx, rx) = oneshot::channel::<()>();
        let thread = std::thread::Builder::new()
            .name("annotate-service".into())
            .spawn(move || {
                let rt = tokio::runtime::Builder::new_multi_thread()
                    .worker_threads(2)
                    .enable_all()
                    .build()?;
                rt.block_on(async move {
                    let listener = tokio::net::TcpListener::from_std(listener)?;
                    tracing::info!(%addr, "annotation service listening");
                    axum::serve(listener, router(store))
                        .with_graceful_shutdown(async {
                            let _ = rx.await;
                        })
                        .await
                })
            })?;
        Ok(Self {
            addr,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Blocks until the server exits on its own (it only does on error).
    pub fn join(mut self) -> std::io::Result<()> {
        // Holding the sender keeps the shutdown signal from firing.
        let _tx = self.shutdown.take();
        match self.thread.take().map(|t| t.join()) {
            Some(Ok(r)) => r,
            Some(Err(_)) => Err(std::io::Error::other("service thread panicked")),
            None => Ok(()),
        }
    }

    pub fn stop(mut self) -> std::io::Result<()> {
        self.stop_inner()
    }

    fn stop_inner(&mut self) -> std::io::Result<()> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        match self.thread.take().map(|t| t.join()) {
            Some(Ok(r)) => r,
            Some(Err(_)) => Err(std::io::Error::other("service thread panicked")),
            None => Ok(()),
        }
    }
}

impl Drop for ServiceHandle {
    fn drop(&mut self) {
        let _ = self.stop_inner();
    }
}
