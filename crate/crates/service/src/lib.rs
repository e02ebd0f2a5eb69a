//! HTTP front end for live experiments and batch simulations.
//!
//! | method | path | |
//! |---|---|---|
//! | POST | `/v1/sessions` | open a session from a design spec |
//! | POST | `/v1/sessions/{id}/stages` | submit the pending stage's outcomes |
//! | GET | `/v1/sessions/{id}` | state snapshot with audit log |
//! | POST | `/v1/simulations` | run a batch (202 + job id above 10⁴ trajectories) |
//! | GET | `/v1/simulations/{job_id}` | poll a background batch |
//!
//! All decisions are made by [`neyman_core::designs::DesignState`]; the
//! service only persists it and serializes access per session.

pub mod error;
pub mod sessions;
pub mod simulations;
pub mod store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::routing::{get, post};
use axum::Router;

pub use error::{ApiError, ErrorBody};
pub use simulations::{Jobs, SimulationRequest, SimulationResponse};
pub use store::Store;

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<Store>,
    pub jobs: Arc<Jobs>,
}

impl AppState {
    pub fn open(data_dir: impl Into<PathBuf>, workers: usize) -> std::io::Result<Self> {
        Ok(Self {
            store: Arc::new(Store::open(data_dir)?),
            jobs: Arc::new(Jobs::new(workers)),
        })
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/sessions", post(sessions::create))
        .route("/v1/sessions/{id}", get(sessions::get))
        .route("/v1/sessions/{id}/stages", post(sessions::submit))
        .route("/v1/simulations", post(simulations::create))
        .route("/v1/simulations/{job_id}", get(simulations::get))
        .with_state(state)
}

/// Serves until the process is stopped.
pub async fn serve(addr: SocketAddr, data_dir: PathBuf) -> std::io::Result<()> {
    let state = AppState::open(data_dir, 2)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await
}
