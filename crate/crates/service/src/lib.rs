//! HTTP service for interactive segmentation sessions: slice images,
//! prompt and edit endpoints returning RLE masks with measurements, and a
//! server-side timing log.

pub mod error;
pub mod routes;
pub mod state;

use std::net::SocketAddr;

pub use error::ApiError;
pub use routes::router;
pub use state::{AppState, ServiceConfig, TimingRecord};

/// Binds `addr` and serves until the task is cancelled.
pub async fn serve(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
