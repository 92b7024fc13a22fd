//! Authentication service around the risk engine: password check, risk
//! scoring, verification-code round-trip and session tokens, over HTTP.

pub mod auth;
pub mod config;
pub mod http;
pub mod rtt;
pub mod users;

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

pub use auth::{AuthResponse, AuthService, Clock, Decision, ManualClock, Storage, SystemClock};
pub use config::ServiceConfig;
pub use http::{router, AppState};

/// Re-reads the configured reputation source on its interval, starting now.
pub fn spawn_reputation_refresh(state: AppState) -> Option<tokio::task::JoinHandle<()>> {
    let cfg = state.service.config().reputation.clone();
    let source = cfg.source?;
    let period = Duration::from_secs(cfg.refresh_interval_secs.max(1));
    Some(tokio::spawn(async move {
        let mut ticks = tokio::time::interval(period);
        loop {
            ticks.tick().await;
            match http::fetch_reputation_source(&state.http, &source).await {
                Ok(fetched) => {
                    let _ = state.service.reload_reputation(&fetched);
                }
                Err(e) => tracing::warn!(error = %e, "reputation fetch failed, keeping previous list"),
            }
        }
    }))
}

/// Binds the configured address and serves until the process stops.
pub async fn serve(config: ServiceConfig) -> anyhow::Result<()> {
    let bind = config.bind;
    let service = Arc::new(tokio::task::spawn_blocking(move || AuthService::from_config(config)).await??);
    let state = AppState::new(service);
    spawn_reputation_refresh(state.clone());
    let listener = tokio::net::TcpListener::bind(bind).await?;
    tracing::info!(address = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state).into_make_service_with_connect_info::<SocketAddr>()).await?;
    Ok(())
}
