use std::path::PathBuf;

use rba_service::ServiceConfig;
use tracing_subscriber::EnvFilter;

fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt().with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into())).init();
    let fallback = std::env::args_os().nth(1).map(PathBuf::from);
    let config = ServiceConfig::from_env(fallback.as_deref())?;
    tokio::runtime::Runtime::new()?.block_on(rba_service::serve(config))
}
