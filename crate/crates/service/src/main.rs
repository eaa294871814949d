use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use tracing::{error, info};

use vizcritique_service::{load_service_config, router, start_service, ServiceConfig};

/// Chart design feedback service.
#[derive(Parser)]
#[command(version)]
struct Args {
    /// Service configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured listen address.
    #[arg(long)]
    bind: Option<String>,
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .init();
    let args = Args::parse();
    let mut cfg = match &args.config {
        Some(p) => match load_service_config(p) {
            Ok(c) => c,
            Err(e) => {
                error!("{e}");
                return ExitCode::from(2);
            }
        },
        None => ServiceConfig::default(),
    };
    if let Some(b) = args.bind {
        cfg.bind = b;
    }
    if cfg.tokens.is_empty() {
        error!("no bearer tokens configured; every request would be rejected");
    }
    let state = match tokio::task::block_in_place(|| start_service(&cfg)) {
        Ok(s) => s,
        Err(e) => {
            error!("{e}");
            return ExitCode::FAILURE;
        }
    };
    let listener = match tokio::net::TcpListener::bind(&cfg.bind).await {
        Ok(l) => l,
        Err(e) => {
            error!("cannot listen on {}: {e}", cfg.bind);
            return ExitCode::FAILURE;
        }
    };
    info!(bind = %cfg.bind, storage = %cfg.storage_root.display(), "serving");
    let app = router(state, cfg.max_upload_bytes);
    let shutdown = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    if let Err(e) = axum::serve(listener, app).with_graceful_shutdown(shutdown).await {
        error!("{e}");
        return ExitCode::FAILURE;
    }
    ExitCode::SUCCESS
}
