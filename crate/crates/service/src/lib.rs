//! Project store, analysis queue and HTTP API around the feedback pipeline.

pub mod api;
pub mod config;
pub mod service;
pub mod store;

use std::sync::Arc;

use thiserror::Error;

use vizcritique::pipeline::Analyzer;
use vizcritique::setup::{build_backends, SetupError};

pub use api::{router, AppState};
pub use config::{load_service_config, load_thresholds, ServiceConfig};
pub use service::{ProjectService, ServiceError};
pub use store::{FsStore, Project, ProjectStore, RevisionRecord, RevisionStatus};

#[derive(Debug, Error)]
pub enum StartError {
    #[error(transparent)]
    Config(#[from] config::ConfigFileError),
    #[error(transparent)]
    Backends(#[from] SetupError),
    #[error(transparent)]
    Store(#[from] store::StoreError),
}

/// Opens the store, builds the backends and starts the workers.
pub fn start_service(cfg: &ServiceConfig) -> Result<AppState, StartError> {
    let thresholds = load_thresholds(cfg.thresholds.as_deref())?;
    let analyzer = Analyzer::new(thresholds, build_backends(&cfg.backends)?);
    let store = FsStore::open(&cfg.storage_root)?;
    let service = ProjectService::start(Arc::new(store), Arc::new(analyzer), cfg.workers)?;
    Ok(AppState {
        service: Arc::new(service),
        tokens: Arc::new(cfg.tokens.clone()),
    })
}
