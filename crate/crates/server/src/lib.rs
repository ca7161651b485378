//! HTTP/JSON service over the relaq engine.
//!
//! Routes live under `/v1`. Datasets are identified by a content hash of the
//! uploaded bytes and parameters, so re-uploading is idempotent.

mod error;
mod routes;

use std::collections::HashMap;
use std::io;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};
use std::time::Duration;

use relaq_core::preprocess::{Artifacts, BuildConfig};
use relaq_core::store::{self, StoreError};
use tokio::net::TcpListener;
use tokio::task::JoinHandle;

pub use error::ApiError;
pub use routes::router;

/// Server-side cap on query time; slower queries return truncated results.
pub const QUERY_TIMEOUT: Duration = Duration::from_secs(30);
/// How long a saved upload waits for its background index build.
const PERSIST_WAIT: Duration = Duration::MAX;

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub build: BuildConfig,
    pub query_timeout: Duration,
    /// Where uploads are persisted and reloaded from; memory only when `None`.
    pub data_dir: Option<PathBuf>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self { build: BuildConfig::default(), query_timeout: QUERY_TIMEOUT, data_dir: None }
    }
}

/// Shared state: every dataset known to this server.
#[derive(Debug)]
pub struct AppState {
    pub config: ServerConfig,
    datasets: RwLock<HashMap<String, Arc<Artifacts>>>,
}

impl AppState {
    pub fn new(config: ServerConfig) -> Self {
        Self { config, datasets: RwLock::new(HashMap::new()) }
    }

    /// A state that also loads every artifact directory under `config.data_dir`.
    pub fn open(config: ServerConfig) -> Result<Self, StoreError> {
        let state = Self::new(config);
        if let Some(dir) = state.config.data_dir.clone() {
            if dir.is_dir() {
                let entries = std::fs::read_dir(&dir).map_err(|source| StoreError::Io { path: dir.clone(), source })?;
                for entry in entries.flatten() {
                    let path = entry.path();
                    if path.join(store::MANIFEST).is_file() {
                        state.load_dir(&path)?;
                    }
                }
            }
        }
        Ok(state)
    }

    /// Register the artifacts saved in `dir`; returns the dataset id.
    pub fn load_dir(&self, dir: &Path) -> Result<String, StoreError> {
        let (manifest, artifacts) = store::load(dir)?;
        self.insert(manifest.id.clone(), Arc::new(artifacts));
        Ok(manifest.id)
    }

    pub fn insert(&self, id: String, artifacts: Arc<Artifacts>) {
        self.datasets.write().expect("dataset map poisoned").insert(id, artifacts);
    }

    pub fn get(&self, id: &str) -> Option<Arc<Artifacts>> {
        self.datasets.read().expect("dataset map poisoned").get(id).cloned()
    }

    pub fn ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.datasets.read().expect("dataset map poisoned").keys().cloned().collect();
        ids.sort();
        ids
    }

    /// Persist `artifacts` under the data directory once its indexes are built.
    fn persist_later(&self, id: &str, artifacts: Arc<Artifacts>) {
        let Some(root) = &self.config.data_dir else { return };
        let dir = root.join(id);
        let id = id.to_string();
        tokio::task::spawn_blocking(move || {
            if let Err(e) = store::save(&dir, &id, &artifacts, PERSIST_WAIT) {
                tracing::warn!(dataset = %id, error = %e, "could not persist artifacts");
            }
        });
    }
}

/// Serve until the listener fails.
pub async fn serve(listener: TcpListener, state: Arc<AppState>) -> io::Result<()> {
    axum::serve(listener, router(state)).await
}

/// A server running on a background task.
pub struct RunningServer {
    pub addr: SocketAddr,
    pub handle: JoinHandle<io::Result<()>>,
}

impl RunningServer {
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for RunningServer {
    fn drop(&mut self) {
        self.handle.abort();
    }
}

/// Bind `addr` (port 0 picks a free one) and serve in the background.
pub async fn start(addr: SocketAddr, state: Arc<AppState>) -> io::Result<RunningServer> {
    let listener = TcpListener::bind(addr).await?;
    let addr = listener.local_addr()?;
    let handle = tokio::spawn(serve(listener, state));
    Ok(RunningServer { addr, handle })
}
