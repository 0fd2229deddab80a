//! Collaboration server: a bulk asset channel over HTTP, annotation and
//! story persistence, and live presenter sessions over websockets.
//!
//! Metadata and blobs sit behind the [`storage::MetadataStore`] and
//! [`storage::BlobStore`] ports. With a data directory both are
//! filesystem-backed; without one the server runs in memory.

pub mod error;
pub mod http;
pub mod model;
pub mod session;
pub mod storage;

use std::collections::HashMap;
use std::future::Future;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use tokio::sync::watch;

pub use error::{ApiError, WIRE_VERSION};
pub use model::{
    ActiveShader, Annotation, AnnotationDraft, AnnotationPatch, AssetKind, AssetRecord, AuditReport,
    ContentEncoding, PartialSessionState, SessionState, StoryDocument, StoryDraft,
};
pub use session::{ClientBody, ClientMessage, ErrorCode, Role, ServerBody, ServerMessage, SessionHub};
use storage::{
    digest_of, BlobStore, FsBlobStore, FsMetadataStore, MemoryBlobStore, MemoryMetadataStore, MetadataStore,
    MetadataStoreExt, StorageError,
};

pub const DEFAULT_MAX_BLOB_SIZE: u64 = 256 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServerConfig {
    pub listen: SocketAddr,
    /// Root for persistent storage; `None` keeps everything in memory.
    pub data_dir: Option<PathBuf>,
    pub max_blob_size: u64,
    /// Keep gzip uploads compressed at rest and honor `Accept-Encoding: gzip`.
    pub compression: bool,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            data_dir: None,
            max_blob_size: DEFAULT_MAX_BLOB_SIZE,
            compression: true,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServerError {
    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error("server failed: {0}")]
    Io(#[from] std::io::Error),
}

struct Inner {
    config: ServerConfig,
    meta: Arc<dyn MetadataStore>,
    blobs: Arc<dyn BlobStore>,
    hub: Arc<SessionHub>,
    locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
    shutdown: watch::Sender<bool>,
}

/// Shared state behind every handler.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

impl AppState {
    pub fn new(config: ServerConfig, meta: Arc<dyn MetadataStore>, blobs: Arc<dyn BlobStore>) -> Self {
        AppState {
            inner: Arc::new(Inner {
                config,
                meta,
                blobs,
                hub: Arc::new(SessionHub::new()),
                locks: Mutex::new(HashMap::new()),
                shutdown: watch::channel(false).0,
            }),
        }
    }

    /// Opens the stores named by `config`: `<data_dir>/meta` and
    /// `<data_dir>/blobs`, or in-memory stores without a data directory.
    pub fn open(config: ServerConfig) -> Result<Self, StorageError> {
        let (meta, blobs): (Arc<dyn MetadataStore>, Arc<dyn BlobStore>) = match &config.data_dir {
            Some(dir) => (
                Arc::new(FsMetadataStore::open(dir.join("meta"))?),
                Arc::new(FsBlobStore::open(dir.join("blobs"))?),
            ),
            None => (Arc::new(MemoryMetadataStore::new()), Arc::new(MemoryBlobStore::new())),
        };
        Ok(Self::new(config, meta, blobs))
    }

    pub fn config(&self) -> &ServerConfig {
        &self.inner.config
    }

    pub fn meta(&self) -> &Arc<dyn MetadataStore> {
        &self.inner.meta
    }

    pub fn blobs(&self) -> &Arc<dyn BlobStore> {
        &self.inner.blobs
    }

    pub fn hub(&self) -> &Arc<SessionHub> {
        &self.inner.hub
    }

    pub fn router(&self) -> axum::Router {
        http::router(self.clone())
    }

    /// Asks open session sockets to close.
    pub fn begin_shutdown(&self) {
        self.inner.shutdown.send_replace(true);
    }

    pub(crate) fn shutdown_signal(&self) -> watch::Receiver<bool> {
        self.inner.shutdown.subscribe()
    }

    /// Mutex serializing writes under one key.
    pub(crate) fn lock_for(&self, key: &str) -> Arc<tokio::sync::Mutex<()>> {
        let mut locks = self.inner.locks.lock().unwrap();
        locks.retain(|_, l| Arc::strong_count(l) > 1);
        locks.entry(key.to_string()).or_default().clone()
    }

    /// Checks that every asset record has a blob whose content matches its
    /// digest.
    pub fn audit(&self) -> Result<AuditReport, StorageError> {
        let records: Vec<AssetRecord> = self.meta().list_json("assets")?;
        let mut report = AuditReport {
            assets: records.len(),
            missing: vec![],
            corrupt: vec![],
            ok: true,
        };
        for r in &records {
            match self.blobs().get(&r.stored_digest)? {
                None => report.missing.push(r.id.clone()),
                Some(b) if digest_of(&b) != r.stored_digest => report.corrupt.push(r.id.clone()),
                Some(_) => {}
            }
        }
        report.ok = report.missing.is_empty() && report.corrupt.is_empty();
        Ok(report)
    }
}

/// A bound, not yet running server.
pub struct Server {
    listener: tokio::net::TcpListener,
    state: AppState,
}

impl Server {
    pub async fn bind(config: ServerConfig) -> Result<Self, ServerError> {
        let state = AppState::open(config.clone())?;
        Self::bind_with(state).await
    }

    pub async fn bind_with(state: AppState) -> Result<Self, ServerError> {
        let addr = state.config().listen;
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|source| ServerError::Bind { addr, source })?;
        Ok(Server { listener, state })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.listener.local_addr().expect("bound listener has an address")
    }

    pub fn state(&self) -> &AppState {
        &self.state
    }

    /// Serves until `shutdown` resolves, then closes session sockets and
    /// waits for in-flight requests.
    pub async fn run(self, shutdown: impl Future<Output = ()> + Send + 'static) -> Result<(), ServerError> {
        let state = self.state.clone();
        log::info!("listening on {}", self.local_addr());
        let signal = async move {
            shutdown.await;
            log::info!("shutting down");
            state.begin_shutdown();
        };
        axum::serve(self.listener, self.state.router())
            .with_graceful_shutdown(signal)
            .await?;
        Ok(())
    }
}
