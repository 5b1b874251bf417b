//! HTTP API over a BEADS store, plus static hosting for the annotation UI.
//!
//! All routes live under `/api`; anything else is served from the static
//! directory. Errors are JSON bodies of the form `{error_kind, detail}`.

pub mod api;
pub mod error;
pub mod state;

use std::future::Future;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::PathBuf;

use axum::response::Html;
use axum::routing::get;
use axum::Router;
use beads_core::store::Store;
use tokio::net::TcpListener;
use tower_http::services::ServeDir;

pub use error::{ApiError, ErrorBody};
pub use state::{AppState, RunRecord, RunState, StateOptions};

pub const DEFAULT_PORT: u16 = 8787;

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub bind: IpAddr,
    pub port: u16,
    pub store: PathBuf,
    pub static_dir: Option<PathBuf>,
    pub options: StateOptions,
}

impl ServeConfig {
    /// Loopback on the default port.
    pub fn new(store: impl Into<PathBuf>) -> Self {
        ServeConfig {
            bind: IpAddr::V4(Ipv4Addr::LOCALHOST),
            port: DEFAULT_PORT,
            store: store.into(),
            static_dir: None,
            options: StateOptions::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("port {0} is already in use")]
    PortInUse(SocketAddr),
    #[error("{0}")]
    StoreUnreadable(String),
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error("server failed: {0}")]
    Io(#[from] std::io::Error),
}

const PLACEHOLDER: &str = "<!doctype html><title>beads</title>\
<p>The annotation API is under <code>/api</code>. Start the server with <code>--static DIR</code> to host the UI here.</p>";

/// The full application: `/api` routes plus static assets.
pub fn router(state: AppState, static_dir: Option<PathBuf>) -> Router {
    let app = Router::new().nest("/api", api::api_router()).with_state(state);
    match static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app.route("/", get(|| async { Html(PLACEHOLDER) })),
    }
}

/// A bound but not yet running server.
pub struct Server {
    listener: TcpListener,
    state: AppState,
    app: Router,
}

impl Server {
    pub async fn bind(config: ServeConfig) -> Result<Self, ServeError> {
        let store = Store::open(&config.store).map_err(|e| ServeError::StoreUnreadable(e.to_string()))?;
        let addr = SocketAddr::new(config.bind, config.port);
        let listener = TcpListener::bind(addr).await.map_err(|source| match source.kind() {
            std::io::ErrorKind::AddrInUse => ServeError::PortInUse(addr),
            _ => ServeError::Bind { addr, source },
        })?;
        let state = AppState::new(store, config.options);
        let app = router(state.clone(), config.static_dir);
        Ok(Server { listener, state, app })
    }

    pub fn local_addr(&self) -> std::io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    pub fn state(&self) -> &AppState {
        &self.state
    }

    /// Serves until `shutdown` resolves, then waits for in-flight requests
    /// and background runs so no write is cut short.
    pub async fn run<F>(self, shutdown: F) -> Result<(), ServeError>
    where
        F: Future<Output = ()> + Send + 'static,
    {
        tracing::info!(addr = ?self.listener.local_addr().ok(), "serving");
        axum::serve(self.listener, self.app).with_graceful_shutdown(shutdown).await?;
        self.state.wait_background().await;
        tracing::info!("stopped");
        Ok(())
    }
}

/// Binds and serves until Ctrl-C or SIGTERM.
pub async fn serve(config: ServeConfig) -> Result<(), ServeError> {
    Server::bind(config).await?.run(termination()).await
}

async fn termination() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}
