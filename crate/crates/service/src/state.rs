use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::http::StatusCode;
use beads_core::autotag::{RunConfig, RunManifest};
use beads_core::fsio::write_atomic;
use beads_core::store::Store;
use serde::{Deserialize, Serialize};
use tokio::sync::OwnedMutexGuard;
use tokio::task::JoinHandle;

use crate::error::ApiError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunState {
    Running,
    Complete,
    CompleteWithFailures,
    Aborted,
    Failed,
}

/// Status of a background autotag run, as served by `/api/runs/{id}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub set_id: String,
    pub debate_id: String,
    pub client: String,
    pub state: RunState,
    pub done: usize,
    pub total: usize,
    pub failures: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<RunManifest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub(crate) struct Inner {
    pub store: Store,
    pub lock_timeout: Duration,
    pub run_config: RunConfig,
    pub endpoint_config: Option<PathBuf>,
    locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
    runs: Mutex<HashMap<String, RunRecord>>,
    tasks: Mutex<Vec<JoinHandle<()>>>,
    run_seq: AtomicU64,
}

/// Shared state behind every handler.
#[derive(Clone)]
pub struct AppState(pub(crate) Arc<Inner>);

#[derive(Debug, Clone)]
pub struct StateOptions {
    /// How long a write waits for a busy set before answering 409.
    pub lock_timeout: Duration,
    pub run_config: RunConfig,
    /// Endpoint config file for `client = "live"`; the environment is used when absent.
    pub endpoint_config: Option<PathBuf>,
}

impl Default for StateOptions {
    fn default() -> Self {
        StateOptions { lock_timeout: Duration::from_secs(5), run_config: RunConfig::default(), endpoint_config: None }
    }
}

impl AppState {
    pub fn new(store: Store, opts: StateOptions) -> Self {
        AppState(Arc::new(Inner {
            store,
            lock_timeout: opts.lock_timeout,
            run_config: opts.run_config,
            endpoint_config: opts.endpoint_config,
            locks: Mutex::new(HashMap::new()),
            runs: Mutex::new(HashMap::new()),
            tasks: Mutex::new(Vec::new()),
            run_seq: AtomicU64::new(0),
        }))
    }

    pub fn store(&self) -> &Store {
        &self.0.store
    }

    fn set_mutex(&self, set_id: &str) -> Arc<tokio::sync::Mutex<()>> {
        let mut locks = self.0.locks.lock().expect("lock table poisoned");
        locks.entry(set_id.to_string()).or_default().clone()
    }

    /// Exclusive write access to one set, or 409 once the timeout passes.
    pub async fn lock_set(&self, set_id: &str) -> Result<OwnedMutexGuard<()>, ApiError> {
        let m = self.set_mutex(set_id);
        tokio::time::timeout(self.0.lock_timeout, m.lock_owned()).await.map_err(|_| {
            ApiError::new(StatusCode::CONFLICT, "SetBusy", format!("set {set_id:?} is locked by another writer"))
        })
    }

    /// Like [`lock_set`](Self::lock_set) but fails immediately.
    pub fn try_lock_set(&self, set_id: &str) -> Result<OwnedMutexGuard<()>, ApiError> {
        self.set_mutex(set_id).try_lock_owned().map_err(|_| {
            ApiError::new(StatusCode::CONFLICT, "SetBusy", format!("set {set_id:?} is locked by another writer"))
        })
    }

    pub(crate) fn next_run_id(&self) -> String {
        let n = self.0.run_seq.fetch_add(1, Ordering::Relaxed);
        format!("run-{}-{n}", chrono::Utc::now().format("%Y%m%dT%H%M%S%3f"))
    }

    fn run_path(&self, run_id: &str) -> PathBuf {
        self.0.store.runs_dir().join(format!("{run_id}.json"))
    }

    /// Stores the record in memory and on disk.
    pub(crate) fn put_run(&self, record: RunRecord) {
        let mut json = serde_json::to_string_pretty(&record).expect("run record serialises");
        json.push('\n');
        if let Err(e) = write_atomic(&self.run_path(&record.run_id), json.as_bytes()) {
            tracing::warn!(run = %record.run_id, error = %e, "could not persist run status");
        }
        self.0.runs.lock().expect("run table poisoned").insert(record.run_id.clone(), record);
    }

    /// In-memory progress update; not persisted.
    pub(crate) fn set_progress(&self, run_id: &str, done: usize, total: usize) {
        if let Some(r) = self.0.runs.lock().expect("run table poisoned").get_mut(run_id) {
            r.done = done;
            r.total = total;
        }
    }

    /// Looks in memory first, then in `runs/` for runs from earlier sessions.
    pub fn run(&self, run_id: &str) -> Option<RunRecord> {
        if let Some(r) = self.0.runs.lock().expect("run table poisoned").get(run_id) {
            return Some(r.clone());
        }
        if beads_core::corpus::validate_debate_id(run_id).is_err() {
            return None;
        }
        let text = std::fs::read_to_string(self.run_path(run_id)).ok()?;
        serde_json::from_str(&text).ok()
    }

    pub(crate) fn track(&self, handle: JoinHandle<()>) {
        let mut tasks = self.0.tasks.lock().expect("task list poisoned");
        tasks.retain(|h| !h.is_finished());
        tasks.push(handle);
    }

    /// Waits for every background run started so far.
    pub async fn wait_background(&self) {
        loop {
            let pending: Vec<_> = std::mem::take(&mut *self.0.tasks.lock().expect("task list poisoned"));
            if pending.is_empty() {
                return;
            }
            for h in pending {
                if let Err(e) = h.await {
                    tracing::error!(error = %e, "background run panicked");
                }
            }
        }
    }
}
