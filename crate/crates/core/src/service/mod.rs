//! HTTP service hosting DCR listening studies.
//!
//! Every state change is appended to a per-study NDJSON journal under
//! `data_dir/studies` and synced before the request is acknowledged; on start
//! the journals are replayed. Stimulus audio is mixed down, loudness-normalized
//! and stored once under `data_dir/audio/<sha256>.wav`.

mod journal;
mod routes;
mod state;

pub use journal::{Event, Journal};
pub use routes::router;
pub use state::{Session, StudyState};

use std::collections::HashMap;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prepare::DEFAULT_TARGET_LUFS;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("config: {0}")]
    Config(String),
    #[error("{}:{line}: {message}", path.display())]
    Journal { path: PathBuf, line: usize, message: String },
}

fn default_bind() -> String {
    "127.0.0.1:8080".into()
}
fn default_target_lufs() -> f64 {
    DEFAULT_TARGET_LUFS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_bind")]
    pub bind: String,
    pub data_dir: PathBuf,
    /// Used as the study seed when a created study does not set `rng_seed`.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_target_lufs")]
    pub target_lufs: f64,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self { bind: default_bind(), data_dir: data_dir.into(), seed: 0, target_lufs: DEFAULT_TARGET_LUFS }
    }

    pub fn from_toml(text: &str) -> Result<Self, ServiceError> {
        toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ServiceError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    fn studies_dir(&self) -> PathBuf {
        self.data_dir.join("studies")
    }

    fn audio_dir(&self) -> PathBuf {
        self.data_dir.join("audio")
    }
}

pub(crate) struct StudyHandle {
    /// Held for the whole validate-append-apply sequence so writes to one study
    /// are serialized.
    journal: Mutex<Journal>,
    state: RwLock<StudyState>,
}

pub struct AppState {
    config: ServiceConfig,
    studies: RwLock<HashMap<String, Arc<StudyHandle>>>,
    /// Session id → study id.
    sessions: RwLock<HashMap<String, String>>,
}

impl AppState {
    /// Creates the data directories and replays every study journal.
    pub fn open(config: ServiceConfig) -> Result<Arc<Self>, ServiceError> {
        std::fs::create_dir_all(config.studies_dir())?;
        std::fs::create_dir_all(config.audio_dir())?;
        let mut paths: Vec<PathBuf> = std::fs::read_dir(config.studies_dir())?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "ndjson"))
            .collect();
        paths.sort();

        let mut studies = HashMap::new();
        let mut sessions = HashMap::new();
        for path in paths {
            let (events, journal) = Journal::replay(&path)?;
            let bad = |line: usize, message: String| ServiceError::Journal { path: path.clone(), line, message };
            let mut iter = events.into_iter();
            let mut state = match iter.next() {
                Some(Event::StudyCreated { study_id, config, groups, audio }) => {
                    StudyState::new(study_id, config, groups, audio)
                }
                Some(_) => return Err(bad(1, "first event must create the study".into())),
                None => {
                    log::warn!("{}: empty journal skipped", path.display());
                    continue;
                }
            };
            for (i, event) in iter.enumerate() {
                state.apply(&event).map_err(|m| bad(i + 2, m))?;
            }
            for id in state.sessions.keys() {
                sessions.insert(id.clone(), state.study_id.clone());
            }
            log::info!(
                "replayed study {}: {} sessions, {} ratings",
                state.study_id,
                state.sessions.len(),
                state.ratings.len()
            );
            studies.insert(
                state.study_id.clone(),
                Arc::new(StudyHandle { journal: Mutex::new(journal), state: RwLock::new(state) }),
            );
        }
        Ok(Arc::new(Self { config, studies: RwLock::new(studies), sessions: RwLock::new(sessions) }))
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    fn study(&self, id: &str) -> Option<Arc<StudyHandle>> {
        self.studies.read().unwrap().get(id).cloned()
    }

    fn session_study(&self, session_id: &str) -> Option<Arc<StudyHandle>> {
        let study_id = self.sessions.read().unwrap().get(session_id).cloned()?;
        self.study(&study_id)
    }
}

/// Binds, prints `listening on http://<addr>` to stdout and serves until
/// Ctrl-C.
pub async fn run(config: ServiceConfig) -> Result<(), ServiceError> {
    let state = AppState::open(config)?;
    let listener = tokio::net::TcpListener::bind(&state.config.bind).await?;
    let addr: SocketAddr = listener.local_addr()?;
    println!("listening on http://{addr}");
    std::io::stdout().flush()?;
    log::info!("serving on {addr}, data in {}", state.config.data_dir.display());
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
