//! HTTP front end for field studies: registration, the rating loop, the
//! post-study survey and operator export. Every accepted mutation is written
//! to disk before the response goes out, so clients can always resume.

mod error;
mod routes;
mod store;

pub use error::ApiError;
pub use routes::router;
pub use store::{FileStore, StoreError, StoredSession};

use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use banditfield::config::ConfigError;
use banditfield::{Catalog, ExperimentConfig};
use thiserror::Error;

/// Environment variable holding the operator bearer token.
pub const OPERATOR_TOKEN_ENV: &str = "BANDITFIELD_OPERATOR_TOKEN";

/// Milliseconds since an arbitrary fixed origin.
pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
    }
}

/// Clock advanced by hand, for tests and scripted runs.
#[derive(Debug, Default)]
pub struct ManualClock(AtomicU64);

impl ManualClock {
    pub fn new(start_ms: u64) -> Self {
        Self(AtomicU64::new(start_ms))
    }

    pub fn advance(&self, ms: u64) {
        self.0.fetch_add(ms, Ordering::SeqCst);
    }

    pub fn set(&self, ms: u64) {
        self.0.store(ms, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_ms(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}

impl<C: Clock + ?Sized> Clock for Arc<C> {
    fn now_ms(&self) -> u64 {
        (**self).now_ms()
    }
}

#[derive(Debug, Error)]
pub enum ServerError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("stored session {0} belongs to study {1}, not {2}")]
    ForeignSession(String, String, String),
}

pub(crate) type SessionSlot = Arc<Mutex<StoredSession>>;

pub(crate) struct Inner {
    pub config: ExperimentConfig,
    pub catalog: Catalog,
    pub store: FileStore,
    pub clock: Box<dyn Clock>,
    pub operator_token: Option<String>,
    /// Participant id to session; ids sort in registration order.
    pub sessions: RwLock<BTreeMap<String, SessionSlot>>,
    /// Completion codes already used, guarded together with registration.
    pub used_codes: Mutex<HashSet<String>>,
}

/// Shared service state; cheap to clone.
#[derive(Clone)]
pub struct AppState(pub(crate) Arc<Inner>);

impl AppState {
    /// Validates the study definition and loads any sessions already
    /// persisted under `data_dir`.
    pub fn open(
        config: ExperimentConfig,
        catalog: Catalog,
        data_dir: impl AsRef<Path>,
        clock: Box<dyn Clock>,
        operator_token: Option<String>,
    ) -> Result<Self, ServerError> {
        config.validate()?;
        catalog.validate(&config)?;
        let store = FileStore::open(data_dir)?;
        let mut sessions = BTreeMap::new();
        let mut used_codes = HashSet::new();
        for stored in store.load_all()? {
            let s = &stored.session;
            if s.study_id() != config.study_id {
                return Err(ServerError::ForeignSession(
                    s.participant_id().into(),
                    s.study_id().into(),
                    config.study_id.clone(),
                ));
            }
            used_codes.insert(s.completion_code().to_string());
            sessions.insert(s.participant_id().to_string(), Arc::new(Mutex::new(stored)));
        }
        Ok(Self(Arc::new(Inner {
            config,
            catalog,
            store,
            clock,
            operator_token: operator_token.filter(|t| !t.is_empty()),
            sessions: RwLock::new(sessions),
            used_codes: Mutex::new(used_codes),
        })))
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.0.config
    }

    pub fn session_count(&self) -> usize {
        self.0.sessions.read().expect("session map lock").len()
    }

    /// Copies of every session, taken while all of them are locked.
    pub fn snapshot(&self) -> Vec<StoredSession> {
        let map = self.0.sessions.read().expect("session map lock");
        let guards: Vec<_> = map.values().map(|s| s.lock().expect("session lock")).collect();
        guards.iter().map(|g| (**g).clone()).collect()
    }
}
