//! The set of live sessions, with per-session serialization and a
//! broadcast channel for subscribers.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use tokio::sync::broadcast;

use crate::config::SessionConfig;
use crate::event::{Event, SessionSnapshot};
use crate::session::{Session, SessionError, EVENTS_FILE};

const CHANNEL_CAPACITY: usize = 1024;

pub struct Handle {
    session: Mutex<Session>,
    tx: broadcast::Sender<Event>,
}

impl Handle {
    fn new(session: Session) -> Arc<Self> {
        let (tx, _) = broadcast::channel(CHANNEL_CAPACITY);
        Arc::new(Handle {
            session: Mutex::new(session),
            tx,
        })
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Session> {
        self.session.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Runs a mutation and publishes its events while still holding the
    /// session, so subscribers see them in log order.
    fn mutate(&self, f: impl FnOnce(&mut Session) -> Result<Vec<Event>, SessionError>) -> Result<Vec<Event>, SessionError> {
        let mut s = self.lock();
        let events = f(&mut s)?;
        for e in &events {
            let _ = self.tx.send(e.clone());
        }
        Ok(events)
    }
}

pub struct SessionStore {
    root: Option<PathBuf>,
    sessions: RwLock<BTreeMap<String, Arc<Handle>>>,
    next_id: AtomicU64,
}

fn id_number(id: &str) -> Option<u64> {
    id.strip_prefix('s')?.parse().ok()
}

impl SessionStore {
    /// Sessions kept in memory only.
    pub fn in_memory() -> Self {
        SessionStore {
            root: None,
            sessions: RwLock::new(BTreeMap::new()),
            next_id: AtomicU64::new(1),
        }
    }

    /// Sessions persisted under `root`, one directory each. Existing
    /// sessions are recovered from their event logs.
    pub fn open(root: &Path) -> Result<Self, SessionError> {
        std::fs::create_dir_all(root)?;
        let mut sessions = BTreeMap::new();
        let mut next = 1;
        let mut dirs: Vec<PathBuf> = std::fs::read_dir(root)?
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.join(EVENTS_FILE).is_file())
            .collect();
        dirs.sort();
        for dir in dirs {
            let s = Session::recover(&dir)?;
            if let Some(n) = id_number(s.id()) {
                next = next.max(n + 1);
            }
            sessions.insert(s.id().to_string(), Handle::new(s));
        }
        Ok(SessionStore {
            root: Some(root.to_path_buf()),
            sessions: RwLock::new(sessions),
            next_id: AtomicU64::new(next),
        })
    }

    pub fn ids(&self) -> Vec<String> {
        self.sessions.read().unwrap_or_else(|p| p.into_inner()).keys().cloned().collect()
    }

    fn get(&self, id: &str) -> Result<Arc<Handle>, SessionError> {
        self.sessions
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| SessionError::UnknownSession(id.to_string()))
    }

    pub fn create(&self, config: SessionConfig) -> Result<SessionSnapshot, SessionError> {
        let id = format!("s{:04}", self.next_id.fetch_add(1, Ordering::SeqCst));
        let dir = self.root.as_ref().map(|r| r.join(&id));
        let s = Session::create(&id, config, dir.as_deref())?;
        let snap = s.snapshot();
        self.sessions
            .write()
            .unwrap_or_else(|p| p.into_inner())
            .insert(id, Handle::new(s));
        Ok(snap)
    }

    pub fn config(&self, id: &str) -> Result<SessionConfig, SessionError> {
        Ok(self.get(id)?.lock().config().clone())
    }

    pub fn post_chat(&self, id: &str, text: &str) -> Result<Vec<Event>, SessionError> {
        self.get(id)?.mutate(|s| s.post_chat(text))
    }

    pub fn advance(&self, id: &str, steps: u64) -> Result<Vec<Event>, SessionError> {
        self.get(id)?.mutate(|s| s.advance(steps))
    }

    pub fn snapshot(&self, id: &str) -> Result<SessionSnapshot, SessionError> {
        Ok(self.get(id)?.lock().snapshot())
    }

    /// Snapshot rebuilt from the session's log, for consistency checks.
    pub fn folded_snapshot(&self, id: &str) -> Result<SessionSnapshot, SessionError> {
        self.get(id)?.lock().folded_snapshot()
    }

    pub fn transcript_jsonl(&self, id: &str) -> Result<String, SessionError> {
        Ok(self.get(id)?.lock().transcript()?.to_jsonl())
    }

    pub fn events_after(&self, id: &str, after: u64) -> Result<Vec<Event>, SessionError> {
        Ok(self.get(id)?.lock().events_after(after).to_vec())
    }

    /// Events after `after` plus a receiver for everything that follows,
    /// with no gap or overlap between the two.
    pub fn subscribe(&self, id: &str, after: u64) -> Result<(Vec<Event>, broadcast::Receiver<Event>), SessionError> {
        let h = self.get(id)?;
        let s = h.lock();
        let rx = h.tx.subscribe();
        Ok((s.events_after(after).to_vec(), rx))
    }
}
