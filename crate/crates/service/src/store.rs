//! One JSON file per session in a directory. Writes go to a temporary file
//! that is then renamed over the old one, so a reader never sees a partial
//! record.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use neyman_core::designs::{DesignState, StageAllocation};
use serde::{Deserialize, Serialize};

use crate::error::ApiError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub stage: usize,
    pub allocation: StageAllocation,
    /// SHA-256 of the submitted observation payload, hex.
    pub digest: String,
    pub at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LastSubmit {
    pub digest: String,
    pub response: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub created_at: u64,
    pub updated_at: u64,
    pub state: DesignState,
    pub audit: Vec<AuditEntry>,
    pub last_submit: Option<LastSubmit>,
}

pub fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

pub fn new_id() -> String {
    format!("{:032x}", rand::random::<u128>())
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.bytes().all(|b| b.is_ascii_hexdigit())
}

pub struct Store {
    dir: PathBuf,
    locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
}

impl Store {
    pub fn open(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self { dir, locks: Mutex::new(HashMap::new()) })
    }

    /// The writer lock of one session.
    pub fn lock(&self, id: &str) -> Arc<tokio::sync::Mutex<()>> {
        let mut locks = self.locks.lock().expect("lock table poisoned");
        locks.entry(id.to_string()).or_default().clone()
    }

    fn path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.json"))
    }

    pub fn load(&self, id: &str) -> Result<Option<Session>, ApiError> {
        if !valid_id(id) {
            return Ok(None);
        }
        match std::fs::read(self.path(id)) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map(Some)
                .map_err(|e| ApiError::internal(format!("corrupt session {id}: {e}"))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(ApiError::internal(e.to_string())),
        }
    }

    pub fn save(&self, session: &Session) -> Result<(), ApiError> {
        let bytes = serde_json::to_vec_pretty(session).map_err(|e| ApiError::internal(e.to_string()))?;
        let tmp = self.dir.join(format!("{}.json.tmp", session.id));
        std::fs::write(&tmp, bytes)
            .and_then(|_| std::fs::rename(&tmp, self.path(&session.id)))
            .map_err(|e| ApiError::internal(e.to_string()))
    }
}
