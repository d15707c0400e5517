use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use banditfield::Session;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("storage I/O on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt session file {path}: {source}")]
    Corrupt {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

/// A session together with the participant's bearer token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredSession {
    pub token: String,
    pub session: Session,
}

/// One JSON document per participant. Every save writes a temporary file,
/// syncs it and renames it over the previous version, so a crash leaves
/// either the old or the new state on disk, never a mix.
#[derive(Debug, Clone)]
pub struct FileStore {
    dir: PathBuf,
}

impl FileStore {
    pub fn open(data_dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        let dir = data_dir.as_ref().join("sessions");
        fs::create_dir_all(&dir).map_err(|source| StoreError::Io { path: dir.display().to_string(), source })?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, participant_id: &str) -> PathBuf {
        self.dir.join(format!("{participant_id}.json"))
    }

    pub fn save(&self, stored: &StoredSession) -> Result<(), StoreError> {
        let target = self.path_for(stored.session.participant_id());
        let io = |source| StoreError::Io { path: target.display().to_string(), source };
        let bytes = serde_json::to_vec(stored).expect("sessions serialize");
        let mut tmp = tempfile::Builder::new().suffix(".tmp").tempfile_in(&self.dir).map_err(io)?;
        tmp.write_all(&bytes).map_err(io)?;
        tmp.as_file().sync_all().map_err(io)?;
        tmp.persist(&target).map_err(|e| io(e.error))?;
        // make the rename itself durable
        if let Ok(d) = fs::File::open(&self.dir) {
            let _ = d.sync_all();
        }
        Ok(())
    }

    /// Every stored session, ordered by participant id. Leftover temporary
    /// files from an interrupted save are ignored.
    pub fn load_all(&self) -> Result<Vec<StoredSession>, StoreError> {
        let io = |source| StoreError::Io { path: self.dir.display().to_string(), source };
        let mut paths: Vec<PathBuf> = fs::read_dir(&self.dir)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        paths
            .into_iter()
            .map(|path| {
                let bytes = fs::read(&path).map_err(|source| StoreError::Io { path: path.display().to_string(), source })?;
                serde_json::from_slice(&bytes).map_err(|source| StoreError::Corrupt { path: path.display().to_string(), source })
            })
            .collect()
    }
}
