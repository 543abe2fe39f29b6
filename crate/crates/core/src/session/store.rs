use std::fs;
use std::path::{Path, PathBuf};

use super::{Session, SessionConfig};
use crate::{Error, Result};

/// Directory of session logs: `<id>.jsonl` holds the events and
/// `<id>.export.json` the export record once written.
#[derive(Debug, Clone)]
pub struct SessionStore {
    dir: PathBuf,
}

impl SessionStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(SessionStore { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn log_path(&self, session_id: &str) -> Result<PathBuf> {
        let valid = !session_id.is_empty()
            && session_id.len() <= 64
            && session_id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
        if !valid {
            return Err(Error::SessionNotFound(session_id.to_string()));
        }
        Ok(self.dir.join(format!("{session_id}.jsonl")))
    }

    pub fn create(
        &self,
        task_narrative: &str,
        request_narrative: &str,
        config: SessionConfig,
    ) -> Result<Session> {
        let id = uuid::Uuid::new_v4().simple().to_string();
        let path = self.log_path(&id)?;
        Session::create_with_id(id, task_narrative, request_narrative, config, Some(path))
    }

    pub fn exists(&self, session_id: &str) -> bool {
        self.log_path(session_id).is_ok_and(|p| p.is_file())
    }

    pub fn load(&self, session_id: &str) -> Result<Session> {
        let path = self.log_path(session_id)?;
        if !path.is_file() {
            return Err(Error::SessionNotFound(session_id.to_string()));
        }
        Session::open(path)
    }

    /// Ids of all stored sessions, sorted.
    pub fn list(&self) -> Result<Vec<String>> {
        let entries = fs::read_dir(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let mut ids = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(&self.dir, e))?;
            let name = entry.file_name();
            if let Some(id) = name.to_str().and_then(|n| n.strip_suffix(".jsonl")) {
                ids.push(id.to_string());
            }
        }
        ids.sort();
        Ok(ids)
    }

    pub fn load_all(&self) -> Result<Vec<Session>> {
        self.list()?.iter().map(|id| self.load(id)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn create_load_list() {
        let dir = tempfile::tempdir().unwrap();
        let store = SessionStore::open(dir.path().join("sessions")).unwrap();
        let a = store
            .create("task", "request", SessionConfig::default())
            .unwrap();
        let b = store
            .create("task", "request", SessionConfig::default())
            .unwrap();
        assert_ne!(a.id(), b.id());
        let mut ids = vec![a.id().to_string(), b.id().to_string()];
        ids.sort();
        assert_eq!(store.list().unwrap(), ids);
        let back = store.load(a.id()).unwrap();
        assert_eq!(back.snapshot(), a.snapshot());
        assert!(matches!(store.load("nope"), Err(Error::SessionNotFound(_))));
        assert!(matches!(
            store.load("../etc/passwd"),
            Err(Error::SessionNotFound(_))
        ));
    }
}
