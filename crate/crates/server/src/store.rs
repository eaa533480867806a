//! Flat-file persistence under a data directory.
//!
//! ```text
//! <root>/schemas.json          schema library
//! <root>/sessions/<id>.json    event log of one session
//! ```
//!
//! Sessions are stored as their event logs and rebuilt by replay on load.
//! Every write goes to a temporary file in the target directory and is then
//! renamed over the destination.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use dw_core::consult::{Event, Session};
use dw_core::schema::SchemaLibrary;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const LIBRARY_FILE: &str = "schemas.json";
pub const SESSIONS_DIR: &str = "sessions";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("storage error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("session `{0}` not found")]
    NotFound(String),
    #[error("stored document {path} is corrupt: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error(transparent)]
    Engine(#[from] dw_core::Error),
}

#[derive(Serialize, Deserialize)]
struct SessionDocument {
    id: String,
    events: Vec<Event>,
}

#[derive(Debug)]
pub struct SessionStore {
    root: PathBuf,
    library: SchemaLibrary,
}

fn io_error(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Session ids become file names, so only a conservative alphabet is used.
fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 64
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

impl SessionStore {
    /// Opens (creating if needed) a store. A missing library file is seeded
    /// with the built-in library.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        let sessions = root.join(SESSIONS_DIR);
        fs::create_dir_all(&sessions).map_err(io_error(&sessions))?;
        let library_path = root.join(LIBRARY_FILE);
        let library = if library_path.exists() {
            let text = fs::read_to_string(&library_path).map_err(io_error(&library_path))?;
            SchemaLibrary::from_json(&text)?
        } else {
            let library = SchemaLibrary::builtin();
            write_atomic(&library_path, library.to_json().as_bytes())?;
            library
        };
        Ok(SessionStore { root, library })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn library(&self) -> &SchemaLibrary {
        &self.library
    }

    fn session_path(&self, id: &str) -> PathBuf {
        self.root.join(SESSIONS_DIR).join(format!("{id}.json"))
    }

    pub fn save(&self, session: &Session) -> Result<(), StoreError> {
        let doc = SessionDocument {
            id: session.id.clone(),
            events: session.events.clone(),
        };
        let mut text = serde_json::to_vec_pretty(&doc).expect("event logs always serialize");
        text.push(b'\n');
        write_atomic(&self.session_path(&session.id), &text)
    }

    pub fn load(&self, id: &str) -> Result<Session, StoreError> {
        if !valid_id(id) {
            return Err(StoreError::NotFound(id.to_string()));
        }
        let path = self.session_path(id);
        let text = match fs::read_to_string(&path) {
            Ok(text) => text,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(StoreError::NotFound(id.to_string()))
            }
            Err(e) => return Err(io_error(&path)(e)),
        };
        let doc: SessionDocument =
            serde_json::from_str(&text).map_err(|e| StoreError::Corrupt {
                path: path.clone(),
                message: e.to_string(),
            })?;
        Ok(Session::replay(doc.id, doc.events, &self.library)?)
    }

    /// Ids of all stored sessions, sorted.
    pub fn list(&self) -> Result<Vec<String>, StoreError> {
        let dir = self.root.join(SESSIONS_DIR);
        let mut ids = Vec::new();
        for entry in fs::read_dir(&dir).map_err(io_error(&dir))? {
            let path = entry.map_err(io_error(&dir))?.path();
            if path.extension().is_some_and(|e| e == "json") {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    if valid_id(stem) {
                        ids.push(stem.to_string());
                    }
                }
            }
        }
        ids.sort();
        Ok(ids)
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_error(dir))?;
    tmp.write_all(bytes).map_err(io_error(tmp.path()))?;
    tmp.as_file().sync_all().map_err(io_error(path))?;
    tmp.persist(path).map_err(|e| io_error(path)(e.error))?;
    Ok(())
}
