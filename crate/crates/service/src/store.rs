//! Session records and their on-disk layout.
//!
//! Each session lives in `<workdir>/sessions/<id>/` as `session.json` (the
//! handle), `trajectory.csv` and, once fitted, `fits.json`. The trajectory and
//! fits files are the same formats the CLI reads and writes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use nns_core::io::{self, FitsDocument};
use nns_core::{FitConfig, FrameOutcome, Stage, TrajectorySession};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionStatus {
    Uploaded,
    Fitted,
    Error,
}

impl SessionStatus {
    pub fn name(self) -> &'static str {
        match self {
            SessionStatus::Uploaded => "uploaded",
            SessionStatus::Fitted => "fitted",
            SessionStatus::Error => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub stage: Stage,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionHandle {
    pub session_id: String,
    pub status: SessionStatus,
    pub created_at_unix_ms: u64,
    pub source_id: String,
    pub model: String,
    pub frame_count: usize,
    pub sample_rate_hint: f64,
    pub fit: FitConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fitted_frames: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<Failure>,
}

impl SessionHandle {
    /// Moves to `next`; only uploaded → fitted and uploaded → error are allowed.
    fn advance(&mut self, next: SessionStatus) -> bool {
        let ok = self.status == SessionStatus::Uploaded && next != SessionStatus::Uploaded;
        if ok {
            self.status = next;
        }
        ok
    }
}

#[derive(Debug, Clone)]
pub struct SessionRecord {
    pub handle: SessionHandle,
    pub fits: Option<Arc<Vec<FrameOutcome>>>,
}

#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    sessions: RwLock<BTreeMap<String, SessionRecord>>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
    std::fs::write(path, text + "\n")
}

impl Store {
    /// Opens `workdir`, reloading any sessions saved there. Sessions that were
    /// still fitting when the previous process stopped are marked failed.
    pub fn open(workdir: &Path) -> std::io::Result<Self> {
        let root = workdir.join("sessions");
        std::fs::create_dir_all(&root)?;
        let mut sessions = BTreeMap::new();
        let mut dirs: Vec<_> = std::fs::read_dir(&root)?.filter_map(|e| e.ok()).map(|e| e.path()).collect();
        dirs.sort();
        for dir in dirs {
            let Ok(text) = std::fs::read_to_string(dir.join("session.json")) else {
                continue;
            };
            let Ok(mut handle) = serde_json::from_str::<SessionHandle>(&text) else {
                continue;
            };
            let mut fits = None;
            if handle.status == SessionStatus::Fitted {
                match std::fs::read_to_string(dir.join("fits.json"))
                    .map_err(nns_core::Error::from)
                    .and_then(|t| io::parse_fits_str(&t))
                {
                    Ok(doc) => fits = Some(Arc::new(doc.frames)),
                    Err(e) => {
                        handle.status = SessionStatus::Error;
                        handle.error = Some(Failure {
                            stage: Stage::Load,
                            message: format!("stored fits unreadable: {e}"),
                        });
                    }
                }
            } else if handle.status == SessionStatus::Uploaded {
                handle.advance(SessionStatus::Error);
                handle.error = Some(Failure {
                    stage: Stage::Fit,
                    message: "fitting was interrupted".into(),
                });
                write_json(&dir.join("session.json"), &handle)?;
            }
            sessions.insert(handle.session_id.clone(), SessionRecord { handle, fits });
        }
        Ok(Self {
            root,
            sessions: RwLock::new(sessions),
        })
    }

    fn dir(&self, id: &str) -> PathBuf {
        self.root.join(id)
    }

    pub fn get(&self, id: &str) -> Option<SessionRecord> {
        self.sessions.read().expect("store lock").get(id).cloned()
    }

    pub fn insert(&self, handle: SessionHandle, session: &TrajectorySession) -> std::io::Result<()> {
        let dir = self.dir(&handle.session_id);
        std::fs::create_dir_all(&dir)?;
        io::write_trajectory(session, dir.join("trajectory.csv")).map_err(std::io::Error::other)?;
        write_json(&dir.join("session.json"), &handle)?;
        self.sessions
            .write()
            .expect("store lock")
            .insert(handle.session_id.clone(), SessionRecord { handle, fits: None });
        Ok(())
    }

    /// Records the outcome of fitting session `id`.
    pub fn finish(&self, id: &str, outcome: Result<FitsDocument, Failure>) -> std::io::Result<()> {
        let dir = self.dir(id);
        let mut map = self.sessions.write().expect("store lock");
        let Some(rec) = map.get_mut(id) else {
            return Ok(());
        };
        let mut handle = rec.handle.clone();
        let mut fits = None;
        let outcome = match outcome {
            Ok(doc) => std::fs::write(dir.join("fits.json"), io::fits_to_string(&doc))
                .map(|_| doc)
                .map_err(|e| Failure {
                    stage: Stage::Write,
                    message: e.to_string(),
                }),
            Err(f) => Err(f),
        };
        match outcome {
            Ok(doc) => {
                if handle.advance(SessionStatus::Fitted) {
                    handle.fitted_frames = Some(doc.frames.iter().filter(|f| f.fit().is_some()).count());
                    fits = Some(Arc::new(doc.frames));
                }
            }
            Err(failure) => {
                if handle.advance(SessionStatus::Error) {
                    handle.error = Some(failure);
                }
            }
        }
        write_json(&dir.join("session.json"), &handle)?;
        rec.handle = handle;
        if fits.is_some() {
            rec.fits = fits;
        }
        Ok(())
    }
}
