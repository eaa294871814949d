//! Projects and revisions on disk: one directory per project and one per
//! revision holding the image, artifacts and report.
//!
//! ```text
//! <root>/projects/<project-id>/project.json
//! <root>/projects/<project-id>/revisions/<seq>/revision.json
//! <root>/projects/<project-id>/revisions/<seq>/image.<png|jpg>
//! <root>/projects/<project-id>/revisions/<seq>/artifacts/*.png
//! <root>/projects/<project-id>/revisions/<seq>/report.json
//! ```

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use vizcritique::pipeline::{DirSink, StageError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RevisionStatus {
    Queued,
    Analyzing,
    Complete,
    Failed,
}

impl RevisionStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RevisionStatus::Queued => "queued",
            RevisionStatus::Analyzing => "analyzing",
            RevisionStatus::Complete => "complete",
            RevisionStatus::Failed => "failed",
        }
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, RevisionStatus::Complete | RevisionStatus::Failed)
    }

    pub fn can_become(self, next: RevisionStatus) -> bool {
        matches!(
            (self, next),
            (RevisionStatus::Queued, RevisionStatus::Analyzing)
                | (RevisionStatus::Analyzing, RevisionStatus::Complete)
                | (RevisionStatus::Analyzing, RevisionStatus::Failed)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Project {
    pub id: String,
    pub owner: String,
    pub name: String,
    /// Revision ids in upload order. Derived from the revision directories.
    #[serde(default)]
    pub revisions: Vec<String>,
    pub created_at: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevisionRecord {
    pub id: String,
    pub project_id: String,
    pub seq: u32,
    /// Path of the uploaded image relative to the revision directory.
    pub image_ref: String,
    pub report_ref: Option<String>,
    pub status: RevisionStatus,
    pub error: Option<StageError>,
    pub created_at: String,
    pub updated_at: String,
}

pub fn revision_id(project_id: &str, seq: u32) -> String {
    format!("{project_id}-r{seq}")
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error("revision {seq} of project `{project}` already exists")]
    Exists { project: String, seq: u32 },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Persistence contract of the service. A document database can stand in
/// for the file store.
pub trait ProjectStore: Send + Sync {
    fn put_project(&self, project: &Project) -> Result<(), StoreError>;
    fn get_project(&self, id: &str) -> Result<Option<Project>, StoreError>;
    fn list_projects(&self) -> Result<Vec<Project>, StoreError>;
    fn delete_project(&self, id: &str) -> Result<bool, StoreError>;
    /// Creates a revision with its image in one step. Fails if the sequence
    /// number is taken.
    fn create_revision(&self, record: &RevisionRecord, image: &[u8]) -> Result<(), StoreError>;
    fn put_revision(&self, record: &RevisionRecord) -> Result<(), StoreError>;
    fn get_revision(&self, project: &str, seq: u32) -> Result<Option<RevisionRecord>, StoreError>;
    fn list_revisions(&self, project: &str) -> Result<Vec<RevisionRecord>, StoreError>;
    fn put_report(&self, project: &str, seq: u32, text: &str) -> Result<String, StoreError>;
    fn get_report(&self, project: &str, seq: u32) -> Result<Option<String>, StoreError>;
    /// A file under a revision directory, by relative path.
    fn read_file(&self, project: &str, seq: u32, rel: &str) -> Result<Option<Vec<u8>>, StoreError>;
    /// Absolute directory artifacts for a revision are written to.
    fn revision_dir(&self, project: &str, seq: u32) -> PathBuf;
}

#[derive(Debug, Clone)]
pub struct FsStore {
    root: PathBuf,
}

pub const REPORT_FILE: &str = "report.json";

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-')
}

impl FsStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        let projects = root.join("projects");
        fs::create_dir_all(&projects).map_err(io_err(&projects))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn project_dir(&self, id: &str) -> PathBuf {
        self.root.join("projects").join(id)
    }

    fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
        fs::rename(&tmp, path).map_err(io_err(path))
    }

    fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Option<T>, StoreError> {
        match fs::read(path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map(Some)
                .map_err(|e| StoreError::Corrupt {
                    path: path.to_path_buf(),
                    message: e.to_string(),
                }),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(io_err(path)(e)),
        }
    }

    fn json(value: &impl Serialize) -> Vec<u8> {
        let mut v = serde_json::to_vec_pretty(value).expect("records serialize");
        v.push(b'\n');
        v
    }

    fn revision_seqs(&self, project: &str) -> Result<Vec<u32>, StoreError> {
        let dir = self.project_dir(project).join("revisions");
        let entries = match fs::read_dir(&dir) {
            Ok(e) => e,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(io_err(&dir)(e)),
        };
        let mut seqs: Vec<u32> = entries
            .filter_map(|e| e.ok()?.file_name().to_str()?.parse().ok())
            .collect();
        seqs.sort_unstable();
        Ok(seqs)
    }
}

impl ProjectStore for FsStore {
    fn put_project(&self, project: &Project) -> Result<(), StoreError> {
        let dir = self.project_dir(&project.id);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let stored = Project {
            revisions: Vec::new(),
            ..project.clone()
        };
        Self::write_atomic(&dir.join("project.json"), &Self::json(&stored))
    }

    fn get_project(&self, id: &str) -> Result<Option<Project>, StoreError> {
        if !valid_id(id) {
            return Ok(None);
        }
        let Some(mut p): Option<Project> = Self::read_json(&self.project_dir(id).join("project.json"))? else {
            return Ok(None);
        };
        p.revisions = self
            .revision_seqs(id)?
            .into_iter()
            .map(|s| revision_id(id, s))
            .collect();
        Ok(Some(p))
    }

    fn list_projects(&self) -> Result<Vec<Project>, StoreError> {
        let dir = self.root.join("projects");
        let mut ids: Vec<String> = fs::read_dir(&dir)
            .map_err(io_err(&dir))?
            .filter_map(|e| e.ok()?.file_name().into_string().ok())
            .filter(|n| valid_id(n))
            .collect();
        ids.sort();
        let mut out = Vec::new();
        for id in ids {
            if let Some(p) = self.get_project(&id)? {
                out.push(p);
            }
        }
        out.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.id.cmp(&b.id)));
        Ok(out)
    }

    fn delete_project(&self, id: &str) -> Result<bool, StoreError> {
        if !valid_id(id) {
            return Ok(false);
        }
        let dir = self.project_dir(id);
        match fs::remove_dir_all(&dir) {
            Ok(()) => Ok(true),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(false),
            Err(e) => Err(io_err(&dir)(e)),
        }
    }

    fn create_revision(&self, record: &RevisionRecord, image: &[u8]) -> Result<(), StoreError> {
        let revisions = self.project_dir(&record.project_id).join("revisions");
        fs::create_dir_all(&revisions).map_err(io_err(&revisions))?;
        let final_dir = revisions.join(record.seq.to_string());
        if final_dir.exists() {
            return Err(StoreError::Exists {
                project: record.project_id.clone(),
                seq: record.seq,
            });
        }
        // Build the revision in a staging directory and rename it into place
        // so a crash never leaves a half-written revision.
        let staging = revisions.join(format!(".staging-{}", record.seq));
        let _ = fs::remove_dir_all(&staging);
        fs::create_dir_all(&staging).map_err(io_err(&staging))?;
        let image_path = staging.join(&record.image_ref);
        fs::write(&image_path, image).map_err(io_err(&image_path))?;
        let rec_path = staging.join("revision.json");
        fs::write(&rec_path, Self::json(record)).map_err(io_err(&rec_path))?;
        fs::rename(&staging, &final_dir).map_err(io_err(&final_dir))
    }

    fn put_revision(&self, record: &RevisionRecord) -> Result<(), StoreError> {
        let path = self.revision_dir(&record.project_id, record.seq).join("revision.json");
        Self::write_atomic(&path, &Self::json(record))
    }

    fn get_revision(&self, project: &str, seq: u32) -> Result<Option<RevisionRecord>, StoreError> {
        if !valid_id(project) {
            return Ok(None);
        }
        Self::read_json(&self.revision_dir(project, seq).join("revision.json"))
    }

    fn list_revisions(&self, project: &str) -> Result<Vec<RevisionRecord>, StoreError> {
        let mut out = Vec::new();
        for seq in self.revision_seqs(project)? {
            if let Some(r) = self.get_revision(project, seq)? {
                out.push(r);
            }
        }
        Ok(out)
    }

    fn put_report(&self, project: &str, seq: u32, text: &str) -> Result<String, StoreError> {
        let path = self.revision_dir(project, seq).join(REPORT_FILE);
        Self::write_atomic(&path, text.as_bytes())?;
        Ok(REPORT_FILE.to_string())
    }

    fn get_report(&self, project: &str, seq: u32) -> Result<Option<String>, StoreError> {
        let path = self.revision_dir(project, seq).join(REPORT_FILE);
        match fs::read_to_string(&path) {
            Ok(s) => Ok(Some(s)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(io_err(&path)(e)),
        }
    }

    fn read_file(&self, project: &str, seq: u32, rel: &str) -> Result<Option<Vec<u8>>, StoreError> {
        if !valid_id(project) || !vizcritique::report::valid_artifact_path(rel) {
            return Ok(None);
        }
        let path = self.revision_dir(project, seq).join(rel);
        match fs::read(&path) {
            Ok(b) => Ok(Some(b)),
            Err(e) if matches!(e.kind(), io::ErrorKind::NotFound | io::ErrorKind::IsADirectory) => Ok(None),
            Err(e) => Err(io_err(&path)(e)),
        }
    }

    fn revision_dir(&self, project: &str, seq: u32) -> PathBuf {
        self.project_dir(project).join("revisions").join(seq.to_string())
    }
}

/// Artifact sink writing into a stored revision's directory.
pub fn revision_sink(store: &dyn ProjectStore, project: &str, seq: u32) -> DirSink {
    DirSink::new(store.revision_dir(project, seq))
}
