//! Project operations and the background analysis queue.

use std::collections::HashMap;
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use thiserror::Error;
use tracing::{info, warn};

use vizcritique::ingest::{load_chart_image, IngestError};
use vizcritique::pipeline::{run_analysis, AnalysisRequest, Analyzer, Stage, StageError};
use vizcritique::report::{deserialize_report, serialize_report, DesignReport};
use vizcritique::tracker::{archive_pair, ArchiveError, ReportArchive};

use crate::store::{revision_id, revision_sink, Project, ProjectStore, RevisionRecord, RevisionStatus, StoreError};

pub const DEFAULT_WORKERS: usize = 2;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("{0}")]
    Validation(String),
    #[error("unknown project `{0}`")]
    UnknownProject(String),
    #[error("project `{project}` has no revision {seq}")]
    UnknownRevision { project: String, seq: u32 },
    #[error("revision {seq} of project `{project}` is {status}")]
    NotReady {
        project: String,
        seq: u32,
        status: &'static str,
    },
    #[error(transparent)]
    Image(#[from] IngestError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("stored report is unreadable: {0}")]
    CorruptReport(String),
}

impl From<ArchiveError> for ServiceError {
    fn from(e: ArchiveError) -> Self {
        match e {
            ArchiveError::UnknownRevision { project, seq } => ServiceError::UnknownRevision { project, seq },
            ArchiveError::NotReady { project, seq } => ServiceError::NotReady {
                project,
                seq,
                status: "not complete",
            },
            ArchiveError::Store(m) => ServiceError::CorruptReport(m),
        }
    }
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

type Job = (String, u32);

struct Inner {
    store: Arc<dyn ProjectStore>,
    analyzer: Arc<Analyzer>,
    /// Serializes writes per project.
    project_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    /// Bumped whenever a revision reaches a terminal status.
    finished: (Mutex<u64>, Condvar),
}

impl Inner {
    fn project_lock(&self, id: &str) -> Arc<Mutex<()>> {
        self.project_locks
            .lock()
            .unwrap()
            .entry(id.to_string())
            .or_default()
            .clone()
    }

    fn notify_finished(&self) {
        *self.finished.0.lock().unwrap() += 1;
        self.finished.1.notify_all();
    }

    /// Blocks until every earlier revision of the project is terminal, so
    /// the tracker always sees its predecessor.
    fn wait_for_predecessors(&self, project: &str, seq: u32) -> Result<(), StoreError> {
        let mut gen = self.finished.0.lock().unwrap();
        loop {
            let pending = self
                .store
                .list_revisions(project)?
                .iter()
                .any(|r| r.seq < seq && !r.status.is_terminal());
            if !pending {
                return Ok(());
            }
            gen = self.finished.1.wait_timeout(gen, Duration::from_millis(200)).unwrap().0;
        }
    }

    fn previous_report(&self, project: &str, seq: u32) -> Option<DesignReport> {
        let revisions = self.store.list_revisions(project).ok()?;
        let prev = revisions
            .iter()
            .filter(|r| r.seq < seq && r.status == RevisionStatus::Complete)
            .max_by_key(|r| r.seq)?;
        let text = self.store.get_report(project, prev.seq).ok()??;
        deserialize_report(&text).ok()
    }

    fn set_status(
        &self,
        project: &str,
        seq: u32,
        status: RevisionStatus,
        update: impl FnOnce(&mut RevisionRecord),
    ) -> Result<Option<RevisionRecord>, StoreError> {
        let lock = self.project_lock(project);
        let _guard = lock.lock().unwrap();
        let Some(mut rec) = self.store.get_revision(project, seq)? else {
            return Ok(None);
        };
        if !rec.status.can_become(status) {
            warn!(
                project,
                seq,
                from = rec.status.as_str(),
                to = status.as_str(),
                "ignored status change"
            );
            return Ok(None);
        }
        rec.status = status;
        rec.updated_at = now();
        update(&mut rec);
        self.store.put_revision(&rec)?;
        Ok(Some(rec))
    }

    fn analyze(&self, project: &str, seq: u32) {
        if let Err(e) = self.wait_for_predecessors(project, seq) {
            warn!(project, seq, error = %e, "revision vanished before analysis");
            return;
        }
        let rec = match self.set_status(project, seq, RevisionStatus::Analyzing, |_| {}) {
            Ok(Some(r)) => r,
            Ok(None) => return,
            Err(e) => {
                warn!(project, seq, error = %e, "cannot start analysis");
                return;
            }
        };
        let started = Instant::now();
        let outcome = self.run(project, &rec);
        let result = match outcome {
            Ok(report_ref) => self.set_status(project, seq, RevisionStatus::Complete, |r| {
                r.report_ref = Some(report_ref);
            }),
            Err(err) => {
                warn!(project, seq, stage = %err.stage, message = %err.message, "analysis failed");
                self.set_status(project, seq, RevisionStatus::Failed, |r| r.error = Some(err))
            }
        };
        if let Err(e) = result {
            warn!(project, seq, error = %e, "cannot record analysis outcome");
        }
        info!(
            project,
            seq,
            elapsed_ms = started.elapsed().as_millis() as u64,
            "analysis finished"
        );
        self.notify_finished();
    }

    fn run(&self, project: &str, rec: &RevisionRecord) -> Result<String, StageError> {
        let seq = rec.seq;
        let image = self
            .store
            .read_file(project, seq, &rec.image_ref)
            .map_err(|e| StageError::new(Stage::Ingest, e))?
            .ok_or_else(|| StageError::new(Stage::Ingest, "stored image is missing"))?;
        let format = rec.image_ref.rsplit('.').next().unwrap_or("");
        let previous = self.previous_report(project, seq);
        let sink = revision_sink(self.store.as_ref(), project, seq);
        let revision = seq.to_string();
        let request = AnalysisRequest {
            revision_id: &revision,
            created_at: &rec.created_at,
            image_bytes: &image,
            format,
        };
        let report = run_analysis(&request, previous.as_ref(), &self.analyzer, &sink)?;
        self.store
            .put_report(project, seq, &serialize_report(&report))
            .map_err(|e| StageError::new(Stage::Artifacts, e))
    }
}

/// The project service: synchronous operations plus a pool of analysis
/// workers fed by a FIFO queue.
pub struct ProjectService {
    inner: Arc<Inner>,
    queue: Mutex<Option<Sender<Job>>>,
    workers: Mutex<Vec<JoinHandle<()>>>,
}

impl ProjectService {
    /// Starts `workers` analysis threads and re-enqueues revisions left
    /// queued by a previous run. Revisions left analyzing are marked failed.
    pub fn start(store: Arc<dyn ProjectStore>, analyzer: Arc<Analyzer>, workers: usize) -> Result<Self, StoreError> {
        let inner = Arc::new(Inner {
            store,
            analyzer,
            project_locks: Mutex::default(),
            finished: (Mutex::new(0), Condvar::new()),
        });
        let (tx, rx) = mpsc::channel::<Job>();
        let rx = Arc::new(Mutex::new(rx));
        let handles = (0..workers.max(1))
            .map(|i| {
                let inner = inner.clone();
                let rx: Arc<Mutex<Receiver<Job>>> = rx.clone();
                std::thread::Builder::new()
                    .name(format!("analysis-{i}"))
                    .spawn(move || loop {
                        let job = rx.lock().unwrap().recv();
                        match job {
                            Ok((project, seq)) => inner.analyze(&project, seq),
                            Err(_) => return,
                        }
                    })
                    .expect("spawn analysis worker")
            })
            .collect();
        let service = Self {
            inner,
            queue: Mutex::new(Some(tx)),
            workers: Mutex::new(handles),
        };
        service.recover()?;
        Ok(service)
    }

    fn recover(&self) -> Result<(), StoreError> {
        for p in self.inner.store.list_projects()? {
            for r in self.inner.store.list_revisions(&p.id)? {
                match r.status {
                    RevisionStatus::Queued => self.enqueue(&p.id, r.seq),
                    RevisionStatus::Analyzing => {
                        let mut r = r;
                        r.status = RevisionStatus::Failed;
                        r.error = Some(StageError::new(Stage::Ingest, "interrupted by a service restart"));
                        r.updated_at = now();
                        self.inner.store.put_revision(&r)?;
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    fn enqueue(&self, project: &str, seq: u32) {
        if let Some(tx) = self.queue.lock().unwrap().as_ref() {
            let _ = tx.send((project.to_string(), seq));
        }
    }

    pub fn store(&self) -> &dyn ProjectStore {
        self.inner.store.as_ref()
    }

    pub fn create_project(&self, owner: &str, name: &str) -> Result<Project, ServiceError> {
        let name = name.trim();
        if name.is_empty() {
            return Err(ServiceError::Validation("project name must not be empty".into()));
        }
        if owner.trim().is_empty() {
            return Err(ServiceError::Validation("owner must not be empty".into()));
        }
        let project = Project {
            id: uuid::Uuid::new_v4().simple().to_string(),
            owner: owner.to_string(),
            name: name.to_string(),
            revisions: Vec::new(),
            created_at: now(),
        };
        self.inner.store.put_project(&project)?;
        Ok(project)
    }

    /// The project if it exists and belongs to `owner`.
    pub fn project(&self, owner: &str, id: &str) -> Result<Project, ServiceError> {
        match self.inner.store.get_project(id)? {
            Some(p) if p.owner == owner => Ok(p),
            _ => Err(ServiceError::UnknownProject(id.to_string())),
        }
    }

    pub fn list_projects(&self, owner: &str) -> Result<Vec<Project>, ServiceError> {
        Ok(self
            .inner
            .store
            .list_projects()?
            .into_iter()
            .filter(|p| p.owner == owner)
            .collect())
    }

    pub fn delete_project(&self, owner: &str, id: &str) -> Result<(), ServiceError> {
        self.project(owner, id)?;
        let lock = self.inner.project_lock(id);
        let _guard = lock.lock().unwrap();
        self.inner.store.delete_project(id)?;
        Ok(())
    }

    /// Validates and stores the image as the next revision, then queues its
    /// analysis. Returns without waiting for the analysis.
    pub fn upload_revision(
        &self,
        owner: &str,
        project: &str,
        image: &[u8],
        format: &str,
    ) -> Result<RevisionRecord, ServiceError> {
        self.project(owner, project)?;
        let decoded = load_chart_image(image, format)?;
        let record = {
            let lock = self.inner.project_lock(project);
            let _guard = lock.lock().unwrap();
            // The project may have been deleted while we decoded.
            self.project(owner, project)?;
            let seq = self
                .inner
                .store
                .list_revisions(project)?
                .last()
                .map_or(1, |r| r.seq + 1);
            let ts = now();
            let record = RevisionRecord {
                id: revision_id(project, seq),
                project_id: project.to_string(),
                seq,
                image_ref: format!("image.{}", decoded.source_format().extension()),
                report_ref: None,
                status: RevisionStatus::Queued,
                error: None,
                created_at: ts.clone(),
                updated_at: ts,
            };
            self.inner.store.create_revision(&record, image)?;
            // Enqueue under the lock so jobs of a project reach the queue in
            // seq order; workers wait on predecessors and rely on it.
            self.enqueue(project, record.seq);
            record
        };
        Ok(record)
    }

    pub fn list_revisions(&self, owner: &str, project: &str) -> Result<Vec<RevisionRecord>, ServiceError> {
        self.project(owner, project)?;
        Ok(self.inner.store.list_revisions(project)?)
    }

    pub fn revision(&self, owner: &str, project: &str, seq: u32) -> Result<RevisionRecord, ServiceError> {
        self.project(owner, project)?;
        self.inner
            .store
            .get_revision(project, seq)?
            .ok_or_else(|| ServiceError::UnknownRevision {
                project: project.to_string(),
                seq,
            })
    }

    /// The stored canonical report text.
    pub fn report_text(&self, owner: &str, project: &str, seq: u32) -> Result<String, ServiceError> {
        let rec = self.revision(owner, project, seq)?;
        if rec.status != RevisionStatus::Complete {
            return Err(ServiceError::NotReady {
                project: project.to_string(),
                seq,
                status: rec.status.as_str(),
            });
        }
        self.inner
            .store
            .get_report(project, seq)?
            .ok_or_else(|| ServiceError::CorruptReport(format!("report of revision {seq} is missing")))
    }

    pub fn report(&self, owner: &str, project: &str, seq: u32) -> Result<DesignReport, ServiceError> {
        let text = self.report_text(owner, project, seq)?;
        deserialize_report(&text).map_err(|e| ServiceError::CorruptReport(e.to_string()))
    }

    pub fn archive(
        &self,
        owner: &str,
        project: &str,
        a: u32,
        b: u32,
    ) -> Result<(DesignReport, DesignReport), ServiceError> {
        self.project(owner, project)?;
        let archive = OwnedArchive { service: self, owner };
        Ok(archive_pair(&archive, project, a, b)?)
    }

    /// A file of a revision the owner can see.
    pub fn revision_file(
        &self,
        owner: &str,
        project: &str,
        seq: u32,
        rel: &str,
    ) -> Result<Option<Vec<u8>>, ServiceError> {
        self.revision(owner, project, seq)?;
        Ok(self.inner.store.read_file(project, seq, rel)?)
    }

    /// Waits until the revision is terminal or the timeout passes.
    pub fn wait_for(&self, project: &str, seq: u32, timeout: Duration) -> Option<RevisionRecord> {
        let deadline = Instant::now() + timeout;
        let mut gen = self.inner.finished.0.lock().unwrap();
        loop {
            match self.inner.store.get_revision(project, seq) {
                Ok(Some(r)) if r.status.is_terminal() => return Some(r),
                Ok(None) | Err(_) => return None,
                _ => {}
            }
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                return None;
            }
            gen = self
                .inner
                .finished
                .1
                .wait_timeout(gen, left.min(Duration::from_millis(100)))
                .unwrap()
                .0;
        }
    }

    /// Stops accepting jobs and waits for queued ones to finish.
    pub fn shutdown(&self) {
        self.queue.lock().unwrap().take();
        for h in self.workers.lock().unwrap().drain(..) {
            let _ = h.join();
        }
    }
}

impl Drop for ProjectService {
    fn drop(&mut self) {
        self.shutdown();
    }
}

struct OwnedArchive<'a> {
    service: &'a ProjectService,
    owner: &'a str,
}

impl ReportArchive for OwnedArchive<'_> {
    fn load_report(&self, project: &str, seq: u32) -> Result<DesignReport, ArchiveError> {
        self.service.report(self.owner, project, seq).map_err(|e| match e {
            ServiceError::UnknownRevision { project, seq } => ArchiveError::UnknownRevision { project, seq },
            ServiceError::NotReady { project, seq, .. } => ArchiveError::NotReady { project, seq },
            other => ArchiveError::Store(other.to_string()),
        })
    }
}
