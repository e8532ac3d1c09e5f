//! Studies, mask handles and sessions held by a running service.

use std::collections::{BTreeMap, HashMap};
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use lesionbench_core::harness::CaseManifest;
use lesionbench_core::metrics::{self, MorphologyReport};
use lesionbench_core::pipeline::{run_pipeline, EditPoint, InitialPrompt, PipelineConfig, PipelineOutput};
use lesionbench_core::propagate::StopReason;
use lesionbench_core::segment::{Segmenter, SegmenterChoice, SegmenterConfig};
use lesionbench_core::{io, CtVolume, MaskVolume};
use serde::Serialize;

use crate::error::ApiError;

pub const SEGMENTER_ENV: &str = "LESIONBENCH_SEGMENTER";

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub segmenter: SegmenterChoice,
    pub segmenter_config: SegmenterConfig,
    pub pipeline: PipelineConfig,
    /// JSON-lines file receiving one record per finalized session.
    pub timing_log: PathBuf,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        let data_dir = data_dir.into();
        Self {
            timing_log: data_dir.join("timing_log.jsonl"),
            data_dir,
            segmenter: SegmenterChoice::Builtin,
            segmenter_config: SegmenterConfig::default(),
            pipeline: PipelineConfig::default(),
        }
    }

    /// Like [`ServiceConfig::new`], with the segmenter taken from
    /// `LESIONBENCH_SEGMENTER` (`builtin` or `external:<cmd>`) when set.
    pub fn from_env(data_dir: impl Into<PathBuf>) -> lesionbench_core::Result<Self> {
        let mut cfg = Self::new(data_dir);
        if let Ok(s) = std::env::var(SEGMENTER_ENV) {
            cfg.segmenter = SegmenterChoice::parse(&s)?;
        }
        Ok(cfg)
    }
}

pub struct Study {
    pub id: String,
    pub lesion_type: String,
    pub ct: Arc<CtVolume>,
    /// Ground-truth barycenter in voxel coordinates.
    pub locator: Option<[f64; 3]>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StudyMeta {
    pub id: String,
    pub lesion_type: String,
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub locator: Option<[f64; 3]>,
}

impl Study {
    pub fn meta(&self) -> StudyMeta {
        StudyMeta {
            id: self.id.clone(),
            lesion_type: self.lesion_type.clone(),
            dims: self.ct.dims(),
            spacing: self.ct.spacing(),
            locator: self.locator,
        }
    }
}

/// A segmentation and the prompt history that reproduces it.
pub struct MaskHandle {
    pub id: String,
    pub study: String,
    pub initial: InitialPrompt,
    pub edits: Vec<EditPoint>,
    pub mask: MaskVolume,
    pub stops: (StopReason, StopReason),
    pub report: MorphologyReport,
}

impl MaskHandle {
    /// `point`, `bbox`, or either with `_edit` once edits were applied.
    pub fn mode(&self) -> String {
        let base = match self.initial {
            InitialPrompt::Point { .. } => "point",
            InitialPrompt::BBox { .. } => "bbox",
        };
        if self.edits.is_empty() {
            base.to_string()
        } else {
            format!("{base}_edit")
        }
    }
}

pub struct Session {
    pub id: String,
    pub study: String,
    pub display_started_at: SystemTime,
    started: Instant,
    pub finalized_at: Option<SystemTime>,
    pub masks: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct TimingRecord {
    pub session: String,
    pub study: String,
    pub mask: Option<String>,
    pub duration_s: f64,
    pub mode: String,
}

struct Inner {
    cfg: ServiceConfig,
    studies: BTreeMap<String, Study>,
    masks: RwLock<HashMap<String, Arc<tokio::sync::Mutex<MaskHandle>>>>,
    sessions: Mutex<HashMap<String, Session>>,
    segmenters: Mutex<Vec<Box<dyn Segmenter>>>,
    log_lock: Mutex<()>,
    next_id: AtomicU64,
}

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

/// Seconds since the Unix epoch, millisecond resolution.
pub fn unix_seconds(t: SystemTime) -> f64 {
    let ms = t.duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0);
    ms as f64 / 1000.0
}

fn load_studies(dir: &Path) -> lesionbench_core::Result<BTreeMap<String, Study>> {
    let manifest = CaseManifest::load(dir.join("manifest.json"))?;
    let mut studies = BTreeMap::new();
    for entry in manifest.sorted() {
        let ct = io::load_volume(lesionbench_core::harness::manifest::resolve(dir, &entry.image))
            .map_err(|e| e.context(format!("study {}", entry.id)))?;
        let gt_path = lesionbench_core::harness::manifest::resolve(dir, &entry.gt_mask);
        let locator = match io::load_mask(&gt_path) {
            Ok(gt) => gt.barycenter(),
            Err(e) => {
                log::warn!("study {}: no locator ({e})", entry.id);
                None
            }
        };
        studies.insert(
            entry.id.clone(),
            Study { id: entry.id, lesion_type: entry.lesion_type, ct: Arc::new(ct), locator },
        );
    }
    Ok(studies)
}

impl AppState {
    /// Indexes `cfg.data_dir/manifest.json` and loads every study volume.
    pub fn load(cfg: ServiceConfig) -> lesionbench_core::Result<Self> {
        let studies = load_studies(&cfg.data_dir)?;
        log::info!("indexed {} studies from {}", studies.len(), cfg.data_dir.display());
        Ok(Self {
            inner: Arc::new(Inner {
                cfg,
                studies,
                masks: RwLock::new(HashMap::new()),
                sessions: Mutex::new(HashMap::new()),
                segmenters: Mutex::new(Vec::new()),
                log_lock: Mutex::new(()),
                next_id: AtomicU64::new(1),
            }),
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.inner.cfg
    }

    pub fn studies(&self) -> impl Iterator<Item = &Study> {
        self.inner.studies.values()
    }

    pub fn study(&self, id: &str) -> Result<&Study, ApiError> {
        self.inner.studies.get(id).ok_or_else(|| ApiError::not_found("study", id))
    }

    fn next_id(&self, prefix: &str) -> String {
        format!("{prefix}{}", self.inner.next_id.fetch_add(1, Ordering::Relaxed))
    }

    fn take_segmenter(&self) -> Result<Box<dyn Segmenter>, ApiError> {
        if let Some(s) = self.inner.segmenters.lock().expect("segmenter pool").pop() {
            return Ok(s);
        }
        let cfg = &self.inner.cfg;
        cfg.segmenter
            .instantiate(cfg.segmenter_config)
            .map_err(|e| ApiError::Pipeline { stage: "segmenter".into(), message: e.to_string() })
    }

    /// Runs the pipeline off the async runtime. A segmenter that failed is
    /// dropped rather than returned to the pool.
    pub async fn run(
        &self,
        study: &str,
        initial: InitialPrompt,
        edits: Vec<EditPoint>,
    ) -> Result<(PipelineOutput, MorphologyReport), ApiError> {
        let ct = self.study(study)?.ct.clone();
        let state = self.clone();
        tokio::task::spawn_blocking(move || {
            let mut seg = state.take_segmenter()?;
            let out = run_pipeline(&ct, &initial, &edits, seg.as_mut(), &state.inner.cfg.pipeline)
                .map_err(ApiError::from_pipeline)?;
            state.inner.segmenters.lock().expect("segmenter pool").push(seg);
            let report = metrics::morphology(&out.mask)
                .map_err(|e| ApiError::Pipeline { stage: "measurement".into(), message: e.to_string() })?;
            Ok((out, report))
        })
        .await
        .map_err(|e| ApiError::Pipeline { stage: "worker".into(), message: e.to_string() })?
    }

    pub fn insert_mask(&self, handle: MaskHandle) -> Arc<tokio::sync::Mutex<MaskHandle>> {
        let id = handle.id.clone();
        let h = Arc::new(tokio::sync::Mutex::new(handle));
        self.inner.masks.write().expect("mask store").insert(id, h.clone());
        h
    }

    pub fn new_mask_id(&self) -> String {
        self.next_id("mask-")
    }

    pub fn mask(&self, id: &str) -> Result<Arc<tokio::sync::Mutex<MaskHandle>>, ApiError> {
        self.inner.masks.read().expect("mask store").get(id).cloned().ok_or_else(|| ApiError::not_found("mask", id))
    }

    pub fn start_session(&self, study: &str) -> Result<(String, SystemTime), ApiError> {
        self.study(study)?;
        let id = self.next_id("session-");
        let now = SystemTime::now();
        let session = Session {
            id: id.clone(),
            study: study.to_string(),
            display_started_at: now,
            started: Instant::now(),
            finalized_at: None,
            masks: Vec::new(),
        };
        self.inner.sessions.lock().expect("session store").insert(id.clone(), session);
        Ok((id, now))
    }

    /// Checks that `session` exists and belongs to `study`.
    pub fn session_study(&self, session: &str, study: &str) -> Result<(), ApiError> {
        let sessions = self.inner.sessions.lock().expect("session store");
        let s = sessions.get(session).ok_or_else(|| ApiError::not_found("session", session))?;
        if s.study != study {
            return Err(ApiError::BadRequest(format!("session {session} is for study {}", s.study)));
        }
        Ok(())
    }

    pub fn attach_mask(&self, session: &str, study: &str, mask: &str) -> Result<(), ApiError> {
        let mut sessions = self.inner.sessions.lock().expect("session store");
        let s = sessions.get_mut(session).ok_or_else(|| ApiError::not_found("session", session))?;
        if s.study != study {
            return Err(ApiError::BadRequest(format!("session {session} is for study {}", s.study)));
        }
        s.masks.push(mask.to_string());
        Ok(())
    }

    /// Stops the session clock and appends the timing record to the log.
    /// Durations are rounded up to whole milliseconds, so they are never 0.
    pub async fn finalize(&self, session: &str, mask: Option<String>) -> Result<TimingRecord, ApiError> {
        let mode = match &mask {
            Some(m) => {
                let handle = self.mask(m)?;
                let h = handle.lock().await;
                let study = self.inner.sessions.lock().expect("session store").get(session).map(|s| s.study.clone());
                if study.as_deref().is_some_and(|s| s != h.study) {
                    return Err(ApiError::BadRequest(format!("mask {m} belongs to study {}", h.study)));
                }
                h.mode()
            }
            None => "manual".to_string(),
        };
        let record = {
            let mut sessions = self.inner.sessions.lock().expect("session store");
            let s = sessions.get_mut(session).ok_or_else(|| ApiError::not_found("session", session))?;
            if s.finalized_at.is_some() {
                return Err(ApiError::Conflict(format!("session {session} is already finalized")));
            }
            let micros = s.started.elapsed().as_micros();
            let ms = micros.div_ceil(1000).max(1);
            s.finalized_at = Some(s.display_started_at + std::time::Duration::from_millis(ms as u64));
            TimingRecord { session: s.id.clone(), study: s.study.clone(), mask, duration_s: ms as f64 / 1000.0, mode }
        };
        self.append_timing(&record)?;
        Ok(record)
    }

    fn append_timing(&self, record: &TimingRecord) -> Result<(), ApiError> {
        let path = &self.inner.cfg.timing_log;
        let _guard = self.inner.log_lock.lock().expect("timing log");
        let line = serde_json::to_string(record).expect("record serializes");
        OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .and_then(|mut f| writeln!(f, "{line}"))
            .map_err(|e| ApiError::Pipeline { stage: "timing log".into(), message: format!("{}: {e}", path.display()) })
    }
}
