//! HTTP backend for checking unit tests against converter output, fixing
//! them, and labeling failures.
//!
//! Tests come from a JSONL suite that is never rewritten; reviewer edits go
//! to an append-only log replayed at startup, and failure labels to a
//! second JSONL log.

mod api;
mod audit;
mod diff;
mod error;
mod store;
mod views;

use std::path::PathBuf;
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};

use mdbench_gateway::Rasterizer;

pub use api::{router, ApiError, AppState, ListQuery, ModelQuery, REVIEW_DPI};
pub use audit::{audit_summary, AuditSummary, LabelCount, Responsible, ResponsibleShare, ReviewRecord, ReviewStore};
pub use diff::{diff_chars, diff_spans, DiffHunk, HunkKind};
pub use error::{Error, Result};
pub use store::{EditRecord, ProfilePatch, TestPatch, TestStore};
pub use views::{field_diffs, CandidateView, DiffView, FieldDiff, TestDetail, TestView};

/// Where the service reads and writes.
#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub tests: PathBuf,
    pub candidates: PathBuf,
    /// Defaults to `<tests stem>.edits.jsonl` next to the suite.
    pub edits: Option<PathBuf>,
    /// Defaults to `<tests stem>.reviews.jsonl` next to the suite.
    pub reviews: Option<PathBuf>,
    pub pdf_dir: Option<PathBuf>,
    /// Rasterizer command template; page images need this and `pdf_dir`.
    pub raster_command: Option<String>,
    pub raster_cache: Option<PathBuf>,
}

impl ServiceConfig {
    pub fn new(tests: impl Into<PathBuf>, candidates: impl Into<PathBuf>) -> Self {
        ServiceConfig {
            tests: tests.into(),
            candidates: candidates.into(),
            edits: None,
            reviews: None,
            pdf_dir: None,
            raster_command: None,
            raster_cache: None,
        }
    }

    fn sibling(&self, suffix: &str) -> PathBuf {
        let stem = self.tests.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        self.tests.with_file_name(format!("{stem}.{suffix}.jsonl"))
    }
}

impl AppState {
    pub fn open(config: &ServiceConfig) -> Result<Self> {
        let edits = config.edits.clone().unwrap_or_else(|| config.sibling("edits"));
        let reviews = config.reviews.clone().unwrap_or_else(|| config.sibling("reviews"));
        let rasterizer = match &config.raster_command {
            Some(command) => {
                let cache = config.raster_cache.clone().unwrap_or_else(|| std::env::temp_dir().join("mdbench-raster"));
                let r = Rasterizer::new(command, cache).map_err(|e| Error::Rejected(e.to_string()))?;
                Some(Arc::new(r))
            }
            None => None,
        };
        let tests = TestStore::open(&config.tests, edits)?;
        log::info!("serving {} tests from {}", tests.len(), config.tests.display());
        Ok(AppState {
            tests: RwLock::new(tests),
            reviews: Mutex::new(ReviewStore::open(reviews)?),
            candidates: config.candidates.clone(),
            pdf_dir: config.pdf_dir.clone(),
            rasterizer,
        })
    }
}

/// Serves the API on `listener` until the task is dropped.
pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(Arc::new(state))).await
}
