use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use mdbench_core::runner::{write_candidate, CandidateDoc, DocStatus, Sidecar};
use mdbench_core::UnitTest;
use tokio::sync::Semaphore;
use tokio::task::JoinSet;

use crate::client::{convert_page, PageConversion};
use crate::config::ConvertConfig;
use crate::error::{Error, Result};
use crate::raster::Rasterizer;

/// One page to convert.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct PageJob {
    pub doc_id: String,
    pub pdf: PathBuf,
    pub page: u32,
}

/// Distinct pages referenced by a test suite, resolved under `pdf_dir`.
pub fn pages_for_tests(tests: &[UnitTest], pdf_dir: &Path) -> Vec<PageJob> {
    let unique: BTreeMap<&str, PageJob> = tests
        .iter()
        .map(|t| (t.doc_id.as_str(), PageJob { doc_id: t.doc_id.clone(), pdf: pdf_dir.join(&t.pdf), page: t.page }))
        .collect();
    unique.into_values().collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CorpusSummary {
    pub total: usize,
    /// Pages that already had an ok output and were not fetched again.
    pub skipped: usize,
    pub ok: usize,
    pub timeout: usize,
    pub error: usize,
}

impl CorpusSummary {
    fn count(&mut self, status: DocStatus) {
        match status {
            DocStatus::Ok => self.ok += 1,
            DocStatus::Timeout => self.timeout += 1,
            DocStatus::Error => self.error += 1,
        }
    }
}

fn already_done(dir: &Path, doc_id: &str) -> bool {
    let sidecar = dir.join(format!("{doc_id}.json"));
    let done = fs::read_to_string(sidecar)
        .ok()
        .and_then(|s| serde_json::from_str::<Sidecar>(&s).ok())
        .is_some_and(|s| s.status == DocStatus::Ok);
    done && dir.join(format!("{doc_id}.md")).is_file()
}

async fn process(
    job: PageJob,
    config: Arc<ConvertConfig>,
    rasterizer: Arc<Rasterizer>,
    client: reqwest::Client,
    api_key: Option<Arc<str>>,
    out_root: Arc<Path>,
) -> Result<DocStatus> {
    let raster_job = job.clone();
    let dpi = config.dpi;
    let image = tokio::task::spawn_blocking(move || rasterizer.rasterize(&raster_job.pdf, raster_job.page, dpi))
        .await
        .expect("rasterizer task panicked");

    let conversion = match image {
        Ok(png) => convert_page(&client, &png, &config, api_key.as_deref()).await,
        Err(e) => {
            log::warn!("{}: {e}", job.doc_id);
            PageConversion {
                markdown: String::new(),
                status: DocStatus::Error,
                elapsed_seconds: None,
                attempts: 0,
                error: Some(e.to_string()),
            }
        }
    };
    let status = conversion.status;
    let doc = CandidateDoc {
        doc_id: job.doc_id,
        model_id: config.model_id(),
        markdown: conversion.markdown,
        elapsed_seconds: conversion.elapsed_seconds,
        dpi: Some(dpi),
        status,
    };
    let sidecar = Sidecar {
        elapsed_seconds: conversion.elapsed_seconds,
        dpi: Some(dpi),
        status,
        model: Some(config.model.clone()),
        prompt_sha256: Some(config.prompt_sha256()),
        attempts: Some(conversion.attempts),
        error: conversion.error,
    };
    tokio::task::spawn_blocking(move || write_candidate(&out_root, &doc, &sidecar))
        .await
        .expect("writer task panicked")?;
    Ok(status)
}

/// Converts every page with at most `config.workers` pages in flight.
///
/// Outputs land in `<out_root>/<model_id>/` as Markdown plus JSON sidecar.
/// Pages whose sidecar already reports `ok` are skipped, so an interrupted
/// run can simply be restarted. Per-page failures are recorded in sidecars;
/// only configuration and filesystem errors abort the run.
pub async fn convert_corpus(
    jobs: &[PageJob],
    config: &ConvertConfig,
    rasterizer: Arc<Rasterizer>,
    out_root: &Path,
) -> Result<CorpusSummary> {
    config.validate()?;
    let api_key: Option<Arc<str>> = config.api_key()?.map(Arc::from);
    let client = reqwest::Client::builder().build()?;
    let dir = out_root.join(config.model_id());
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

    let mut summary = CorpusSummary { total: jobs.len(), ..CorpusSummary::default() };
    let config = Arc::new(config.clone());
    let out_root: Arc<Path> = Arc::from(out_root);
    let permits = Arc::new(Semaphore::new(config.workers));
    let mut tasks = JoinSet::new();
    for job in jobs {
        if already_done(&dir, &job.doc_id) {
            summary.skipped += 1;
            continue;
        }
        let permits = Arc::clone(&permits);
        let (config, rasterizer, client, api_key, out_root) =
            (Arc::clone(&config), Arc::clone(&rasterizer), client.clone(), api_key.clone(), Arc::clone(&out_root));
        let job = job.clone();
        tasks.spawn(async move {
            let _permit = permits.acquire_owned().await.expect("semaphore closed");
            process(job, config, rasterizer, client, api_key, out_root).await
        });
    }

    let mut first_error = None;
    while let Some(joined) = tasks.join_next().await {
        match joined.expect("conversion task panicked") {
            Ok(status) => summary.count(status),
            Err(e) => {
                log::error!("{e}");
                first_error.get_or_insert(e);
            }
        }
    }
    match first_error {
        Some(e) => Err(e),
        None => Ok(summary),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use mdbench_core::{Category, TestKind};

    #[test]
    fn pages_are_deduplicated() {
        let kind = || TestKind::Presence { target: "x".into(), must_appear: true };
        let tests = vec![
            UnitTest::new("a", "b.pdf", 1, Category::Forms, kind()),
            UnitTest::new("b", "a.pdf", 0, Category::Forms, kind()),
            UnitTest::new("c", "b.pdf", 1, Category::Forms, kind()),
        ];
        let jobs = pages_for_tests(&tests, Path::new("/pdfs"));
        assert_eq!(jobs.len(), 2);
        assert_eq!(jobs[0], PageJob { doc_id: "a_p0".into(), pdf: "/pdfs/a.pdf".into(), page: 0 });
    }
}
