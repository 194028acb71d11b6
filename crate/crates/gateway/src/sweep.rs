use std::path::Path;
use std::sync::Arc;

use mdbench_core::runner::{load_candidates, DocStatus};
use serde::Serialize;

use crate::config::ConvertConfig;
use crate::corpus::{convert_corpus, PageJob};
use crate::error::{Error, Result};
use crate::raster::Rasterizer;

/// Throughput at one resolution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub dpi: u32,
    pub model_id: String,
    pub pages: usize,
    pub ok: usize,
    pub timeout: usize,
    pub error: usize,
    /// Mean elapsed time over ok pages.
    pub seconds_per_page: Option<f64>,
}

/// Runs the corpus once per resolution, each into `<model_id>_dpi<N>`.
pub async fn dpi_sweep(
    jobs: &[PageJob],
    config: &ConvertConfig,
    rasterizer: Arc<Rasterizer>,
    out_root: &Path,
    dpis: &[u32],
) -> Result<Vec<SweepRow>> {
    if dpis.is_empty() {
        return Err(Error::Config("no resolution given for the sweep".into()));
    }
    let base_id = config.model_id();
    let mut rows = Vec::with_capacity(dpis.len());
    for &dpi in dpis {
        let mut run = config.clone();
        run.dpi = dpi;
        run.model_id = Some(format!("{base_id}_dpi{dpi}"));
        convert_corpus(jobs, &run, Arc::clone(&rasterizer), out_root).await?;

        let model_id = run.model_id();
        let docs = load_candidates(out_root, &model_id)?;
        let mut row =
            SweepRow { dpi, model_id, pages: docs.len(), ok: 0, timeout: 0, error: 0, seconds_per_page: None };
        let mut timings = Vec::new();
        for doc in docs.values() {
            match doc.status {
                DocStatus::Ok => {
                    row.ok += 1;
                    timings.extend(doc.elapsed_seconds);
                }
                DocStatus::Timeout => row.timeout += 1,
                DocStatus::Error => row.error += 1,
            }
        }
        if !timings.is_empty() {
            row.seconds_per_page = Some(timings.iter().sum::<f64>() / timings.len() as f64);
        }
        log::info!("dpi {dpi}: {} ok of {} pages", row.ok, row.pages);
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_sweep_csv(rows: &[SweepRow], path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}
