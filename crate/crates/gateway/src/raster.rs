use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::atomic::{AtomicUsize, Ordering};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Poppler invocation writing `<out_stem>.png`.
pub const DEFAULT_RASTER_COMMAND: &str = "pdftoppm -png -r {dpi} -f {page1} -l {page1} -singlefile {pdf} {out_stem}";

const PNG_SIGNATURE: &[u8] = b"\x89PNG\r\n\x1a\n";

/// Renders PDF pages through an external command and caches the PNGs.
///
/// The command template is split on whitespace; each argument may contain
/// the placeholders `{pdf}`, `{page}` (0-based), `{page1}` (1-based),
/// `{dpi}`, `{out}` (target PNG path) and `{out_stem}` (`{out}` without
/// the `.png` suffix).
#[derive(Debug)]
pub struct Rasterizer {
    template: Vec<String>,
    cache_dir: PathBuf,
    invocations: AtomicUsize,
}

impl Rasterizer {
    pub fn new(command: &str, cache_dir: impl Into<PathBuf>) -> Result<Self> {
        let template: Vec<String> = command.split_whitespace().map(str::to_owned).collect();
        if template.is_empty() {
            return Err(Error::Config("rasterizer command is empty".into()));
        }
        if !template.iter().any(|a| a.contains("{out}") || a.contains("{out_stem}")) {
            return Err(Error::Config("rasterizer command must mention {out} or {out_stem}".into()));
        }
        Ok(Rasterizer { template, cache_dir: cache_dir.into(), invocations: AtomicUsize::new(0) })
    }

    /// Number of times the external command has run.
    pub fn invocations(&self) -> usize {
        self.invocations.load(Ordering::Relaxed)
    }

    /// Cache location for `(pdf, page, dpi)`.
    pub fn cache_path(&self, pdf: &Path, page: u32, dpi: u32) -> PathBuf {
        let absolute = fs::canonicalize(pdf).unwrap_or_else(|_| pdf.to_path_buf());
        let digest = hex::encode(Sha256::digest(absolute.to_string_lossy().as_bytes()));
        let stem = pdf.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        self.cache_dir.join(format!("{stem}-{}-p{page}-{dpi}dpi.png", &digest[..12]))
    }

    /// PNG bytes of one page, rendering it on a cache miss.
    pub fn rasterize(&self, pdf: &Path, page: u32, dpi: u32) -> Result<Vec<u8>> {
        let cached = self.cache_path(pdf, page, dpi);
        if let Ok(bytes) = fs::read(&cached) {
            if bytes.starts_with(PNG_SIGNATURE) {
                return Ok(bytes);
            }
            log::warn!("discarding corrupt cache entry {}", cached.display());
        }
        let fail = |message: String| Error::Rasterize { pdf: pdf.to_path_buf(), page, message };
        if !pdf.is_file() {
            return Err(fail("no such file".into()));
        }
        fs::create_dir_all(&self.cache_dir).map_err(|e| Error::io(&self.cache_dir, e))?;

        // Unique scratch name so concurrent renders of one page never collide.
        let run = self.invocations.fetch_add(1, Ordering::Relaxed);
        let scratch = format!("{}.tmp-{}-{run}", cached.file_stem().unwrap().to_string_lossy(), std::process::id());
        let tmp_stem = self.cache_dir.join(&scratch);
        let tmp = self.cache_dir.join(format!("{scratch}.png"));
        let fill = |arg: &str| {
            arg.replace("{pdf}", &pdf.to_string_lossy())
                .replace("{page1}", &(page + 1).to_string())
                .replace("{page}", &page.to_string())
                .replace("{dpi}", &dpi.to_string())
                .replace("{out_stem}", &tmp_stem.to_string_lossy())
                .replace("{out}", &tmp.to_string_lossy())
        };
        let args: Vec<String> = self.template.iter().map(|a| fill(a)).collect();
        let output = Command::new(&args[0])
            .args(&args[1..])
            .output()
            .map_err(|e| fail(format!("cannot run `{}`: {e}", args[0])))?;
        if !output.status.success() {
            let _ = fs::remove_file(&tmp);
            let stderr = String::from_utf8_lossy(&output.stderr);
            return Err(fail(format!("`{}` exited with {}: {}", args[0], output.status, stderr.trim())));
        }
        let bytes = fs::read(&tmp).map_err(|e| fail(format!("no image written: {e}")))?;
        if !bytes.starts_with(PNG_SIGNATURE) {
            let _ = fs::remove_file(&tmp);
            return Err(fail("output is not a PNG".into()));
        }
        fs::rename(&tmp, &cached).map_err(|e| Error::io(&cached, e))?;
        Ok(bytes)
    }
}

/// Pixel width and height of a PNG image.
pub fn png_dimensions(bytes: &[u8]) -> Option<(u32, u32)> {
    let reader = png::Decoder::new(Cursor::new(bytes)).read_info().ok()?;
    let info = reader.info();
    Some((info.width, info.height))
}
