//! Drives OpenAI-compatible vision endpoints over rasterized PDF pages and
//! stores their Markdown in the candidate layout read by the scorer.

mod client;
mod config;
mod corpus;
mod error;
mod raster;
mod sweep;

pub use client::{convert_page, PageConversion};
pub use config::{ConvertConfig, ReasoningEffort, DEFAULT_PROMPT};
pub use corpus::{convert_corpus, pages_for_tests, CorpusSummary, PageJob};
pub use error::{Error, Result};
pub use raster::{png_dimensions, Rasterizer, DEFAULT_RASTER_COMMAND};
pub use sweep::{dpi_sweep, write_sweep_csv, SweepRow};
