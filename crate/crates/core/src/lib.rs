//! Scoring core for PDF-to-Markdown conversion benchmarks.
//!
//! Converter outputs are checked with small machine-checkable unit tests
//! (span presence or absence, reading order, local table relations) after a
//! configurable normalization pipeline, then aggregated per category.

pub mod checks;
mod error;
pub mod normtext;
pub mod runner;
pub mod sampler;
pub mod tabular;

pub use checks::{Category, Outcome, TestKind, TestResult, UnitTest};
pub use error::{Error, Result};
pub use normtext::{normalize, NormalizationProfile};
pub use tabular::{extract_tables, RelationKind, TableGrid};
