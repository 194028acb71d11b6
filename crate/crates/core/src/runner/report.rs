use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::checks::{Category, TestResult};
use crate::error::{Error, Result};
use crate::normtext::NORMALIZATION_VERSION;

use super::io::{write_atomic, CandidateDoc, DocStatus};

/// How the "all categories" score combines categories.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// Unweighted mean of the per-category scores.
    #[default]
    Macro,
    /// Pass fraction over all tests.
    Micro,
}

impl FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "macro" => Ok(Aggregation::Macro),
            "micro" => Ok(Aggregation::Micro),
            other => Err(Error::InvalidArgument(format!("aggregation must be macro or micro, got `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryScore {
    pub tests_total: usize,
    pub tests_passed: usize,
    pub mean_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScores {
    pub model_id: String,
    pub categories: BTreeMap<Category, CategoryScore>,
    pub all_categories: Option<f64>,
    /// Mean elapsed time over ok pages that carry timing.
    pub seconds_per_page: Option<f64>,
    pub timed_pages: usize,
    /// Tests excluded from scoring because their annotation is unusable.
    pub invalid_tests: usize,
    /// Categories without any scored test.
    pub omitted_categories: Vec<Category>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub generated_at: String,
    pub normalization_version: String,
    pub aggregation: Aggregation,
    /// Sorted by `all_categories`, best first.
    pub models: Vec<ModelScores>,
}

fn sort_models(models: &mut [ModelScores]) {
    models.sort_by(|a, b| {
        let score = |m: &ModelScores| m.all_categories.unwrap_or(f64::NEG_INFINITY);
        score(b).total_cmp(&score(a)).then_with(|| a.model_id.cmp(&b.model_id))
    });
}

/// Per-model, per-category pass rates plus throughput.
pub fn aggregate(results: &[TestResult], candidates: &[CandidateDoc], mode: Aggregation) -> Report {
    let model_ids: BTreeSet<&str> = results.iter().map(|r| r.model_id.as_str()).collect();
    let mut models: Vec<ModelScores> = model_ids
        .into_iter()
        .map(|model_id| {
            let mut counts: BTreeMap<Category, (usize, usize)> = BTreeMap::new();
            let mut invalid_tests = 0;
            for r in results.iter().filter(|r| r.model_id == model_id) {
                if r.is_invalid() {
                    invalid_tests += 1;
                    continue;
                }
                let entry = counts.entry(r.category).or_default();
                entry.0 += 1;
                entry.1 += usize::from(r.passed());
            }
            let categories: BTreeMap<Category, CategoryScore> = counts
                .iter()
                .map(|(&c, &(total, passed))| {
                    (
                        c,
                        CategoryScore {
                            tests_total: total,
                            tests_passed: passed,
                            mean_score: passed as f64 / total as f64,
                        },
                    )
                })
                .collect();
            let all_categories = if categories.is_empty() {
                None
            } else {
                Some(match mode {
                    Aggregation::Macro => {
                        categories.values().map(|s| s.mean_score).sum::<f64>() / categories.len() as f64
                    }
                    Aggregation::Micro => {
                        let total: usize = categories.values().map(|s| s.tests_total).sum();
                        let passed: usize = categories.values().map(|s| s.tests_passed).sum();
                        passed as f64 / total as f64
                    }
                })
            };
            let timings: Vec<f64> = candidates
                .iter()
                .filter(|d| d.model_id == model_id && d.status == DocStatus::Ok)
                .filter_map(|d| d.elapsed_seconds)
                .collect();
            let seconds_per_page = (!timings.is_empty()).then(|| timings.iter().sum::<f64>() / timings.len() as f64);
            ModelScores {
                model_id: model_id.to_owned(),
                omitted_categories: Category::ALL.into_iter().filter(|c| !categories.contains_key(c)).collect(),
                categories,
                all_categories,
                seconds_per_page,
                timed_pages: timings.len(),
                invalid_tests,
            }
        })
        .collect();
    sort_models(&mut models);

    Report {
        generated_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        normalization_version: NORMALIZATION_VERSION.to_owned(),
        aggregation: mode,
        models,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "md" | "markdown" | "markdown-table" => Ok(ReportFormat::Markdown),
            _ => Err(Error::UnknownFormat(s.to_owned())),
        }
    }
}

impl ReportFormat {
    /// Picks the format from a file extension.
    pub fn from_path(path: &Path) -> Result<Self> {
        path.extension()
            .and_then(|e| e.to_str())
            .ok_or_else(|| Error::UnknownFormat(path.display().to_string()))?
            .parse()
    }
}

fn score_cell(value: Option<f64>) -> String {
    value.map(|v| format!("{v:.3}")).unwrap_or_default()
}

fn table_rows(report: &Report) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header = vec!["model".to_owned()];
    header.extend(Category::ALL.iter().map(|c| c.as_str().to_owned()));
    header.push("seconds_per_page".into());
    header.push("all_categories".into());

    let mut models = report.models.clone();
    sort_models(&mut models);
    let rows = models
        .iter()
        .map(|m| {
            let mut row = vec![m.model_id.clone()];
            row.extend(Category::ALL.iter().map(|c| score_cell(m.categories.get(c).map(|s| s.mean_score))));
            row.push(score_cell(m.seconds_per_page));
            row.push(score_cell(m.all_categories));
            row
        })
        .collect();
    (header, rows)
}

/// Deterministic rendering; identical reports give identical bytes.
pub fn render_to_string(report: &Report, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => {
            let mut sorted = report.clone();
            sort_models(&mut sorted.models);
            Ok(serde_json::to_string_pretty(&sorted)? + "\n")
        }
        ReportFormat::Csv => {
            let (header, rows) = table_rows(report);
            let mut writer = csv::Writer::from_writer(Vec::new());
            writer.write_record(&header)?;
            for row in rows {
                writer.write_record(&row)?;
            }
            let bytes = writer.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
            Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
        }
        ReportFormat::Markdown => {
            let (header, rows) = table_rows(report);
            let mut out = String::new();
            let line = |cells: &[String]| format!("| {} |\n", cells.join(" | "));
            out.push_str(&line(&header));
            let _ = writeln!(out, "|{}", "---|".repeat(header.len()));
            for row in rows {
                let escaped: Vec<String> = row.iter().map(|c| c.replace('|', "\\|")).collect();
                out.push_str(&line(&escaped));
            }
            Ok(out)
        }
    }
}

pub fn render_report(report: &Report, format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), render_to_string(report, format)?.as_bytes())
}
