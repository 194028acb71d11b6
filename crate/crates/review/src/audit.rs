use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::store::append_line;

/// Who is to blame for a failing test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Responsible {
    Model,
    Benchmark,
    Ambiguity,
}

impl Responsible {
    pub const ALL: [Responsible; 3] = [Responsible::Model, Responsible::Benchmark, Responsible::Ambiguity];

    pub fn as_str(self) -> &'static str {
        match self {
            Responsible::Model => "model",
            Responsible::Benchmark => "benchmark",
            Responsible::Ambiguity => "ambiguity",
        }
    }
}

impl fmt::Display for Responsible {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Responsible {
    type Err = String;

    /// Case-insensitive; audit sheets mix `model` and `Benchmark`.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let lowered = s.trim().to_lowercase();
        Responsible::ALL
            .into_iter()
            .find(|r| r.as_str() == lowered)
            .ok_or_else(|| format!("responsible must be model, benchmark or ambiguity, got `{s}`"))
    }
}

impl<'de> Deserialize<'de> for Responsible {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewRecord {
    pub test_id: String,
    /// Free-form failure label such as `missing_paragraph`.
    pub label: String,
    pub responsible: Responsible,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
    pub reviewer: String,
    /// RFC 3339; filled in by the server when left empty.
    #[serde(default)]
    pub timestamp: String,
}

impl ReviewRecord {
    pub fn new(test_id: &str, label: &str, responsible: Responsible) -> Self {
        ReviewRecord {
            test_id: test_id.into(),
            label: label.into(),
            responsible,
            comment: None,
            reviewer: String::new(),
            timestamp: String::new(),
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.label.trim().is_empty() {
            return Err("label is empty".into());
        }
        if self.reviewer.trim().is_empty() {
            return Err("reviewer is empty".into());
        }
        chrono::DateTime::parse_from_rfc3339(&self.timestamp)
            .map(|_| ())
            .map_err(|e| format!("timestamp `{}` is not RFC 3339: {e}", self.timestamp))
    }

    fn key(&self) -> (String, String, String) {
        (self.test_id.clone(), self.reviewer.clone(), self.timestamp.clone())
    }
}

/// Append-only review log, deduplicated on (test id, reviewer, timestamp).
#[derive(Debug)]
pub struct ReviewStore {
    path: PathBuf,
    records: Vec<ReviewRecord>,
    keys: HashSet<(String, String, String)>,
}

impl ReviewStore {
    pub fn open(path: PathBuf) -> Result<Self> {
        let mut store = ReviewStore { path, records: Vec::new(), keys: HashSet::new() };
        let text = match fs::read_to_string(&store.path) {
            Ok(text) => text,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(Error::io(&store.path, e)),
        };
        for (idx, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let record: ReviewRecord = serde_json::from_str(line).map_err(|e| Error::Log {
                path: store.path.clone(),
                line: idx + 1,
                message: e.to_string(),
            })?;
            if store.keys.insert(record.key()) {
                store.records.push(record);
            }
        }
        Ok(store)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn records(&self) -> &[ReviewRecord] {
        &self.records
    }

    /// Stores the record unless an identical submission exists. Returns
    /// whether anything was written.
    pub fn record(&mut self, record: ReviewRecord) -> Result<bool> {
        record.validate().map_err(Error::Rejected)?;
        if self.keys.contains(&record.key()) {
            return Ok(false);
        }
        let mut line = serde_json::to_string(&record)?;
        line.push('\n');
        append_line(&self.path, &line)?;
        self.keys.insert(record.key());
        self.records.push(record);
        Ok(true)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponsibleShare {
    pub responsible: Responsible,
    pub count: usize,
    /// Whole percent of all reviews.
    pub percent: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCount {
    pub label: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub total: usize,
    /// Always the three causes, in model, benchmark, ambiguity order.
    pub responsible: Vec<ResponsibleShare>,
    /// Most frequent label first; ties by label.
    pub labels: Vec<LabelCount>,
}

impl AuditSummary {
    pub fn percent(&self, who: Responsible) -> u32 {
        self.responsible.iter().find(|s| s.responsible == who).map_or(0, |s| s.percent)
    }

    pub fn label_count(&self, label: &str) -> usize {
        self.labels.iter().find(|l| l.label == label).map_or(0, |l| l.count)
    }
}

/// Per-cause counts with whole-percent shares, plus a label histogram.
pub fn audit_summary(reviews: &[ReviewRecord]) -> AuditSummary {
    let total = reviews.len();
    let mut by_cause: BTreeMap<Responsible, usize> = BTreeMap::new();
    let mut by_label: BTreeMap<&str, usize> = BTreeMap::new();
    for r in reviews {
        *by_cause.entry(r.responsible).or_default() += 1;
        *by_label.entry(r.label.trim()).or_default() += 1;
    }
    let responsible = Responsible::ALL
        .into_iter()
        .map(|who| {
            let count = by_cause.get(&who).copied().unwrap_or(0);
            let percent = if total == 0 { 0 } else { (100.0 * count as f64 / total as f64).round() as u32 };
            ResponsibleShare { responsible: who, count, percent }
        })
        .collect();
    let mut labels: Vec<LabelCount> =
        by_label.into_iter().map(|(label, count)| LabelCount { label: label.to_owned(), count }).collect();
    labels.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.label.cmp(&b.label)));
    AuditSummary { total, responsible, labels }
}
