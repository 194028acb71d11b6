//! Test-suite JSONL and candidate directory formats.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::checks::{Category, TestKind, UnitTest};
use crate::error::{Error, Result};
use crate::normtext::NormalizationProfile;
use crate::tabular::RelationKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestType {
    Present,
    Absent,
    Order,
    Table,
}

/// One line of a test file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRecord {
    pub id: String,
    pub pdf: String,
    pub page: u32,
    pub category: Category,
    #[serde(rename = "type")]
    pub test_type: TestType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_diffs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<NormalizationProfile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub before: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub after: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cell: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub up: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub down: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_heading: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left_heading: Option<String>,
}

impl TestRecord {
    fn relation_fields(&self) -> [(RelationKind, &Option<String>); 6] {
        [
            (RelationKind::Up, &self.up),
            (RelationKind::Down, &self.down),
            (RelationKind::Left, &self.left),
            (RelationKind::Right, &self.right),
            (RelationKind::TopHeading, &self.top_heading),
            (RelationKind::LeftHeading, &self.left_heading),
        ]
    }
}

impl TryFrom<TestRecord> for UnitTest {
    type Error = String;

    fn try_from(record: TestRecord) -> Result<Self, Self::Error> {
        let required = |field: &str, value: &Option<String>| {
            value.clone().ok_or_else(|| format!("`{field}` is required for type {:?}", record.test_type))
        };
        let kind = match record.test_type {
            TestType::Present | TestType::Absent => TestKind::Presence {
                target: required("text", &record.text)?,
                must_appear: record.test_type == TestType::Present,
            },
            TestType::Order => TestKind::Order {
                before: required("before", &record.before)?,
                after: required("after", &record.after)?,
            },
            TestType::Table => {
                let relations: BTreeMap<RelationKind, String> = record
                    .relation_fields()
                    .into_iter()
                    .filter_map(|(kind, value)| value.clone().map(|v| (kind, v)))
                    .collect();
                if relations.is_empty() {
                    return Err("table test needs at least one of up/down/left/right/top_heading/left_heading".into());
                }
                TestKind::Table { anchor: required("cell", &record.cell)?, relations }
            }
        };
        let profile = record.profile.unwrap_or_default();
        if let Some(i) = profile.empty_mask_index() {
            return Err(format!("profile mask #{i} is empty"));
        }
        Ok(UnitTest::new(record.id, record.pdf, record.page, record.category, kind)
            .with_profile(profile)
            .with_max_diffs(record.max_diffs.unwrap_or(0)))
    }
}

impl From<&UnitTest> for TestRecord {
    fn from(test: &UnitTest) -> Self {
        let mut record = TestRecord {
            id: test.id.clone(),
            pdf: test.pdf.clone(),
            page: test.page,
            category: test.category,
            test_type: TestType::Present,
            max_diffs: (test.max_diffs > 0).then_some(test.max_diffs),
            profile: (!test.profile.is_identity()).then(|| test.profile.clone()),
            text: None,
            before: None,
            after: None,
            cell: None,
            up: None,
            down: None,
            left: None,
            right: None,
            top_heading: None,
            left_heading: None,
        };
        match &test.kind {
            TestKind::Presence { target, must_appear } => {
                record.test_type = if *must_appear { TestType::Present } else { TestType::Absent };
                record.text = Some(target.clone());
            }
            TestKind::Order { before, after } => {
                record.test_type = TestType::Order;
                record.before = Some(before.clone());
                record.after = Some(after.clone());
            }
            TestKind::Table { anchor, relations } => {
                record.test_type = TestType::Table;
                record.cell = Some(anchor.clone());
                for (kind, text) in relations {
                    let slot = match kind {
                        RelationKind::Up => &mut record.up,
                        RelationKind::Down => &mut record.down,
                        RelationKind::Left => &mut record.left,
                        RelationKind::Right => &mut record.right,
                        RelationKind::TopHeading => &mut record.top_heading,
                        RelationKind::LeftHeading => &mut record.left_heading,
                    };
                    *slot = Some(text.clone());
                }
            }
        }
        record
    }
}

/// Parses test JSONL text. Blank lines are skipped; line numbers are 1-based.
pub fn parse_tests(text: &str) -> Result<Vec<UnitTest>> {
    let mut tests = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: TestRecord =
            serde_json::from_str(line).map_err(|e| Error::Parse { line: line_no, message: e.to_string() })?;
        let test = UnitTest::try_from(record).map_err(|message| Error::Parse { line: line_no, message })?;
        if let Some(&first) = seen.get(&test.id) {
            return Err(Error::DuplicateId { id: test.id, first, second: line_no });
        }
        seen.insert(test.id.clone(), line_no);
        tests.push(test);
    }
    Ok(tests)
}

pub fn load_tests(path: impl AsRef<Path>) -> Result<Vec<UnitTest>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_tests(&text)
}

pub fn test_to_json_line(test: &UnitTest) -> String {
    serde_json::to_string(&TestRecord::from(test)).expect("test records always serialize")
}

/// Writes tests as JSONL through a temporary file and rename.
pub fn write_tests(path: impl AsRef<Path>, tests: &[UnitTest]) -> Result<()> {
    let path = path.as_ref();
    let mut body = String::new();
    for test in tests {
        body.push_str(&test_to_json_line(test));
        body.push('\n');
    }
    write_atomic(path, body.as_bytes())
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!("{}.tmp", path.extension().and_then(|e| e.to_str()).unwrap_or("")));
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DocStatus {
    #[default]
    Ok,
    Timeout,
    Error,
}

/// Metadata stored next to each candidate markdown file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elapsed_seconds: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dpi: Option<u32>,
    #[serde(default)]
    pub status: DocStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_sha256: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attempts: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// One converter's output for one page.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateDoc {
    pub doc_id: String,
    pub model_id: String,
    pub markdown: String,
    /// `None` when no timing was recorded; such pages are left out of
    /// throughput means.
    pub elapsed_seconds: Option<f64>,
    pub dpi: Option<u32>,
    pub status: DocStatus,
}

impl CandidateDoc {
    pub fn sidecar(&self) -> Sidecar {
        Sidecar {
            elapsed_seconds: self.elapsed_seconds,
            dpi: self.dpi,
            status: self.status,
            model: Some(self.model_id.clone()),
            ..Sidecar::default()
        }
    }
}

fn read_candidate(path: &Path, doc_id: &str, model_id: &str) -> CandidateDoc {
    let mut doc = CandidateDoc {
        doc_id: doc_id.to_owned(),
        model_id: model_id.to_owned(),
        markdown: String::new(),
        elapsed_seconds: None,
        dpi: None,
        status: DocStatus::Ok,
    };
    match fs::read_to_string(path) {
        Ok(markdown) => doc.markdown = markdown,
        Err(e) => {
            log::warn!("skipping unreadable candidate {}: {e}", path.display());
            doc.status = DocStatus::Error;
            return doc;
        }
    }
    let sidecar_path = path.with_extension("json");
    if sidecar_path.exists() {
        let parsed = fs::read_to_string(&sidecar_path)
            .map_err(|e| e.to_string())
            .and_then(|s| serde_json::from_str::<Sidecar>(&s).map_err(|e| e.to_string()));
        match parsed {
            Ok(meta) => {
                doc.elapsed_seconds = meta.elapsed_seconds;
                doc.dpi = meta.dpi;
                doc.status = meta.status;
            }
            Err(e) => {
                log::warn!("unreadable sidecar {}: {e}", sidecar_path.display());
                doc.status = DocStatus::Error;
            }
        }
    }
    doc
}

/// Reads `<root>/<model_id>/*.md` with their optional `.json` sidecars.
pub fn load_candidates(root: impl AsRef<Path>, model_id: &str) -> Result<BTreeMap<String, CandidateDoc>> {
    let dir = root.as_ref().join(model_id);
    let entries = fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut docs = BTreeMap::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(&dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("md") {
            continue;
        }
        let Some(doc_id) = path.file_stem().and_then(|s| s.to_str()).map(str::to_owned) else {
            continue;
        };
        let doc = read_candidate(&path, &doc_id, model_id);
        docs.insert(doc_id, doc);
    }
    Ok(docs)
}

/// Reads a single page output; `None` when the model has no file for it.
pub fn load_candidate(root: impl AsRef<Path>, model_id: &str, doc_id: &str) -> Option<CandidateDoc> {
    let path = root.as_ref().join(model_id).join(format!("{doc_id}.md"));
    path.is_file().then(|| read_candidate(&path, doc_id, model_id))
}

/// Writes markdown then sidecar, each atomically. A present sidecar therefore
/// implies a complete markdown file.
pub fn write_candidate(root: impl AsRef<Path>, doc: &CandidateDoc, sidecar: &Sidecar) -> Result<()> {
    let dir = root.as_ref().join(&doc.model_id);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    write_atomic(&dir.join(format!("{}.md", doc.doc_id)), doc.markdown.as_bytes())?;
    let json = serde_json::to_vec_pretty(sidecar)?;
    write_atomic(&dir.join(format!("{}.json", doc.doc_id)), &json)
}
