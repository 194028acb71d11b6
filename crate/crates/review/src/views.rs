use serde::{Deserialize, Serialize};

use mdbench_core::checks::{closest_match_chars, edit_distance_chars, fuzzy_find_chars, FuzzyMatch};
use mdbench_core::normtext::normalize;
use mdbench_core::runner::{CandidateDoc, DocStatus, TestRecord};
use mdbench_core::{extract_tables, RelationKind, TestKind, TestResult, UnitTest};

use crate::diff::{diff_chars, DiffHunk};
use crate::store::EditRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestView {
    #[serde(flatten)]
    pub test: TestRecord,
    pub doc_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<TestResult>,
}

impl TestView {
    pub fn new(test: &UnitTest, result: Option<TestResult>) -> Self {
        TestView { test: TestRecord::from(test), doc_id: test.doc_id.clone(), result }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestDetail {
    #[serde(flatten)]
    pub view: TestView,
    pub history: Vec<EditRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateView {
    pub doc_id: String,
    pub model: String,
    pub status: DocStatus,
    pub elapsed_seconds: Option<f64>,
    pub dpi: Option<u32>,
    pub markdown: String,
}

impl From<CandidateDoc> for CandidateView {
    fn from(doc: CandidateDoc) -> Self {
        CandidateView {
            doc_id: doc.doc_id,
            model: doc.model_id,
            status: doc.status,
            elapsed_seconds: doc.elapsed_seconds,
            dpi: doc.dpi,
            markdown: doc.markdown,
        }
    }
}

/// Expected text of one test field next to what the candidate offers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldDiff {
    /// `text`, `before`, `after`, `cell` or a relation name.
    pub field: String,
    /// Normalized expectation.
    pub target: String,
    /// Normalized candidate text compared against it.
    pub window: String,
    /// Character range of `window` in the normalized candidate; absent for
    /// table cells, which are not contiguous in the text.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_start: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_end: Option<usize>,
    pub distance: usize,
    pub hunks: Vec<DiffHunk>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffView {
    pub test_id: String,
    pub model: String,
    pub result: TestResult,
    /// `None` when the model has no output for the page.
    pub candidate_status: Option<DocStatus>,
    pub normalized_candidate: String,
    pub fields: Vec<FieldDiff>,
}

fn chars(s: &str) -> Vec<char> {
    s.chars().collect()
}

fn span_field(field: &str, target: String, haystack: &[char], span: Option<FuzzyMatch>) -> FieldDiff {
    let (start, end) = span.map_or((0, 0), |m| (m.start, m.end));
    let window: String = haystack[start..end].iter().collect();
    let mut hunks = diff_chars(&target, &window);
    for h in &mut hunks {
        h.start += start;
        h.end += start;
    }
    FieldDiff {
        field: field.to_owned(),
        distance: edit_distance_chars(&chars(&target), &chars(&window)),
        target,
        window,
        window_start: span.map(|_| start),
        window_end: span.map(|_| end),
        hunks,
    }
}

fn cell_field(field: &str, target: String, found: String) -> FieldDiff {
    FieldDiff {
        field: field.to_owned(),
        distance: edit_distance_chars(&chars(&target), &chars(&found)),
        hunks: diff_chars(&target, &found),
        target,
        window: found,
        window_start: None,
        window_end: None,
    }
}

/// Best place in the candidate for a span: a match within budget if one
/// exists (`last` picks the final one), else the closest near miss.
fn locate(needle: &[char], haystack: &[char], max_diffs: usize, last: bool) -> Option<FuzzyMatch> {
    let found = fuzzy_find_chars(needle, haystack, max_diffs);
    let pick = if last { found.last() } else { found.first() };
    pick.copied().or_else(|| closest_match_chars(needle, haystack))
}

/// Field-by-field comparison of a test with a candidate document.
pub fn field_diffs(test: &UnitTest, candidate_markdown: &str) -> (String, Vec<FieldDiff>) {
    let norm = |s: &str| normalize(s, &test.profile);
    let candidate = norm(candidate_markdown);
    let haystack = chars(&candidate);
    let fields = match &test.kind {
        TestKind::Presence { target, .. } => {
            let target = norm(target);
            let span = locate(&chars(&target), &haystack, test.max_diffs, false);
            vec![span_field("text", target, &haystack, span)]
        }
        TestKind::Order { before, after } => {
            let before = norm(before);
            let after = norm(after);
            let first = locate(&chars(&before), &haystack, test.max_diffs, false);
            let last = locate(&chars(&after), &haystack, test.max_diffs, true);
            vec![span_field("before", before, &haystack, first), span_field("after", after, &haystack, last)]
        }
        TestKind::Table { anchor, relations } => table_fields(test, &norm(anchor), relations, candidate_markdown),
    };
    (candidate, fields)
}

fn table_fields(
    test: &UnitTest,
    anchor: &str,
    relations: &std::collections::BTreeMap<RelationKind, String>,
    candidate_markdown: &str,
) -> Vec<FieldDiff> {
    let norm = |s: &str| normalize(s, &test.profile);
    let anchor_chars = chars(anchor);
    let expected: Vec<(RelationKind, String)> = relations.iter().map(|(k, v)| (*k, norm(v))).collect();

    // Closest anchor cell first, then the one satisfying most relations.
    let mut best: Option<((usize, std::cmp::Reverse<usize>), Vec<FieldDiff>)> = None;
    for grid in extract_tables(candidate_markdown) {
        let texts: Vec<String> = grid.cells().iter().map(|c| norm(&c.text)).collect();
        for cell in grid.cells() {
            let origin = (cell.row, cell.col);
            let anchor_text = texts[grid.cell_id(cell.row, cell.col)].clone();
            let anchor_distance = edit_distance_chars(&chars(&anchor_text), &anchor_chars);
            let mut fields = vec![cell_field("cell", anchor.to_owned(), anchor_text)];
            let mut satisfied = 0;
            for (kind, want) in &expected {
                let got = grid
                    .relation_slot(origin, *kind)
                    .map(|(r, c)| texts[grid.cell_id(r, c)].clone())
                    .unwrap_or_default();
                let field = cell_field(kind.as_str(), want.clone(), got);
                satisfied += usize::from(field.distance <= test.max_diffs);
                fields.push(field);
            }
            let score = (anchor_distance, std::cmp::Reverse(satisfied));
            if best.as_ref().is_none_or(|(s, _)| score < *s) {
                best = Some((score, fields));
            }
        }
    }
    best.map(|(_, f)| f).unwrap_or_else(|| {
        let mut fields = vec![cell_field("cell", anchor.to_owned(), String::new())];
        fields.extend(expected.into_iter().map(|(k, want)| cell_field(k.as_str(), want, String::new())));
        fields
    })
}
