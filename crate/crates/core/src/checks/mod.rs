//! Unit-test families and their evaluation against a candidate document.

mod distance;
mod eval;
mod fuzzy;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::normtext::{normalize, NormalizationProfile};
use crate::tabular::RelationKind;

pub use distance::{edit_distance, edit_distance_chars};
pub use eval::{eval_order, eval_presence, eval_table, run_test};
pub use fuzzy::{closest_match, closest_match_chars, fuzzy_find, fuzzy_find_chars, FuzzyMatch};

/// Document categories, in report column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Baseline,
    Forms,
    Graphics,
    Handwritten,
    LongTable,
    Multicolumn,
    TinyText,
}

impl Category {
    pub const ALL: [Category; 7] = [
        Category::Baseline,
        Category::Forms,
        Category::Graphics,
        Category::Handwritten,
        Category::LongTable,
        Category::Multicolumn,
        Category::TinyText,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Baseline => "baseline",
            Category::Forms => "forms",
            Category::Graphics => "graphics",
            Category::Handwritten => "handwritten",
            Category::LongTable => "long_table",
            Category::Multicolumn => "multicolumn",
            Category::TinyText => "tiny_text",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL.into_iter().find(|c| c.as_str() == s).ok_or_else(|| format!("unknown category `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TestKind {
    Presence { target: String, must_appear: bool },
    Order { before: String, after: String },
    Table { anchor: String, relations: BTreeMap<RelationKind, String> },
}

impl TestKind {
    /// The `type` tag used in test files.
    pub fn type_name(&self) -> &'static str {
        match self {
            TestKind::Presence { must_appear: true, .. } => "present",
            TestKind::Presence { must_appear: false, .. } => "absent",
            TestKind::Order { .. } => "order",
            TestKind::Table { .. } => "table",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnitTest {
    pub id: String,
    /// `<pdf_stem>_p<page>`
    pub doc_id: String,
    pub pdf: String,
    pub page: u32,
    pub category: Category,
    /// Edit-operation budget for fuzzy matching.
    pub max_diffs: usize,
    pub profile: NormalizationProfile,
    pub kind: TestKind,
}

/// Page identity shared by tests and candidate files.
pub fn doc_id_for(pdf: &str, page: u32) -> String {
    let stem = Path::new(pdf).file_stem().and_then(|s| s.to_str()).unwrap_or(pdf);
    format!("{stem}_p{page}")
}

impl UnitTest {
    pub fn new(id: impl Into<String>, pdf: impl Into<String>, page: u32, category: Category, kind: TestKind) -> Self {
        let pdf = pdf.into();
        UnitTest {
            id: id.into(),
            doc_id: doc_id_for(&pdf, page),
            pdf,
            page,
            category,
            max_diffs: 0,
            profile: NormalizationProfile::default(),
            kind,
        }
    }

    pub fn with_profile(mut self, profile: NormalizationProfile) -> Self {
        self.profile = profile;
        self
    }

    pub fn with_max_diffs(mut self, max_diffs: usize) -> Self {
        self.max_diffs = max_diffs;
        self
    }

    /// Checks the annotation invariants: targets survive normalization,
    /// table tests carry at least one relation, masks are non-empty.
    pub fn validate(&self) -> Result<(), String> {
        if let Some(i) = self.profile.empty_mask_index() {
            return Err(format!("mask #{i} is empty"));
        }
        let non_empty = |field: &str, text: &str| {
            if normalize(text, &self.profile).is_empty() {
                Err(format!("{field} is empty after normalization"))
            } else {
                Ok(())
            }
        };
        match &self.kind {
            TestKind::Presence { target, .. } => non_empty("text", target),
            TestKind::Order { before, after } => {
                non_empty("before", before)?;
                non_empty("after", after)
            }
            TestKind::Table { anchor, relations } => {
                if relations.is_empty() {
                    return Err("table test has no relation".into());
                }
                non_empty("cell", anchor)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Pass,
    Fail,
    /// Annotation defect; counted neither as pass nor fail.
    Invalid,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestResult {
    pub test_id: String,
    pub doc_id: String,
    pub category: Category,
    pub model_id: String,
    pub status: Outcome,
    pub explanation: String,
    /// Character offsets into the normalized candidate text.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matched_span: Option<(usize, usize)>,
}

/// Explanation used when a page has no usable converter output.
pub const NO_CANDIDATE: &str = "no candidate output";

impl TestResult {
    fn for_test(test: &UnitTest, status: Outcome, explanation: impl Into<String>) -> Self {
        TestResult {
            test_id: test.id.clone(),
            doc_id: test.doc_id.clone(),
            category: test.category,
            model_id: String::new(),
            status,
            explanation: explanation.into(),
            matched_span: None,
        }
    }

    pub fn no_candidate(test: &UnitTest, model_id: &str) -> Self {
        let mut r = Self::for_test(test, Outcome::Fail, NO_CANDIDATE);
        r.model_id = model_id.to_owned();
        r
    }

    pub fn passed(&self) -> bool {
        self.status == Outcome::Pass
    }

    pub fn is_invalid(&self) -> bool {
        self.status == Outcome::Invalid
    }
}
