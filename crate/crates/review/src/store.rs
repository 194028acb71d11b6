use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use mdbench_core::runner::{load_tests, TestRecord};
use mdbench_core::{NormalizationProfile, RelationKind, TestKind, UnitTest};

use crate::error::{Error, Result};

/// One line of the edit log: the full test before and after a patch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditRecord {
    pub test_id: String,
    pub timestamp: String,
    pub old: TestRecord,
    pub new: TestRecord,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfilePatch {
    pub markup_cleanup: Option<bool>,
    pub unicode_harmonize: Option<bool>,
    pub ascii_projection: Option<bool>,
    pub alnum_filter: Option<bool>,
    pub drop_intraline_spaces: Option<bool>,
    pub drop_linebreaks: Option<bool>,
    pub masks: Option<Vec<String>>,
}

impl ProfilePatch {
    fn apply(&self, profile: &mut NormalizationProfile) {
        let flags = [
            (self.markup_cleanup, &mut profile.markup_cleanup),
            (self.unicode_harmonize, &mut profile.unicode_harmonize),
            (self.ascii_projection, &mut profile.ascii_projection),
            (self.alnum_filter, &mut profile.alnum_filter),
            (self.drop_intraline_spaces, &mut profile.drop_intraline_spaces),
            (self.drop_linebreaks, &mut profile.drop_linebreaks),
        ];
        for (value, slot) in flags {
            if let Some(v) = value {
                *slot = v;
            }
        }
        if let Some(masks) = &self.masks {
            profile.masks = masks.clone();
        }
    }
}

/// Fields a reviewer may change. Identity, page and type are fixed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestPatch {
    pub text: Option<String>,
    pub before: Option<String>,
    pub after: Option<String>,
    pub cell: Option<String>,
    pub up: Option<String>,
    pub down: Option<String>,
    pub left: Option<String>,
    pub right: Option<String>,
    pub top_heading: Option<String>,
    pub left_heading: Option<String>,
    pub max_diffs: Option<usize>,
    pub profile: Option<ProfilePatch>,
}

impl TestPatch {
    fn relations(&self) -> [(RelationKind, &Option<String>); 6] {
        [
            (RelationKind::Up, &self.up),
            (RelationKind::Down, &self.down),
            (RelationKind::Left, &self.left),
            (RelationKind::Right, &self.right),
            (RelationKind::TopHeading, &self.top_heading),
            (RelationKind::LeftHeading, &self.left_heading),
        ]
    }

    /// The patched copy of `test`, or the reason the patch is refused.
    pub fn apply(&self, test: &UnitTest) -> std::result::Result<UnitTest, String> {
        let mut out = test.clone();
        let type_name = test.kind.type_name();
        let refuse = |field: &str| Err(format!("`{field}` does not apply to a {type_name} test"));
        match &mut out.kind {
            TestKind::Presence { target, .. } => {
                for (field, value) in [("before", &self.before), ("after", &self.after), ("cell", &self.cell)] {
                    if value.is_some() {
                        return refuse(field);
                    }
                }
                if let Some((kind, _)) = self.relations().into_iter().find(|(_, v)| v.is_some()) {
                    return refuse(kind.as_str());
                }
                if let Some(text) = &self.text {
                    *target = text.clone();
                }
            }
            TestKind::Order { before, after } => {
                for (field, value) in [("text", &self.text), ("cell", &self.cell)] {
                    if value.is_some() {
                        return refuse(field);
                    }
                }
                if let Some((kind, _)) = self.relations().into_iter().find(|(_, v)| v.is_some()) {
                    return refuse(kind.as_str());
                }
                if let Some(v) = &self.before {
                    *before = v.clone();
                }
                if let Some(v) = &self.after {
                    *after = v.clone();
                }
            }
            TestKind::Table { anchor, relations } => {
                for (field, value) in [("text", &self.text), ("before", &self.before), ("after", &self.after)] {
                    if value.is_some() {
                        return refuse(field);
                    }
                }
                if let Some(v) = &self.cell {
                    *anchor = v.clone();
                }
                for (kind, value) in self.relations() {
                    if let Some(v) = value {
                        relations.insert(kind, v.clone());
                    }
                }
            }
        }
        if let Some(k) = self.max_diffs {
            out.max_diffs = k;
        }
        if let Some(p) = &self.profile {
            p.apply(&mut out.profile);
        }
        out.validate()?;
        Ok(out)
    }
}

/// Test suite with an append-only edit log replayed on top of it.
#[derive(Debug)]
pub struct TestStore {
    tests: BTreeMap<String, UnitTest>,
    edits: Vec<EditRecord>,
    edits_path: PathBuf,
}

impl TestStore {
    pub fn open(tests_path: &Path, edits_path: PathBuf) -> Result<Self> {
        let tests: BTreeMap<String, UnitTest> =
            load_tests(tests_path)?.into_iter().map(|t| (t.id.clone(), t)).collect();
        let mut store = TestStore { tests, edits: Vec::new(), edits_path };
        let log = match fs::read_to_string(&store.edits_path) {
            Ok(text) => text,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(Error::io(&store.edits_path, e)),
        };
        for (idx, line) in log.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let bad = |message: String| Error::Log { path: store.edits_path.clone(), line: idx + 1, message };
            let edit: EditRecord = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
            let test = UnitTest::try_from(edit.new.clone()).map_err(bad)?;
            if !store.tests.contains_key(&edit.test_id) {
                log::warn!("edit log mentions unknown test `{}`; ignored", edit.test_id);
                continue;
            }
            store.tests.insert(edit.test_id.clone(), test);
            store.edits.push(edit);
        }
        Ok(store)
    }

    pub fn get(&self, id: &str) -> Option<&UnitTest> {
        self.tests.get(id)
    }

    /// Tests in id order.
    pub fn iter(&self) -> impl Iterator<Item = &UnitTest> {
        self.tests.values()
    }

    pub fn len(&self) -> usize {
        self.tests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tests.is_empty()
    }

    /// Every edit applied to `id`, oldest first.
    pub fn history(&self, id: &str) -> Vec<EditRecord> {
        self.edits.iter().filter(|e| e.test_id == id).cloned().collect()
    }

    /// Applies and logs a patch. A patch that changes nothing is not logged.
    pub fn update(&mut self, id: &str, patch: &TestPatch, timestamp: String) -> Result<UnitTest> {
        let current = self.tests.get(id).ok_or_else(|| Error::NotFound(format!("test `{id}`")))?;
        let updated = patch.apply(current).map_err(Error::Rejected)?;
        if &updated == current {
            return Ok(updated);
        }
        let edit = EditRecord {
            test_id: id.to_owned(),
            timestamp,
            old: TestRecord::from(current),
            new: TestRecord::from(&updated),
        };
        let mut line = serde_json::to_string(&edit)?;
        line.push('\n');
        append_line(&self.edits_path, &line)?;
        self.tests.insert(id.to_owned(), updated.clone());
        self.edits.push(edit);
        Ok(updated)
    }
}

/// Appends one complete line with a single write.
pub(crate) fn append_line(path: &Path, line: &str) -> Result<()> {
    let write = || -> std::io::Result<()> {
        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        file.write_all(line.as_bytes())?;
        file.sync_data()
    };
    write().map_err(|e| Error::io(path, e))
}
