use crate::normtext::normalize;
use crate::tabular::{extract_tables, RelationKind, TableGrid};

use super::distance::edit_distance_chars;
use super::fuzzy::{closest_match_chars, fuzzy_find_chars, FuzzyMatch};
use super::{Outcome, TestKind, TestResult, UnitTest};

fn chars(s: &str) -> Vec<char> {
    s.chars().collect()
}

fn snippet(text: &[char], m: &FuzzyMatch) -> String {
    text[m.start..m.end].iter().collect()
}

fn invalid(test: &UnitTest, field: &str) -> TestResult {
    TestResult::for_test(test, Outcome::Invalid, format!("invalid test: {field} is empty after normalization"))
}

fn wrong_kind(test: &UnitTest, expected: &str) -> TestResult {
    TestResult::for_test(test, Outcome::Invalid, format!("invalid test: not a {expected} test"))
}

/// Span must appear (or must be absent) somewhere in the candidate.
pub fn eval_presence(test: &UnitTest, candidate_markdown: &str) -> TestResult {
    let TestKind::Presence { target, must_appear } = &test.kind else {
        return wrong_kind(test, "presence");
    };
    let target = normalize(target, &test.profile);
    if target.is_empty() {
        return invalid(test, "text");
    }
    let needle = chars(&target);
    let haystack = chars(&normalize(candidate_markdown, &test.profile));
    let found = fuzzy_find_chars(&needle, &haystack, test.max_diffs);

    match (found.first(), *must_appear) {
        (Some(m), true) => {
            let mut r = TestResult::for_test(test, Outcome::Pass, "");
            r.matched_span = Some((m.start, m.end));
            r
        }
        (None, true) => {
            let explanation = match closest_match_chars(&needle, &haystack) {
                Some(near) => format!(
                    "`{target}` not found within {} diffs; closest `{}` at distance {}",
                    test.max_diffs,
                    snippet(&haystack, &near),
                    near.diffs
                ),
                None => format!("`{target}` not found; candidate is empty after normalization"),
            };
            TestResult::for_test(test, Outcome::Fail, explanation)
        }
        (None, false) => TestResult::for_test(test, Outcome::Pass, ""),
        (Some(m), false) => {
            let mut r = TestResult::for_test(
                test,
                Outcome::Fail,
                format!(
                    "`{target}` must be absent but `{}` found at {}..{} (distance {})",
                    snippet(&haystack, m),
                    m.start,
                    m.end,
                    m.diffs
                ),
            );
            r.matched_span = Some((m.start, m.end));
            r
        }
    }
}

/// `before` must start strictly before the last occurrence of `after`.
pub fn eval_order(test: &UnitTest, candidate_markdown: &str) -> TestResult {
    let TestKind::Order { before, after } = &test.kind else {
        return wrong_kind(test, "order");
    };
    let before = normalize(before, &test.profile);
    if before.is_empty() {
        return invalid(test, "before");
    }
    let after = normalize(after, &test.profile);
    if after.is_empty() {
        return invalid(test, "after");
    }
    let haystack = chars(&normalize(candidate_markdown, &test.profile));
    let first = fuzzy_find_chars(&chars(&before), &haystack, test.max_diffs);
    let second = fuzzy_find_chars(&chars(&after), &haystack, test.max_diffs);

    let (Some(earliest), Some(latest)) = (first.first(), second.last()) else {
        let missing: Vec<String> = [(first.is_empty(), &before), (second.is_empty(), &after)]
            .into_iter()
            .filter(|(absent, _)| *absent)
            .map(|(_, s)| format!("`{s}`"))
            .collect();
        return TestResult::for_test(test, Outcome::Fail, format!("span missing: {}", missing.join(", ")));
    };

    if earliest.start < latest.start {
        let mut r = TestResult::for_test(test, Outcome::Pass, "");
        r.matched_span = Some((earliest.start, latest.end));
        r
    } else {
        TestResult::for_test(
            test,
            Outcome::Fail,
            format!(
                "order violated: `{before}` first found at {} but `{after}` last found at {}",
                earliest.start, latest.start
            ),
        )
    }
}

struct AnchorReport {
    satisfied: usize,
    failure: String,
}

/// Some cell matching the anchor satisfies every expected relation.
pub fn eval_table(test: &UnitTest, candidate_markdown: &str) -> TestResult {
    let TestKind::Table { anchor, relations } = &test.kind else {
        return wrong_kind(test, "table");
    };
    let anchor_norm = normalize(anchor, &test.profile);
    if anchor_norm.is_empty() {
        return invalid(test, "cell");
    }
    if relations.is_empty() {
        return TestResult::for_test(test, Outcome::Invalid, "invalid test: no relation to check");
    }
    let anchor_chars = chars(&anchor_norm);
    let expected: Vec<(RelationKind, String, Vec<char>)> = relations
        .iter()
        .map(|(&kind, text)| {
            let norm = normalize(text, &test.profile);
            let c = chars(&norm);
            (kind, norm, c)
        })
        .collect();

    let grids = extract_tables(candidate_markdown);
    if grids.is_empty() {
        return TestResult::for_test(test, Outcome::Fail, "no table found");
    }

    let within = |a: &[char], b: &[char]| {
        a.len().abs_diff(b.len()) <= test.max_diffs && edit_distance_chars(a, b) <= test.max_diffs
    };

    let mut best: Option<AnchorReport> = None;
    for grid in &grids {
        let normalized: Vec<Vec<char>> =
            grid.cells().iter().map(|c| chars(&normalize(&c.text, &test.profile))).collect();
        for row in 0..grid.n_rows() {
            for col in 0..grid.n_cols() {
                if !within(&normalized[grid.cell_id(row, col)], &anchor_chars) {
                    continue;
                }
                let report = check_relations(grid, &normalized, (row, col), &expected, &within);
                if report.satisfied == expected.len() {
                    return TestResult::for_test(test, Outcome::Pass, "");
                }
                if best.as_ref().is_none_or(|b| report.satisfied > b.satisfied) {
                    best = Some(report);
                }
            }
        }
    }

    let explanation = match best {
        None => format!("anchor `{anchor_norm}` not found in {} table(s)", grids.len()),
        Some(report) => format!("anchor `{anchor_norm}` found but {}", report.failure),
    };
    TestResult::for_test(test, Outcome::Fail, explanation)
}

fn check_relations(
    grid: &TableGrid,
    normalized: &[Vec<char>],
    origin: (usize, usize),
    expected: &[(RelationKind, String, Vec<char>)],
    within: &dyn Fn(&[char], &[char]) -> bool,
) -> AnchorReport {
    let mut satisfied = 0;
    let mut failure = String::new();
    for (kind, text, want) in expected {
        let found = grid.relation_slot(origin, *kind).map(|(r, c)| &normalized[grid.cell_id(r, c)]);
        match found {
            Some(got) if within(got, want) => satisfied += 1,
            Some(got) if failure.is_empty() => {
                failure = format!("{kind}: expected `{text}`, found `{}`", got.iter().collect::<String>());
            }
            None if failure.is_empty() => {
                failure = format!("{kind}: expected `{text}`, found nothing (table edge)");
            }
            _ => {}
        }
    }
    AnchorReport { satisfied, failure }
}

/// Dispatches on the test kind and stamps `model_id`.
pub fn run_test(test: &UnitTest, candidate_markdown: &str, model_id: &str) -> TestResult {
    let mut result = match test.kind {
        TestKind::Presence { .. } => eval_presence(test, candidate_markdown),
        TestKind::Order { .. } => eval_order(test, candidate_markdown),
        TestKind::Table { .. } => eval_table(test, candidate_markdown),
    };
    result.model_id = model_id.to_owned();
    result
}
