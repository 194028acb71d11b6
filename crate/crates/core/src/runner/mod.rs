//! Loading suites and candidate outputs, evaluating them in parallel and
//! turning results into per-category reports.

mod io;
mod report;

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::checks::{run_test, TestResult, UnitTest};

pub use io::{
    load_candidate, load_candidates, load_tests, parse_tests, test_to_json_line, write_candidate, write_tests,
    CandidateDoc, DocStatus, Sidecar, TestRecord, TestType,
};
pub use report::{
    aggregate, render_report, render_to_string, Aggregation, CategoryScore, ModelScores, Report, ReportFormat,
};

/// Evaluates every test against the candidate page with the same doc id.
///
/// Pages that are missing, timed out or errored fail all their tests with
/// the explanation "no candidate output". Results come back sorted by test
/// id whatever the worker count.
pub fn run_suite(
    tests: &[UnitTest],
    candidates: &BTreeMap<String, CandidateDoc>,
    model_id: &str,
    workers: usize,
) -> Vec<TestResult> {
    let evaluate = |test: &UnitTest| match candidates.get(&test.doc_id) {
        Some(doc) if doc.status == DocStatus::Ok => run_test(test, &doc.markdown, model_id),
        _ => TestResult::no_candidate(test, model_id),
    };

    let mut results: Vec<TestResult> = match rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build() {
        Ok(pool) => pool.install(|| tests.par_iter().map(evaluate).collect()),
        Err(e) => {
            log::warn!("falling back to sequential evaluation: {e}");
            tests.iter().map(evaluate).collect()
        }
    };
    results.sort_by(|a, b| a.test_id.cmp(&b.test_id));
    results
}
