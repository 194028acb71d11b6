//! Approximate substring search.
//!
//! Offsets are character (Unicode scalar) indices, half-open.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::distance::edit_distance_chars;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FuzzyMatch {
    pub start: usize,
    pub end: usize,
    pub diffs: usize,
}

impl FuzzyMatch {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

/// Non-overlapping best matches of `needle` in `haystack` within
/// `max_diffs` edit operations, in left-to-right order.
///
/// Candidates are ranked by distance, then by how close their length is to
/// the needle's, then by position, and accepted greedily when they do not
/// overlap an already accepted match. With `max_diffs == 0` this is plain
/// non-overlapping substring search.
pub fn fuzzy_find(needle: &str, haystack: &str, max_diffs: usize) -> Vec<FuzzyMatch> {
    let needle: Vec<char> = needle.chars().collect();
    let haystack: Vec<char> = haystack.chars().collect();
    fuzzy_find_chars(&needle, &haystack, max_diffs)
}

pub fn fuzzy_find_chars(needle: &[char], haystack: &[char], max_diffs: usize) -> Vec<FuzzyMatch> {
    let m = needle.len();
    if m == 0 {
        return Vec::new();
    }

    let mut candidates = Vec::new();
    for end in match_ends(needle, haystack, max_diffs) {
        let best = if max_diffs == 0 {
            Some(FuzzyMatch { start: end - m, end, diffs: 0 })
        } else {
            best_start(needle, haystack, end, max_diffs)
        };
        candidates.extend(best);
    }
    candidates.sort_by_key(|c| (c.diffs, c.len().abs_diff(m), c.start, c.end));

    // start -> (end, diffs) of accepted matches
    let mut accepted: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for c in candidates {
        let clashes_before = accepted.range(..=c.start).next_back().is_some_and(|(_, &(e, _))| e > c.start);
        let clashes_after = accepted.range(c.start..c.end).next().is_some();
        if !clashes_before && !clashes_after {
            accepted.insert(c.start, (c.end, c.diffs));
        }
    }
    accepted.into_iter().map(|(start, (end, diffs))| FuzzyMatch { start, end, diffs }).collect()
}

/// End offsets `j` such that some substring ending at `j` is within
/// `max_diffs` of the needle (semi-global alignment, free start).
fn match_ends(needle: &[char], haystack: &[char], max_diffs: usize) -> Vec<usize> {
    let m = needle.len();
    let mut column: Vec<usize> = (0..=m).collect();
    let mut ends = Vec::new();
    for (j, &h) in haystack.iter().enumerate() {
        let mut diagonal = column[0];
        column[0] = 0;
        for i in 1..=m {
            let left = column[i];
            column[i] = (diagonal + usize::from(needle[i - 1] != h)).min(column[i - 1] + 1).min(left + 1);
            diagonal = left;
        }
        if column[m] <= max_diffs {
            ends.push(j + 1);
        }
    }
    ends
}

/// Best non-empty substring ending at `end`. Only lengths within
/// `max_diffs` of the needle length can qualify.
fn best_start(needle: &[char], haystack: &[char], end: usize, max_diffs: usize) -> Option<FuzzyMatch> {
    let m = needle.len();
    let min_len = m.saturating_sub(max_diffs).max(1);
    let max_len = (m + max_diffs).min(end);
    (min_len..=max_len)
        .map(|len| {
            let start = end - len;
            FuzzyMatch { start, end, diffs: edit_distance_chars(needle, &haystack[start..end]) }
        })
        .filter(|c| c.diffs <= max_diffs)
        .min_by_key(|c| (c.diffs, c.len().abs_diff(m), c.start))
}

/// The single closest substring of `haystack` to `needle`, whatever its
/// distance. Used to explain near misses.
pub fn closest_match(needle: &str, haystack: &str) -> Option<FuzzyMatch> {
    let needle: Vec<char> = needle.chars().collect();
    let haystack: Vec<char> = haystack.chars().collect();
    closest_match_chars(&needle, &haystack)
}

pub fn closest_match_chars(needle: &[char], haystack: &[char]) -> Option<FuzzyMatch> {
    let m = needle.len();
    if m == 0 || haystack.is_empty() {
        return None;
    }
    let mut dist: Vec<usize> = (0..=m).collect();
    let mut start: Vec<usize> = vec![0; m + 1];
    let mut best: Option<FuzzyMatch> = None;
    for (j, &h) in haystack.iter().enumerate() {
        let (mut diag_d, mut diag_s) = (dist[0], start[0]);
        dist[0] = 0;
        start[0] = j + 1;
        for i in 1..=m {
            let (left_d, left_s) = (dist[i], start[i]);
            let substitute = diag_d + usize::from(needle[i - 1] != h);
            let skip_needle = dist[i - 1] + 1;
            let skip_hay = left_d + 1;
            (dist[i], start[i]) = if substitute <= skip_needle && substitute <= skip_hay {
                (substitute, diag_s)
            } else if skip_needle <= skip_hay {
                (skip_needle, start[i - 1])
            } else {
                (skip_hay, left_s)
            };
            (diag_d, diag_s) = (left_d, left_s);
        }
        let here = FuzzyMatch { start: start[m], end: j + 1, diffs: dist[m] };
        let better = best.is_none_or(|b| (here.diffs, here.len().abs_diff(m)) < (b.diffs, b.len().abs_diff(m)));
        if better {
            best = Some(here);
        }
    }
    best
}
