//! Shortlisting pages on which two converters disagree most.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checks::edit_distance_chars;
use crate::error::{Error, Result};
use crate::normtext::{normalize, NormalizationProfile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisagreementRecord {
    pub doc_id: String,
    /// Normalized edit distance in `[0, 1]`.
    pub score: f64,
    pub len_a: usize,
    pub len_b: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PagePair {
    pub doc_id: String,
    pub out_a: String,
    pub out_b: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Shortlist {
    pub records: Vec<DisagreementRecord>,
    /// Number of pages ranked.
    pub population: usize,
    /// False when `k` exceeded the population and every page was returned.
    pub truncated: bool,
}

fn record(doc_id: &str, out_a: &str, out_b: &str, profile: &NormalizationProfile) -> DisagreementRecord {
    let a: Vec<char> = normalize(out_a, profile).chars().collect();
    let b: Vec<char> = normalize(out_b, profile).chars().collect();
    let longest = a.len().max(b.len()).max(1);
    DisagreementRecord {
        doc_id: doc_id.to_owned(),
        score: edit_distance_chars(&a, &b) as f64 / longest as f64,
        len_a: a.len(),
        len_b: b.len(),
    }
}

/// Edit distance between the normalized outputs over the longer length.
pub fn disagreement(out_a: &str, out_b: &str, profile: &NormalizationProfile) -> f64 {
    record("", out_a, out_b, profile).score
}

fn rank_order(a: &DisagreementRecord, b: &DisagreementRecord) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.doc_id.cmp(&b.doc_id))
}

/// Top `k` pages by descending score, ties by ascending doc id.
pub fn rank_pages(pairs: &[PagePair], k: usize, profile: &NormalizationProfile, workers: usize) -> Result<Shortlist> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let score = |p: &PagePair| record(&p.doc_id, &p.out_a, &p.out_b, profile);
    let mut records: Vec<DisagreementRecord> = match rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build()
    {
        Ok(pool) => pool.install(|| pairs.par_iter().map(score).collect()),
        Err(e) => {
            log::warn!("falling back to sequential scoring: {e}");
            pairs.iter().map(score).collect()
        }
    };
    records.sort_by(rank_order);
    let population = records.len();
    if k > population {
        log::info!("k = {k} exceeds the {population} available pages; returning all of them");
    }
    records.truncate(k);
    Ok(Shortlist { records, population, truncated: k < population })
}
