use serde::{Deserialize, Serialize};

use mdbench_core::normtext::normalize;
use mdbench_core::NormalizationProfile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HunkKind {
    Equal,
    /// Present in the target only.
    Delete,
    /// Present in the candidate only.
    Insert,
}

/// A run of characters sharing one edit operation.
///
/// `start..end` are character offsets into the normalized candidate; a
/// delete hunk has an empty range at the point where the text is missing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffHunk {
    pub kind: HunkKind,
    pub text: String,
    pub start: usize,
    pub end: usize,
}

/// Tie order when several predecessors are equally good.
const PREFERENCE: [HunkKind; 3] = [HunkKind::Equal, HunkKind::Insert, HunkKind::Delete];

fn slot(kind: HunkKind) -> usize {
    kind as usize
}

/// Character-level edit script from `target` to `candidate`.
///
/// Substitutions become a delete followed by an insert. Among scripts with
/// the fewest edited characters, one with the fewest hunks is returned.
pub fn diff_chars(target: &str, candidate: &str) -> Vec<DiffHunk> {
    let a: Vec<char> = target.chars().collect();
    let b: Vec<char> = candidate.chars().collect();
    let (n, m) = (a.len(), b.len());
    const NONE: (usize, usize) = (usize::MAX, usize::MAX);
    // best[i][j][op] = (edits, hunks) of the best alignment of a[..i], b[..j]
    // whose last operation is `op`.
    let mut best = vec![vec![[NONE; 3]; m + 1]; n + 1];
    let mut from = vec![vec![[None::<HunkKind>; 3]; m + 1]; n + 1];

    let relax = |best: &mut Vec<Vec<[(usize, usize); 3]>>,
                 from: &mut Vec<Vec<[Option<HunkKind>; 3]>>,
                 i: usize,
                 j: usize,
                 kind: HunkKind,
                 pi: usize,
                 pj: usize| {
        let cost = usize::from(kind != HunkKind::Equal);
        let mut chosen = None;
        let mut value = NONE;
        let origin = pi == 0 && pj == 0;
        if origin {
            value = (cost, 1);
        } else {
            for prev in PREFERENCE {
                let (e, h) = best[pi][pj][slot(prev)];
                if e == usize::MAX {
                    continue;
                }
                let candidate = (e + cost, h + usize::from(prev != kind));
                if candidate < value {
                    value = candidate;
                    chosen = Some(prev);
                }
            }
        }
        best[i][j][slot(kind)] = value;
        from[i][j][slot(kind)] = chosen;
    };

    for i in 0..=n {
        for j in 0..=m {
            if i > 0 && j > 0 && a[i - 1] == b[j - 1] {
                relax(&mut best, &mut from, i, j, HunkKind::Equal, i - 1, j - 1);
            }
            if i > 0 {
                relax(&mut best, &mut from, i, j, HunkKind::Delete, i - 1, j);
            }
            if j > 0 {
                relax(&mut best, &mut from, i, j, HunkKind::Insert, i, j - 1);
            }
        }
    }
    if n == 0 && m == 0 {
        return Vec::new();
    }

    let mut kind = PREFERENCE
        .into_iter()
        .filter(|k| best[n][m][slot(*k)].0 != usize::MAX)
        .min_by_key(|k| best[n][m][slot(*k)])
        .expect("some alignment always exists");
    let mut ops = Vec::with_capacity(n + m);
    let (mut i, mut j) = (n, m);
    loop {
        ops.push(kind);
        let prev = from[i][j][slot(kind)];
        match kind {
            HunkKind::Equal => (i, j) = (i - 1, j - 1),
            HunkKind::Delete => i -= 1,
            HunkKind::Insert => j -= 1,
        }
        match prev {
            Some(p) => kind = p,
            None => break,
        }
    }
    ops.reverse();

    let mut hunks: Vec<DiffHunk> = Vec::new();
    let (mut i, mut j) = (0, 0);
    for op in ops {
        let ch = match op {
            HunkKind::Insert => b[j],
            _ => a[i],
        };
        match hunks.last_mut() {
            Some(h) if h.kind == op => h.text.push(ch),
            _ => hunks.push(DiffHunk { kind: op, text: ch.to_string(), start: j, end: j }),
        }
        match op {
            HunkKind::Equal => (i, j) = (i + 1, j + 1),
            HunkKind::Delete => i += 1,
            HunkKind::Insert => j += 1,
        }
        hunks.last_mut().unwrap().end = j;
    }
    hunks
}

/// Normalizes both sides with `profile`, then diffs them.
pub fn diff_spans(target: &str, candidate_window: &str, profile: &NormalizationProfile) -> Vec<DiffHunk> {
    diff_chars(&normalize(target, profile), &normalize(candidate_window, profile))
}
