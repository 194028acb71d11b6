//! Text canonicalization applied to reference spans and candidate documents
//! before any comparison.
//!
//! Six optional stages run in a fixed order:
//!
//! 1. markup cleanup (line/HTML breaks, emphasis, pipe tables to HTML, whitespace)
//! 2. Unicode harmonization (NFKC plus a replacement table)
//! 3. ASCII projection of accented Latin letters
//! 4. alphanumeric filtering with lowercasing
//! 5. spacing control (intra-line spaces, line breaks)
//! 6. literal substring masks
//!
//! [`normalize`] re-runs the enabled stages until the output stops changing,
//! so `normalize(normalize(x, p), p) == normalize(x, p)` for every profile.

use serde::{Deserialize, Serialize};
use unicode_normalization::char::{decompose_canonical, is_combining_mark};
use unicode_normalization::UnicodeNormalization;

use crate::tabular::markdown::{pipe_tables_to_html, HtmlFlavor};

/// Version tag of the normalization rules, carried in reports so that score
/// drift across harness versions can be detected.
pub const NORMALIZATION_VERSION: &str = "mdbench-norm/1";

/// Upper bound on pipeline re-runs. Real inputs settle in two rounds.
const MAX_ROUNDS: usize = 16;

/// Per-test switches for the normalization pipeline.
///
/// Serializes as a flat JSON object; absent keys default to `false` / empty.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct NormalizationProfile {
    pub markup_cleanup: bool,
    pub unicode_harmonize: bool,
    pub ascii_projection: bool,
    pub alnum_filter: bool,
    pub drop_intraline_spaces: bool,
    pub drop_linebreaks: bool,
    pub masks: Vec<String>,
}

impl NormalizationProfile {
    /// Every stage enabled, no masks.
    pub fn all_stages() -> Self {
        Self {
            markup_cleanup: true,
            unicode_harmonize: true,
            ascii_projection: true,
            alnum_filter: true,
            drop_intraline_spaces: true,
            drop_linebreaks: true,
            masks: Vec::new(),
        }
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::default()
    }

    /// Returns the first mask that violates the non-empty rule, if any.
    pub fn empty_mask_index(&self) -> Option<usize> {
        self.masks.iter().position(|m| m.is_empty())
    }
}

/// Applies the enabled stages of `profile` and trims the result.
pub fn normalize(text: &str, profile: &NormalizationProfile) -> String {
    let mut current = run_stages(text, profile);
    for _ in 0..MAX_ROUNDS {
        let next = run_stages(&current, profile);
        if next == current {
            break;
        }
        current = next;
    }
    current
}

fn run_stages(text: &str, profile: &NormalizationProfile) -> String {
    let mut out = text.to_owned();
    if profile.markup_cleanup {
        out = cleanup_markup(&out);
    }
    if profile.unicode_harmonize {
        out = harmonize_unicode(&out);
    }
    if profile.ascii_projection {
        out = project_ascii(&out);
    }
    if profile.alnum_filter {
        out = filter_alnum(&out);
    }
    if profile.drop_intraline_spaces || profile.drop_linebreaks {
        out = squash_spacing(&out, profile.drop_intraline_spaces, profile.drop_linebreaks);
    }
    if !profile.masks.is_empty() {
        out = apply_masks(&out, &profile.masks);
    }
    out.trim().to_owned()
}

/// Flattens breaks, strips emphasis markers, rewrites pipe tables as HTML and
/// collapses horizontal whitespace.
///
/// Paragraphs (separated by blank lines) survive as `"\n\n"`; single line
/// breaks inside a paragraph become one space. Existing HTML tables are not
/// re-rendered.
pub fn cleanup_markup(text: &str) -> String {
    let text = text.replace("\r\n", "\n").replace('\r', "\n");
    let text = pipe_tables_to_html(&text, HtmlFlavor::Plain);
    let text = replace_html_breaks(&text);

    let mut paragraphs: Vec<String> = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for line in text.split('\n') {
        if line.trim().is_empty() {
            if !current.is_empty() {
                paragraphs.push(current.join(" "));
                current.clear();
            }
        } else {
            current.push(line);
        }
    }
    if !current.is_empty() {
        paragraphs.push(current.join(" "));
    }

    paragraphs
        .iter()
        .map(|p| collapse_horizontal_space(&strip_emphasis(p)))
        .filter(|p| !p.is_empty())
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Replaces `<br>`, `<br/>`, `<br />` (any case) with a single space.
fn replace_html_breaks(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(pos) = rest.find('<') {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        match match_break_tag(tail) {
            Some(len) => {
                out.push(' ');
                rest = &tail[len..];
            }
            None => {
                out.push('<');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

/// Length in bytes of a `<br ... >` tag at the start of `s`.
fn match_break_tag(s: &str) -> Option<usize> {
    let bytes = s.as_bytes();
    if bytes.len() < 4 || !bytes[1].eq_ignore_ascii_case(&b'b') || !bytes[2].eq_ignore_ascii_case(&b'r') {
        return None;
    }
    let mut i = 3;
    while i < bytes.len() && (bytes[i] == b' ' || bytes[i] == b'\t') {
        i += 1;
    }
    if i < bytes.len() && bytes[i] == b'/' {
        i += 1;
        while i < bytes.len() && (bytes[i] == b' ' || bytes[i] == b'\t') {
            i += 1;
        }
    }
    (i < bytes.len() && bytes[i] == b'>').then_some(i + 1)
}

const EMPHASIS_MARKERS: [&str; 4] = ["**", "__", "*", "_"];

/// Removes emphasis marker pairs that open and close on the same line.
/// Unpaired markers stay literal.
fn strip_emphasis(line: &str) -> String {
    let mut chars: Vec<char> = line.chars().collect();
    'outer: loop {
        for marker in EMPHASIS_MARKERS {
            let marker: Vec<char> = marker.chars().collect();
            if let Some((open, close)) = find_emphasis_pair(&chars, &marker) {
                chars.drain(close..close + marker.len());
                chars.drain(open..open + marker.len());
                continue 'outer;
            }
        }
        break;
    }
    chars.into_iter().collect()
}

fn find_emphasis_pair(chars: &[char], marker: &[char]) -> Option<(usize, usize)> {
    let len = marker.len();
    let underscore = marker[0] == '_';
    let at = |i: usize| i + len <= chars.len() && chars[i..i + len] == *marker;

    let opener = (0..chars.len()).find(|&i| {
        at(i)
            && chars.get(i + len).is_some_and(|c| !c.is_whitespace())
            && !(underscore && i > 0 && chars[i - 1].is_alphanumeric())
    })?;
    // If the first opener has no closer, no later opener has one either.
    let closer = (opener + len + 1..chars.len()).find(|&j| {
        at(j)
            && !chars[j - 1].is_whitespace()
            && !(underscore && chars.get(j + len).is_some_and(|c| c.is_alphanumeric()))
    })?;
    Some((opener, closer))
}

fn collapse_horizontal_space(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut in_space = false;
    for c in text.chars() {
        if c == ' ' || c == '\t' {
            if !in_space {
                out.push(' ');
            }
            in_space = true;
        } else {
            out.push(c);
            in_space = false;
        }
    }
    out.trim().to_owned()
}

fn is_inline_space(c: char) -> bool {
    matches!(c, ' ' | '\t' | '\u{00A0}' | '\u{202F}' | '\u{2007}')
}

/// NFKC followed by the curated symbol replacement table.
///
/// French guillemets absorb the spacing conventionally set inside them, so
/// `« Bonjour »` and `"Bonjour"` harmonize identically.
pub fn harmonize_unicode(text: &str) -> String {
    let composed: Vec<char> = text.nfkc().collect();
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    while i < composed.len() {
        let c = composed[i];
        i += 1;
        match c {
            '«' => {
                out.push('"');
                while i < composed.len() && is_inline_space(composed[i]) {
                    i += 1;
                }
            }
            '»' => {
                while out.ends_with(is_inline_space) {
                    out.pop();
                }
                out.push('"');
            }
            '“' | '”' | '„' | '‟' => out.push('"'),
            '‘' | '’' | '‚' | '‛' => out.push('\''),
            '\u{2010}'..='\u{2015}' | '\u{2212}' => out.push('-'),
            '\u{00A0}' | '\u{202F}' | '\u{2007}' => out.push(' '),
            '☐' => out.push_str("[ ]"),
            '☑' | '☒' | '✓' | '✔' | '✗' | '✘' => out.push_str("[x]"),
            other => out.push(other),
        }
    }
    out
}

fn ascii_expansion(c: char) -> Option<&'static str> {
    Some(match c {
        'œ' => "oe",
        'Œ' => "OE",
        'æ' => "ae",
        'Æ' => "AE",
        'ß' => "ss",
        'ẞ' => "SS",
        'ø' => "o",
        'Ø' => "O",
        'ł' => "l",
        'Ł' => "L",
        'đ' | 'ð' => "d",
        'Đ' | 'Ð' => "D",
        'þ' => "th",
        'Þ' => "TH",
        'ı' => "i",
        'ĳ' => "ij",
        'Ĳ' => "IJ",
        _ => return None,
    })
}

/// Maps Latin letters carrying diacritics to their ASCII base letters and
/// expands the common ligatures. Everything else passes through.
pub fn project_ascii(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut after_ascii_letter = false;
    for c in text.chars() {
        if c.is_ascii() {
            out.push(c);
            after_ascii_letter = c.is_ascii_alphabetic();
            continue;
        }
        if let Some(expansion) = ascii_expansion(c) {
            out.push_str(expansion);
            after_ascii_letter = true;
            continue;
        }
        if is_combining_mark(c) {
            // Decomposed input: the base letter has already been emitted.
            if !after_ascii_letter {
                out.push(c);
            }
            continue;
        }
        let mut parts = Vec::with_capacity(3);
        decompose_canonical(c, |d| parts.push(d));
        match parts.split_first() {
            Some((base, marks)) if base.is_ascii_alphabetic() && marks.iter().all(|&m| is_combining_mark(m)) => {
                out.push(*base);
                after_ascii_letter = true;
            }
            _ => {
                out.push(c);
                after_ascii_letter = false;
            }
        }
    }
    out
}

/// Lowercases, keeps letters, digits and whitespace (as single spaces).
pub fn filter_alnum(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut in_space = false;
    for c in text.chars().flat_map(char::to_lowercase) {
        if c.is_alphanumeric() {
            out.push(c);
            in_space = false;
        } else if c.is_whitespace() && !in_space {
            out.push(' ');
            in_space = true;
        }
    }
    out
}

/// Optionally turns newlines into spaces, then optionally removes every
/// non-newline whitespace character.
pub fn squash_spacing(text: &str, drop_spaces: bool, drop_linebreaks: bool) -> String {
    text.chars()
        .map(|c| if drop_linebreaks && (c == '\n' || c == '\r') { ' ' } else { c })
        .filter(|&c| !(drop_spaces && c.is_whitespace() && c != '\n' && c != '\r'))
        .collect()
}

/// Deletes each mask everywhere, one full pass per mask in list order.
pub fn apply_masks(text: &str, masks: &[String]) -> String {
    let mut out = text.to_owned();
    for mask in masks.iter().filter(|m| !m.is_empty()) {
        out = out.replace(mask.as_str(), "");
    }
    out
}
