//! A lenient HTML table reader.
//!
//! Only the table vocabulary is interpreted (`table`, `tr`, `td`, `th`, `br`);
//! other tags are dropped and their text kept. Malformed markup degrades to
//! whatever structure can be recovered. Tables nested inside a cell are
//! flattened to text within that cell.

use super::markdown::collapse_whitespace;

const MAX_COLSPAN: usize = 1000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct RawCell {
    pub text: String,
    pub header: bool,
    /// 0 means "to the last row".
    pub rowspan: usize,
    pub colspan: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub(crate) struct RawTable {
    pub rows: Vec<Vec<RawCell>>,
}

#[derive(Debug, PartialEq, Eq)]
enum Token<'a> {
    Start { name: String, attrs: &'a str },
    End { name: String },
    Text(&'a str),
}

fn tokenize(html: &str) -> Vec<Token<'_>> {
    let bytes = html.as_bytes();
    let mut tokens = Vec::new();
    let mut text_start = 0;
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'<' {
            if let Some((token, next)) = parse_tag(html, i) {
                if text_start < i {
                    tokens.push(Token::Text(&html[text_start..i]));
                }
                tokens.extend(token);
                i = next;
                text_start = i;
                continue;
            }
        }
        i += 1;
    }
    if text_start < bytes.len() {
        tokens.push(Token::Text(&html[text_start..]));
    }
    tokens
}

/// Parses a tag starting at byte `start` (a `<`). Comments yield no token.
fn parse_tag(html: &str, start: usize) -> Option<(Option<Token<'_>>, usize)> {
    let rest = &html[start..];
    if rest.starts_with("<!--") {
        let close = rest[4..].find("-->")?;
        return Some((None, start + 4 + close + 3));
    }
    let bytes = rest.as_bytes();
    let mut j = 1;
    let closing = bytes.get(1) == Some(&b'/');
    if closing {
        j += 1;
    }
    if !bytes.get(j).is_some_and(u8::is_ascii_alphabetic) {
        return None;
    }
    let name_start = j;
    while j < bytes.len() && bytes[j].is_ascii_alphanumeric() {
        j += 1;
    }
    let name = rest[name_start..j].to_ascii_lowercase();
    let gt = j + rest[j..].find('>')?;
    let attrs = rest[j..gt].trim_end_matches('/');
    let token = if closing { Token::End { name } } else { Token::Start { name, attrs } };
    Some((Some(token), start + gt + 1))
}

/// Reads an integer attribute such as `rowspan="2"`.
fn span_attr(attrs: &str, key: &str) -> Option<usize> {
    let lower = attrs.to_ascii_lowercase();
    let mut search = 0;
    while let Some(pos) = lower[search..].find(key) {
        let at = search + pos;
        search = at + key.len();
        let boundary = at == 0 || lower.as_bytes()[at - 1].is_ascii_whitespace();
        if !boundary {
            continue;
        }
        let tail = lower[at + key.len()..].trim_start();
        let Some(tail) = tail.strip_prefix('=') else { continue };
        let tail = tail.trim_start().trim_start_matches(['"', '\'']);
        let digits: String = tail.chars().take_while(char::is_ascii_digit).collect();
        return digits.parse().ok();
    }
    None
}

/// Decodes the handful of entities that occur in converter output.
pub(crate) fn decode_entities(text: &str) -> String {
    if !text.contains('&') {
        return text.to_owned();
    }
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(pos) = rest.find('&') {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        let decoded = tail.find(';').filter(|&end| end <= 10).and_then(|end| {
            let entity = &tail[1..end];
            let c = match entity {
                "amp" => Some('&'),
                "lt" => Some('<'),
                "gt" => Some('>'),
                "quot" => Some('"'),
                "apos" => Some('\''),
                "nbsp" => Some('\u{a0}'),
                _ => entity
                    .strip_prefix("#x")
                    .or_else(|| entity.strip_prefix("#X"))
                    .and_then(|hex| u32::from_str_radix(hex, 16).ok())
                    .or_else(|| entity.strip_prefix('#').and_then(|d| d.parse().ok()))
                    .and_then(char::from_u32),
            };
            c.map(|c| (c, end + 1))
        });
        match decoded {
            Some((c, len)) => {
                out.push(c);
                rest = &tail[len..];
            }
            None => {
                out.push('&');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

fn is_block_tag(name: &str) -> bool {
    matches!(name, "p" | "div" | "li" | "ul" | "ol" | "h1" | "h2" | "h3" | "h4" | "h5" | "h6")
}

#[derive(Default)]
struct Builder {
    rows: Vec<Vec<RawCell>>,
    row: Option<Vec<RawCell>>,
    cell: Option<RawCell>,
    nested: usize,
}

impl Builder {
    fn push_text(&mut self, text: &str) {
        if let Some(cell) = self.cell.as_mut() {
            cell.text.push_str(text);
        }
    }

    fn close_cell(&mut self) {
        if let Some(mut cell) = self.cell.take() {
            cell.text = collapse_whitespace(&cell.text);
            self.row.get_or_insert_with(Vec::new).push(cell);
        }
    }

    fn close_row(&mut self) {
        self.close_cell();
        if let Some(row) = self.row.take() {
            self.rows.push(row);
        }
    }

    fn finish(mut self) -> RawTable {
        self.close_row();
        RawTable { rows: self.rows }
    }

    fn nested_token(&mut self, token: &Token<'_>) {
        match token {
            Token::Start { name, .. } if name == "table" => self.nested += 1,
            Token::End { name } if name == "table" => self.nested -= 1,
            Token::Start { name, .. } | Token::End { name }
                if matches!(name.as_str(), "tr" | "td" | "th" | "br") || is_block_tag(name) =>
            {
                self.push_text(" ")
            }
            Token::Text(t) => self.push_text(&decode_entities(t)),
            _ => {}
        }
    }
}

/// Every outermost `<table>` in document order.
pub(crate) fn parse_tables(html: &str) -> Vec<RawTable> {
    let mut tables = Vec::new();
    let mut current: Option<Builder> = None;
    for token in tokenize(html) {
        let Some(b) = current.as_mut() else {
            if matches!(&token, Token::Start { name, .. } if name == "table") {
                current = Some(Builder::default());
            }
            continue;
        };
        if b.nested > 0 {
            b.nested_token(&token);
            continue;
        }
        match token {
            Token::Start { name, attrs } => match name.as_str() {
                "table" => {
                    b.nested = 1;
                    b.push_text(" ");
                }
                "tr" => {
                    b.close_row();
                    b.row = Some(Vec::new());
                }
                "td" | "th" => {
                    b.close_cell();
                    b.cell = Some(RawCell {
                        text: String::new(),
                        header: name == "th",
                        rowspan: span_attr(attrs, "rowspan").unwrap_or(1),
                        colspan: span_attr(attrs, "colspan").unwrap_or(1).clamp(1, MAX_COLSPAN),
                    });
                }
                "br" => b.push_text(" "),
                other if is_block_tag(other) => b.push_text(" "),
                _ => {}
            },
            Token::End { name } => match name.as_str() {
                "table" => tables.push(current.take().unwrap().finish()),
                "tr" => b.close_row(),
                "td" | "th" => b.close_cell(),
                other if is_block_tag(other) => b.push_text(" "),
                _ => {}
            },
            Token::Text(t) => b.push_text(&decode_entities(t)),
        }
    }
    if let Some(b) = current {
        tables.push(b.finish());
    }
    tables
}
