//! Pipe-table recognition and translation to HTML.

/// How translated tables are rendered.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HtmlFlavor {
    /// `<td>` everywhere, cell text emitted verbatim. Used by markup cleanup.
    Plain,
    /// `<th>` for the header row and escaped cell text. Used for grid extraction.
    Structural,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipeTable {
    pub rows: Vec<Vec<String>>,
    /// The second line of the block was an alignment row.
    pub header: bool,
}

/// Rewrites every pipe table block in `text` as a single-line `<table>`.
/// Lines that are not part of a table are kept untouched.
pub fn pipe_tables_to_html(text: &str, flavor: HtmlFlavor) -> String {
    let lines: Vec<&str> = text.split('\n').collect();
    let mut out: Vec<String> = Vec::with_capacity(lines.len());
    let mut i = 0;
    while i < lines.len() {
        match parse_pipe_block(&lines[i..]) {
            Some((table, consumed)) => {
                out.push(render(&table, flavor));
                i += consumed;
            }
            None => {
                out.push(lines[i].to_owned());
                i += 1;
            }
        }
    }
    out.join("\n")
}

/// Parses the pipe table starting at `lines[0]`, returning it with the number
/// of lines consumed.
pub fn parse_pipe_block(lines: &[&str]) -> Option<(PipeTable, usize)> {
    let first = lines.first()?.trim();
    let leading = first.starts_with('|');
    let delimited = !leading && first.contains('|') && lines.get(1).is_some_and(|l| is_delimiter_row(l));
    if !leading && !delimited {
        return None;
    }

    let mut end = 1;
    while end < lines.len() {
        let line = lines[end].trim();
        let continues = if leading { line.starts_with('|') } else { line.contains('|') };
        if line.is_empty() || !continues {
            break;
        }
        end += 1;
    }

    let mut rows = Vec::new();
    let mut header = false;
    for (idx, line) in lines[..end].iter().enumerate() {
        if is_delimiter_row(line) {
            header |= idx == 1;
            continue;
        }
        rows.push(split_cells(line));
    }
    if rows.iter().all(|r| r.iter().all(String::is_empty)) {
        return None;
    }
    Some((PipeTable { rows, header }, end))
}

/// `|---|:--:|--:|` style alignment row.
pub fn is_delimiter_row(line: &str) -> bool {
    let line = line.trim();
    if !line.contains('-') {
        return false;
    }
    let cells = split_cells(line);
    !cells.is_empty()
        && cells.iter().all(|cell| {
            let inner = cell.strip_prefix(':').unwrap_or(cell);
            let inner = inner.strip_suffix(':').unwrap_or(inner);
            !inner.is_empty() && inner.chars().all(|c| c == '-')
        })
}

/// Splits a pipe row into trimmed cells; `\|` is a literal pipe.
pub fn split_cells(line: &str) -> Vec<String> {
    let line = line.trim();
    let line = line.strip_prefix('|').unwrap_or(line);
    let line = match line.strip_suffix('|') {
        Some(rest) if !rest.ends_with('\\') => rest,
        _ => line,
    };

    let mut cells = Vec::new();
    let mut current = String::new();
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '\\' if chars.peek() == Some(&'|') => {
                current.push('|');
                chars.next();
            }
            '|' => cells.push(std::mem::take(&mut current)),
            _ => current.push(c),
        }
    }
    cells.push(current);
    cells.into_iter().map(|c| collapse_whitespace(&c)).collect()
}

pub(crate) fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub(crate) fn escape_html(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            _ => out.push(c),
        }
    }
    out
}

fn render(table: &PipeTable, flavor: HtmlFlavor) -> String {
    let mut html = String::from("<table>");
    for (r, row) in table.rows.iter().enumerate() {
        let tag = if flavor == HtmlFlavor::Structural && table.header && r == 0 { "th" } else { "td" };
        html.push_str("<tr>");
        for cell in row {
            html.push('<');
            html.push_str(tag);
            html.push('>');
            match flavor {
                HtmlFlavor::Plain => html.push_str(cell),
                HtmlFlavor::Structural => html.push_str(&escape_html(cell)),
            }
            html.push_str("</");
            html.push_str(tag);
            html.push('>');
        }
        html.push_str("</tr>");
    }
    html.push_str("</table>");
    html
}
