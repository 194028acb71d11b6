//! Table extraction into span-resolved grids and directional cell lookups.

mod html;
pub mod markdown;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use self::html::{parse_tables, RawTable};
use self::markdown::{escape_html, pipe_tables_to_html, HtmlFlavor};

/// One table cell together with the rectangle it occupies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridCell {
    pub text: String,
    pub row: usize,
    pub col: usize,
    pub row_span: usize,
    pub col_span: usize,
    pub header: bool,
}

impl GridCell {
    #[cfg(test)]
    fn covers(&self, row: usize, col: usize) -> bool {
        (self.row..self.row + self.row_span).contains(&row) && (self.col..self.col + self.col_span).contains(&col)
    }
}

/// What a single `(row, col)` slot holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slot<'a> {
    pub text: &'a str,
    /// The slot is the top-left corner of its cell.
    pub origin: bool,
}

/// Occupancy matrix of a table: every slot is owned by exactly one cell.
///
/// Cells are stored in row-major order of their origin slot, so two grids
/// describing the same table compare equal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableGrid {
    cells: Vec<GridCell>,
    slots: Vec<usize>,
    n_rows: usize,
    n_cols: usize,
    header_rows: usize,
}

/// Directional and heading relations between cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationKind {
    Up,
    Down,
    Left,
    Right,
    TopHeading,
    LeftHeading,
}

impl RelationKind {
    pub const ALL: [RelationKind; 6] = [
        RelationKind::Up,
        RelationKind::Down,
        RelationKind::Left,
        RelationKind::Right,
        RelationKind::TopHeading,
        RelationKind::LeftHeading,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RelationKind::Up => "up",
            RelationKind::Down => "down",
            RelationKind::Left => "left",
            RelationKind::Right => "right",
            RelationKind::TopHeading => "top_heading",
            RelationKind::LeftHeading => "left_heading",
        }
    }
}

impl fmt::Display for RelationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RelationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RelationKind::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| format!("unknown relation `{s}`"))
    }
}

/// Every table in `doc`, in document order. Pipe tables are translated to
/// HTML first; tables without any row are skipped.
pub fn extract_tables(doc: &str) -> Vec<TableGrid> {
    let html = pipe_tables_to_html(doc, HtmlFlavor::Structural);
    parse_tables(&html).iter().filter_map(TableGrid::from_raw).collect()
}

impl TableGrid {
    fn from_raw(raw: &RawTable) -> Option<TableGrid> {
        let n_rows = raw.rows.len();
        if n_rows == 0 {
            return None;
        }

        let mut occupancy: Vec<Vec<Option<usize>>> = vec![Vec::new(); n_rows];
        let mut cells: Vec<GridCell> = Vec::new();
        for (r, row) in raw.rows.iter().enumerate() {
            let mut col = 0;
            for raw_cell in row {
                while occupancy[r].get(col).is_some_and(Option::is_some) {
                    col += 1;
                }
                let row_span = match raw_cell.rowspan {
                    0 => n_rows - r,
                    n => n.min(n_rows - r),
                };
                // Shrink the colspan so the rectangle never overlaps a
                // rowspan coming from above.
                let mut col_span = 0;
                while col_span < raw_cell.colspan && !occupancy[r].get(col + col_span).is_some_and(Option::is_some) {
                    col_span += 1;
                }
                let id = cells.len();
                for slot_row in occupancy.iter_mut().skip(r).take(row_span) {
                    if slot_row.len() < col + col_span {
                        slot_row.resize(col + col_span, None);
                    }
                    for slot in &mut slot_row[col..col + col_span] {
                        *slot = Some(id);
                    }
                }
                cells.push(GridCell {
                    text: raw_cell.text.clone(),
                    row: r,
                    col,
                    row_span,
                    col_span,
                    header: raw_cell.header,
                });
                col += col_span;
            }
        }

        let n_cols = occupancy.iter().map(Vec::len).max().unwrap_or(0);
        if n_cols == 0 {
            return None;
        }

        // Ragged rows are padded on the right with empty cells; padding in a
        // header row stays a header cell.
        for (r, slot_row) in occupancy.iter_mut().enumerate() {
            let own = &raw.rows[r];
            let header_row = !own.is_empty() && own.iter().all(|c| c.header);
            slot_row.resize(n_cols, None);
            for (c, slot) in slot_row.iter_mut().enumerate() {
                if slot.is_none() {
                    *slot = Some(cells.len());
                    cells.push(GridCell {
                        text: String::new(),
                        row: r,
                        col: c,
                        row_span: 1,
                        col_span: 1,
                        header: header_row,
                    });
                }
            }
        }

        let mut order: Vec<usize> = (0..cells.len()).collect();
        order.sort_by_key(|&i| (cells[i].row, cells[i].col));
        let mut remap = vec![0; cells.len()];
        for (new, &old) in order.iter().enumerate() {
            remap[old] = new;
        }
        let slots: Vec<usize> = occupancy.into_iter().flatten().map(|id| remap[id.unwrap()]).collect();
        let mut sorted: Vec<Option<GridCell>> = cells.into_iter().map(Some).collect();
        let cells: Vec<GridCell> = order.iter().map(|&i| sorted[i].take().unwrap()).collect();

        let header_rows = (0..n_rows).take_while(|&r| (0..n_cols).all(|c| cells[slots[r * n_cols + c]].header)).count();

        Some(TableGrid { cells, slots, n_rows, n_cols, header_rows })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn header_rows(&self) -> usize {
        self.header_rows
    }

    pub fn cells(&self) -> &[GridCell] {
        &self.cells
    }

    /// Index into [`TableGrid::cells`] of the cell owning `(row, col)`.
    pub fn cell_id(&self, row: usize, col: usize) -> usize {
        assert!(
            row < self.n_rows && col < self.n_cols,
            "slot ({row}, {col}) outside a {}x{} table",
            self.n_rows,
            self.n_cols
        );
        self.slots[row * self.n_cols + col]
    }

    /// The cell owning `(row, col)`. Panics when out of bounds.
    pub fn cell_at(&self, row: usize, col: usize) -> &GridCell {
        &self.cells[self.cell_id(row, col)]
    }

    pub fn slot(&self, row: usize, col: usize) -> Slot<'_> {
        let cell = self.cell_at(row, col);
        Slot { text: &cell.text, origin: cell.row == row && cell.col == col }
    }

    pub fn text_at(&self, row: usize, col: usize) -> &str {
        &self.cell_at(row, col).text
    }

    /// Slot texts as a plain matrix (span contents repeated).
    pub fn text_matrix(&self) -> Vec<Vec<String>> {
        (0..self.n_rows).map(|r| (0..self.n_cols).map(|c| self.text_at(r, c).to_owned()).collect()).collect()
    }

    /// Slot reached from `origin` by `kind`, or `None` at the table edge.
    ///
    /// Directional moves step off the origin cell's rectangle along the
    /// origin slot's row or column. Heading lookups return the first slot with
    /// non-empty text scanning from the top (or left) margin toward the origin
    /// cell.
    ///
    /// # Panics
    ///
    /// When `origin` lies outside the grid.
    pub fn relation_slot(&self, origin: (usize, usize), kind: RelationKind) -> Option<(usize, usize)> {
        let (row, col) = origin;
        let cell = self.cell_at(row, col);
        match kind {
            RelationKind::Up => cell.row.checked_sub(1).map(|r| (r, col)),
            RelationKind::Down => Some(cell.row + cell.row_span).filter(|&r| r < self.n_rows).map(|r| (r, col)),
            RelationKind::Left => cell.col.checked_sub(1).map(|c| (row, c)),
            RelationKind::Right => Some(cell.col + cell.col_span).filter(|&c| c < self.n_cols).map(|c| (row, c)),
            RelationKind::TopHeading => {
                (0..cell.row).find(|&r| !self.text_at(r, col).trim().is_empty()).map(|r| (r, col))
            }
            RelationKind::LeftHeading => {
                (0..cell.col).find(|&c| !self.text_at(row, c).trim().is_empty()).map(|c| (row, c))
            }
        }
    }

    /// Text of the cell reached from `origin` by `kind`.
    pub fn relation(&self, origin: (usize, usize), kind: RelationKind) -> Option<&str> {
        self.relation_slot(origin, kind).map(|(r, c)| self.text_at(r, c))
    }

    /// True when both slots belong to the same cell.
    pub fn same_cell(&self, a: (usize, usize), b: (usize, usize)) -> bool {
        self.cell_id(a.0, a.1) == self.cell_id(b.0, b.1)
    }

    /// Renders the grid as an HTML table that re-extracts to an equal grid.
    pub fn to_html(&self) -> String {
        let mut html = String::from("<table>");
        for r in 0..self.n_rows {
            html.push_str("<tr>");
            for cell in self.cells.iter().filter(|c| c.row == r) {
                let tag = if cell.header { "th" } else { "td" };
                html.push('<');
                html.push_str(tag);
                if cell.row_span > 1 {
                    html.push_str(&format!(" rowspan=\"{}\"", cell.row_span));
                }
                if cell.col_span > 1 {
                    html.push_str(&format!(" colspan=\"{}\"", cell.col_span));
                }
                html.push('>');
                html.push_str(&escape_html(&cell.text));
                html.push_str(&format!("</{tag}>"));
            }
            html.push_str("</tr>");
        }
        html.push_str("</table>");
        html
    }

    #[cfg(test)]
    fn check_coverage(&self) {
        for r in 0..self.n_rows {
            for c in 0..self.n_cols {
                let owners = self.cells.iter().filter(|cell| cell.covers(r, c)).count();
                assert_eq!(owners, 1, "slot ({r},{c}) covered {owners} times");
            }
        }
    }
}
