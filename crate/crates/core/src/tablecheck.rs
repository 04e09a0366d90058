//! HTML table subset used by the unified format: grid reconstruction under
//! rowspan/colspan, structural validity and canonical serialization.
//!
//! Structural tags are `table`, `thead`, `tbody`, `tr`, `td` and `th`. Cell
//! content is opaque except that attributes on the inline tags `b`, `i`,
//! `sub` and `sup` are dropped by [`canonicalize_table`].

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::docmodel::{AnnotationDoc, SampleRecord};
use crate::textfilter::{DecisionDetail, FilterDecision, Reason};

const INLINE_TAGS: [&str; 4] = ["b", "i", "sub", "sup"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellPlacement {
    pub row: usize,
    pub col: usize,
    pub rowspan: usize,
    pub colspan: usize,
    pub content: String,
    pub is_header: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableGrid {
    pub n_rows: usize,
    pub n_cols: usize,
    pub cells: Vec<CellPlacement>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TableDefect {
    /// Sum of colspans of cells covering `row` differs from the grid width.
    RaggedRow { row: usize, width: usize },
    OverlappingSpans { row: usize, col: usize },
    UncoveredPosition { row: usize, col: usize },
    SpanOutOfBounds { row: usize, col: usize },
    MalformedMarkup { offset: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableVerdict {
    pub valid: bool,
    pub defects: Vec<TableDefect>,
}

impl TableVerdict {
    fn from_defects(defects: Vec<TableDefect>) -> Self {
        Self {
            valid: defects.is_empty(),
            defects,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed table markup at byte {offset}: {kind}")]
pub struct MarkupError {
    pub offset: usize,
    pub kind: MarkupErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MarkupErrorKind {
    NotATable,
    Unclosed(String),
    Mismatched { expected: String, found: String },
    UnexpectedTag(String),
    StrayText,
    BadSpan { attr: String, value: String },
    EmptyTable,
    TrailingContent,
}

impl fmt::Display for MarkupErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MarkupErrorKind::NotATable => f.write_str("input does not start with <table>"),
            MarkupErrorKind::Unclosed(t) => write!(f, "unclosed <{t}>"),
            MarkupErrorKind::Mismatched { expected, found } => {
                write!(f, "expected </{expected}>, found </{found}>")
            }
            MarkupErrorKind::UnexpectedTag(t) => write!(f, "unexpected tag <{t}>"),
            MarkupErrorKind::StrayText => f.write_str("text outside a cell"),
            MarkupErrorKind::BadSpan { attr, value } => {
                write!(f, "{attr}=\"{value}\" is not a positive integer")
            }
            MarkupErrorKind::EmptyTable => f.write_str("table has no cells"),
            MarkupErrorKind::TrailingContent => f.write_str("content after </table>"),
        }
    }
}

impl From<MarkupError> for TableDefect {
    fn from(e: MarkupError) -> Self {
        TableDefect::MalformedMarkup {
            offset: e.offset,
            message: e.kind.to_string(),
        }
    }
}

// ---------------------------------------------------------------------------
// Tokenizer

#[derive(Debug, Clone, PartialEq, Eq)]
struct Tag<'a> {
    name: String,
    closing: bool,
    self_closing: bool,
    attrs: Vec<(String, Option<&'a str>)>,
    start: usize,
    end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Token<'a> {
    Tag(Tag<'a>),
    Text { start: usize, end: usize },
}

fn tokenize(src: &str) -> Vec<Token<'_>> {
    let bytes = src.as_bytes();
    let mut tokens = Vec::new();
    let mut text_start = 0;
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'<' {
            if let Some(tag) = read_tag(src, i) {
                if text_start < i {
                    tokens.push(Token::Text {
                        start: text_start,
                        end: i,
                    });
                }
                i = tag.end;
                text_start = i;
                tokens.push(Token::Tag(tag));
                continue;
            }
        }
        i += 1;
    }
    if text_start < bytes.len() {
        tokens.push(Token::Text {
            start: text_start,
            end: bytes.len(),
        });
    }
    tokens
}

/// Reads a tag starting at `start` (which holds `<`). Anything that does not
/// look like `<name ...>` or `</name>` is left as text.
fn read_tag(src: &str, start: usize) -> Option<Tag<'_>> {
    let bytes = src.as_bytes();
    let mut i = start + 1;
    let closing = bytes.get(i) == Some(&b'/');
    if closing {
        i += 1;
    }
    let name_start = i;
    while i < bytes.len() && bytes[i].is_ascii_alphanumeric() {
        i += 1;
    }
    if i == name_start || !bytes[name_start].is_ascii_alphabetic() {
        return None;
    }
    let name = src[name_start..i].to_ascii_lowercase();
    let mut attrs = Vec::new();
    let mut self_closing = false;
    loop {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        match bytes.get(i)? {
            b'>' => {
                i += 1;
                break;
            }
            b'/' if bytes.get(i + 1) == Some(&b'>') => {
                self_closing = true;
                i += 2;
                break;
            }
            _ => {}
        }
        let attr_start = i;
        while i < bytes.len() && !matches!(bytes[i], b'=' | b'>' | b'/') && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i == attr_start {
            // lone '/' not followed by '>'
            i += 1;
            continue;
        }
        let attr_name = src[attr_start..i].to_ascii_lowercase();
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        let mut value = None;
        if bytes.get(i) == Some(&b'=') {
            i += 1;
            while i < bytes.len() && bytes[i].is_ascii_whitespace() {
                i += 1;
            }
            match bytes.get(i)? {
                q @ (b'"' | b'\'') => {
                    let q = *q;
                    let vstart = i + 1;
                    let rel = bytes[vstart..].iter().position(|b| *b == q)?;
                    value = Some(&src[vstart..vstart + rel]);
                    i = vstart + rel + 1;
                }
                _ => {
                    let vstart = i;
                    while i < bytes.len() && bytes[i] != b'>' && !bytes[i].is_ascii_whitespace() {
                        i += 1;
                    }
                    value = Some(&src[vstart..i]);
                }
            }
        }
        attrs.push((attr_name, value));
    }
    Some(Tag {
        name,
        closing,
        self_closing,
        attrs,
        start,
        end: i,
    })
}

fn is_structural(name: &str) -> bool {
    matches!(name, "table" | "thead" | "tbody" | "tr" | "td" | "th")
}

fn span_attr(tag: &Tag<'_>, attr: &str) -> Result<usize, MarkupError> {
    match tag.attrs.iter().rev().find(|(n, _)| n == attr) {
        None => Ok(1),
        Some((_, value)) => {
            let raw = value.unwrap_or("");
            let trimmed = raw.trim();
            match trimmed.parse::<usize>() {
                Ok(n) if n > 0 && trimmed.bytes().all(|b| b.is_ascii_digit()) => Ok(n),
                _ => Err(MarkupError {
                    offset: tag.start,
                    kind: MarkupErrorKind::BadSpan {
                        attr: attr.to_string(),
                        value: raw.to_string(),
                    },
                }),
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Structure

#[derive(Debug, Clone, PartialEq, Eq)]
struct RawCell {
    rowspan: usize,
    colspan: usize,
    th: bool,
    header: bool,
    content_start: usize,
    content_end: usize,
}

#[derive(Debug, Clone, Default)]
struct RawTable {
    /// Group wrapper (`thead`/`tbody`) of each row, or `None` for bare rows.
    rows: Vec<(Option<usize>, Vec<RawCell>)>,
    groups: Vec<String>,
}

fn err(offset: usize, kind: MarkupErrorKind) -> MarkupError {
    MarkupError { offset, kind }
}

/// Parses the structural skeleton of a table.
fn parse_structure(src: &str) -> Result<RawTable, MarkupError> {
    let tokens = tokenize(src);
    let mut it = tokens.iter().peekable();
    let mut table = RawTable::default();

    let is_ws = |s: usize, e: usize| src[s..e].trim().is_empty();

    // leading whitespace, then <table>
    let open = loop {
        match it.next() {
            Some(Token::Text { start, end }) if is_ws(*start, *end) => continue,
            Some(Token::Tag(t)) if t.name == "table" && !t.closing => break t,
            Some(Token::Tag(t)) => return Err(err(t.start, MarkupErrorKind::NotATable)),
            Some(Token::Text { start, .. }) => return Err(err(*start, MarkupErrorKind::NotATable)),
            None => return Err(err(0, MarkupErrorKind::NotATable)),
        }
    };

    let mut group: Option<(usize, &Tag<'_>)> = None;
    let mut closed = false;
    while let Some(tok) = it.next() {
        let tag = match tok {
            Token::Text { start, end } if is_ws(*start, *end) => continue,
            Token::Text { start, .. } => return Err(err(*start, MarkupErrorKind::StrayText)),
            Token::Tag(t) => t,
        };
        match (tag.name.as_str(), tag.closing) {
            ("thead" | "tbody", false) if group.is_none() => {
                table.groups.push(tag.name.clone());
                group = Some((table.groups.len() - 1, tag));
            }
            ("thead" | "tbody", true) => match group {
                Some((_, g)) if g.name == tag.name => group = None,
                Some((_, g)) => {
                    return Err(err(
                        tag.start,
                        MarkupErrorKind::Mismatched {
                            expected: g.name.clone(),
                            found: tag.name.clone(),
                        },
                    ))
                }
                None => return Err(err(tag.start, MarkupErrorKind::UnexpectedTag(format!("/{}", tag.name)))),
            },
            ("tr", false) => {
                let header_group = group.map(|(_, g)| g.name == "thead").unwrap_or(false);
                let cells = parse_row(src, &mut it, tag, header_group)?;
                table.rows.push((group.map(|(i, _)| i), cells));
            }
            ("table", true) => {
                if let Some((_, g)) = group {
                    return Err(err(g.start, MarkupErrorKind::Unclosed(g.name.clone())));
                }
                closed = true;
                break;
            }
            _ => {
                let name = if tag.closing {
                    format!("/{}", tag.name)
                } else {
                    tag.name.clone()
                };
                return Err(err(tag.start, MarkupErrorKind::UnexpectedTag(name)));
            }
        }
    }
    if !closed {
        return Err(err(open.start, MarkupErrorKind::Unclosed("table".into())));
    }
    for tok in it {
        match tok {
            Token::Text { start, end } if is_ws(*start, *end) => {}
            Token::Text { start, .. } => return Err(err(*start, MarkupErrorKind::TrailingContent)),
            Token::Tag(t) => return Err(err(t.start, MarkupErrorKind::TrailingContent)),
        }
    }
    if table.rows.iter().all(|(_, cells)| cells.is_empty()) {
        return Err(err(open.start, MarkupErrorKind::EmptyTable));
    }
    Ok(table)
}

fn parse_row<'a, 'b, I>(
    src: &str,
    it: &mut std::iter::Peekable<I>,
    tr: &Tag<'_>,
    header_group: bool,
) -> Result<Vec<RawCell>, MarkupError>
where
    'a: 'b,
    I: Iterator<Item = &'b Token<'a>>,
{
    let mut cells = Vec::new();
    loop {
        let tok = it
            .next()
            .ok_or_else(|| err(tr.start, MarkupErrorKind::Unclosed("tr".into())))?;
        let tag = match tok {
            Token::Text { start, end } if src[*start..*end].trim().is_empty() => continue,
            Token::Text { start, .. } => return Err(err(*start, MarkupErrorKind::StrayText)),
            Token::Tag(t) => t,
        };
        match (tag.name.as_str(), tag.closing) {
            ("td" | "th", false) => {
                let rowspan = span_attr(tag, "rowspan")?;
                let colspan = span_attr(tag, "colspan")?;
                if tag.self_closing {
                    return Err(err(tag.start, MarkupErrorKind::Unclosed(tag.name.clone())));
                }
                let content_start = tag.end;
                let content_end = loop {
                    match it.next() {
                        None => return Err(err(tag.start, MarkupErrorKind::Unclosed(tag.name.clone()))),
                        Some(Token::Text { .. }) => {}
                        Some(Token::Tag(inner)) if is_structural(&inner.name) => {
                            if inner.closing && inner.name == tag.name {
                                break inner.start;
                            }
                            if inner.closing && matches!(inner.name.as_str(), "td" | "th") {
                                return Err(err(
                                    inner.start,
                                    MarkupErrorKind::Mismatched {
                                        expected: tag.name.clone(),
                                        found: inner.name.clone(),
                                    },
                                ));
                            }
                            return Err(err(inner.start, MarkupErrorKind::Unclosed(tag.name.clone())));
                        }
                        Some(Token::Tag(_)) => {}
                    }
                };
                cells.push(RawCell {
                    rowspan,
                    colspan,
                    th: tag.name == "th",
                    header: header_group || tag.name == "th",
                    content_start,
                    content_end,
                });
            }
            ("tr", true) => return Ok(cells),
            _ => {
                let name = if tag.closing {
                    format!("/{}", tag.name)
                } else {
                    tag.name.clone()
                };
                return Err(err(tag.start, MarkupErrorKind::UnexpectedTag(name)));
            }
        }
    }
}

/// Places cells with the first-fit rule: each cell goes to the leftmost column
/// of its row not yet covered by a cell from an earlier row or to its left.
pub fn parse_table(html: &str) -> Result<TableGrid, MarkupError> {
    let raw = parse_structure(html)?;
    let n_rows = raw.rows.len();
    // covered[r] grows on demand; rows past n_rows are tracked so that
    // overflowing rowspans do not panic.
    let mut covered: Vec<Vec<bool>> = vec![Vec::new(); n_rows];
    let mut cells = Vec::new();
    for (r, (_, row)) in raw.rows.iter().enumerate() {
        let mut col = 0;
        for cell in row {
            while covered[r].get(col).copied().unwrap_or(false) {
                col += 1;
            }
            for line in &mut covered[r..(r + cell.rowspan).min(n_rows)] {
                if line.len() < col + cell.colspan {
                    line.resize(col + cell.colspan, false);
                }
                for flag in &mut line[col..col + cell.colspan] {
                    *flag = true;
                }
            }
            cells.push(CellPlacement {
                row: r,
                col,
                rowspan: cell.rowspan,
                colspan: cell.colspan,
                content: html[cell.content_start..cell.content_end].to_string(),
                is_header: cell.header,
            });
            col += cell.colspan;
        }
    }
    let n_cols = cells.iter().map(|c| c.col + c.colspan).max().unwrap_or(0);
    Ok(TableGrid {
        n_rows,
        n_cols,
        cells,
    })
}

pub fn table_valid(grid: &TableGrid) -> TableVerdict {
    let mut defects = Vec::new();
    let mut cover = vec![vec![0u32; grid.n_cols]; grid.n_rows];
    let mut row_width = vec![0usize; grid.n_rows];
    for cell in &grid.cells {
        if cell.row + cell.rowspan > grid.n_rows || cell.col + cell.colspan > grid.n_cols {
            defects.push(TableDefect::SpanOutOfBounds {
                row: cell.row,
                col: cell.col,
            });
        }
        for r in cell.row..(cell.row + cell.rowspan).min(grid.n_rows) {
            row_width[r] += cell.colspan;
            let end = (cell.col + cell.colspan).min(grid.n_cols);
            for n in &mut cover[r][cell.col..end] {
                *n += 1;
            }
        }
    }
    for (r, width) in row_width.iter().enumerate() {
        if *width != grid.n_cols {
            defects.push(TableDefect::RaggedRow { row: r, width: *width });
        }
    }
    for (r, line) in cover.iter().enumerate() {
        for (c, n) in line.iter().enumerate() {
            match n {
                0 => defects.push(TableDefect::UncoveredPosition { row: r, col: c }),
                1 => {}
                _ => defects.push(TableDefect::OverlappingSpans { row: r, col: c }),
            }
        }
    }
    TableVerdict::from_defects(defects)
}

/// Parses and validates; markup errors become a single MalformedMarkup defect.
pub fn check_table(html: &str) -> TableVerdict {
    match parse_table(html) {
        Ok(grid) => table_valid(&grid),
        Err(e) => TableVerdict::from_defects(vec![e.into()]),
    }
}

pub fn extract_tables(doc: &AnnotationDoc) -> Vec<&str> {
    doc.tables().collect()
}

/// Re-emits a table in the unified format: no attributes except non-unit
/// rowspan/colspan, no whitespace between structural tags, cell content kept
/// except for attributes on inline formatting tags.
pub fn canonicalize_table(html: &str) -> Result<String, MarkupError> {
    let raw = parse_structure(html)?;
    let mut out = String::with_capacity(html.len());
    out.push_str("<table>");
    let mut open_group: Option<usize> = None;
    for (group, cells) in &raw.rows {
        if *group != open_group {
            if let Some(g) = open_group {
                out.push_str(&format!("</{}>", raw.groups[g]));
            }
            if let Some(g) = group {
                out.push_str(&format!("<{}>", raw.groups[*g]));
            }
            open_group = *group;
        }
        out.push_str("<tr>");
        for cell in cells {
            let name = if cell.th { "th" } else { "td" };
            out.push('<');
            out.push_str(name);
            if cell.rowspan != 1 {
                out.push_str(&format!(" rowspan=\"{}\"", cell.rowspan));
            }
            if cell.colspan != 1 {
                out.push_str(&format!(" colspan=\"{}\"", cell.colspan));
            }
            out.push('>');
            out.push_str(&strip_inline_attrs(&html[cell.content_start..cell.content_end]));
            out.push_str(&format!("</{name}>"));
        }
        out.push_str("</tr>");
    }
    if let Some(g) = open_group {
        out.push_str(&format!("</{}>", raw.groups[g]));
    }
    out.push_str("</table>");
    Ok(out)
}

fn strip_inline_attrs(content: &str) -> String {
    let mut out = String::with_capacity(content.len());
    let mut last = 0;
    for tok in tokenize(content) {
        if let Token::Tag(tag) = tok {
            if INLINE_TAGS.contains(&tag.name.as_str()) && !tag.closing && !tag.attrs.is_empty() {
                out.push_str(&content[last..tag.start]);
                out.push('<');
                out.push_str(&tag.name);
                out.push('>');
                last = tag.end;
            }
        }
    }
    out.push_str(&content[last..]);
    out
}

pub fn table_filter_doc(sample_id: &str, doc: &AnnotationDoc) -> FilterDecision {
    for (idx, table) in doc.tables().enumerate() {
        if !check_table(table).valid {
            return FilterDecision::discard(
                sample_id,
                Reason::InvalidTable,
                Some(DecisionDetail::ElementIndex(idx)),
            );
        }
    }
    FilterDecision::retain(sample_id, None)
}

pub fn table_filter(sample: &SampleRecord) -> FilterDecision {
    table_filter_doc(&sample.sample_id, &sample.annotation)
}
