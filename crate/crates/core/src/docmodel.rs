//! Unified annotation format: Markdown plain text, attribute-stripped HTML
//! tables and dollar-delimited LaTeX formulas.
//!
//! [`AnnotationDoc::parse`] splits an annotation string into an ordered,
//! gap-free partition of [`ElementSpan`]s. The lexer is total: unmatched
//! delimiters degrade to plain text so that malformed structures are rejected
//! by the validators rather than by the parser.

use std::fmt;
use std::io::{BufRead, Write};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Marker the multi-column prompt asks the model to place between paragraphs.
pub const COLUMN_SEPARATOR: &str = "x----------x";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElementKind {
    PlainText,
    Table,
    InlineFormula,
    DisplayFormula,
}

impl ElementKind {
    pub fn is_formula(self) -> bool {
        matches!(self, ElementKind::InlineFormula | ElementKind::DisplayFormula)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ElementSpan {
    pub kind: ElementKind,
    /// Half-open byte offsets into the owning document's source text.
    pub byte_range: Range<usize>,
}

/// An annotation decomposed into element spans.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationDoc {
    source_text: String,
    elements: Vec<ElementSpan>,
}

impl AnnotationDoc {
    pub fn parse(text: impl Into<String>) -> Self {
        let source_text = text.into();
        let elements = lex(&source_text);
        Self {
            source_text,
            elements,
        }
    }

    pub fn source_text(&self) -> &str {
        &self.source_text
    }

    pub fn elements(&self) -> &[ElementSpan] {
        &self.elements
    }

    /// Source slice of an element of this document.
    pub fn slice(&self, span: &ElementSpan) -> &str {
        &self.source_text[span.byte_range.clone()]
    }

    pub fn spans(&self) -> impl Iterator<Item = (ElementKind, &str)> + '_ {
        self.elements.iter().map(|e| (e.kind, self.slice(e)))
    }

    pub fn serialize(&self) -> &str {
        &self.source_text
    }

    /// Plain-text spans joined by a single space; tables and formulas excluded.
    pub fn plain_text(&self) -> String {
        self.spans()
            .filter(|(k, _)| *k == ElementKind::PlainText)
            .map(|(_, s)| s)
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn tables(&self) -> impl Iterator<Item = &str> + '_ {
        self.spans()
            .filter(|(k, _)| *k == ElementKind::Table)
            .map(|(_, s)| s)
    }

    pub fn has_table(&self) -> bool {
        self.elements.iter().any(|e| e.kind == ElementKind::Table)
    }

    pub fn has_formula(&self) -> bool {
        self.elements.iter().any(|e| e.kind.is_formula())
    }

    pub fn into_source(self) -> String {
        self.source_text
    }
}

impl fmt::Display for AnnotationDoc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source_text)
    }
}

impl Serialize for AnnotationDoc {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.source_text)
    }
}

impl<'de> Deserialize<'de> for AnnotationDoc {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(deserializer).map(AnnotationDoc::parse)
    }
}

pub fn parse_annotation(text: &str) -> AnnotationDoc {
    AnnotationDoc::parse(text)
}

pub fn serialize_annotation(doc: &AnnotationDoc) -> String {
    doc.serialize().to_owned()
}

pub fn plain_text_of(doc: &AnnotationDoc) -> String {
    doc.plain_text()
}

fn lex(src: &str) -> Vec<ElementSpan> {
    let mut out: Vec<ElementSpan> = Vec::new();
    let mut cursor = 0;
    for table in find_tables(src) {
        lex_formulas(src, cursor, table.start, &mut out);
        push_span(&mut out, ElementKind::Table, table.clone());
        cursor = table.end;
    }
    lex_formulas(src, cursor, src.len(), &mut out);
    out
}

fn push_span(out: &mut Vec<ElementSpan>, kind: ElementKind, range: Range<usize>) {
    if range.is_empty() {
        return;
    }
    if kind == ElementKind::PlainText {
        if let Some(last) = out.last_mut() {
            if last.kind == ElementKind::PlainText && last.byte_range.end == range.start {
                last.byte_range.end = range.end;
                return;
            }
        }
    }
    out.push(ElementSpan {
        kind,
        byte_range: range,
    });
}

/// Top-level table spans. Nested tables belong to their outer span; an open
/// tag without a matching close is left to the plain-text lexer.
fn find_tables(src: &str) -> Vec<Range<usize>> {
    let bytes = src.as_bytes();
    let mut found = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'<' && is_table_open(&bytes[i..]) {
            if let Some(end) = matching_table_close(bytes, i) {
                found.push(i..end);
                i = end;
                continue;
            }
        }
        i += 1;
    }
    found
}

fn is_table_open(rest: &[u8]) -> bool {
    rest.len() >= 7
        && rest[1..6].eq_ignore_ascii_case(b"table")
        && matches!(rest[6], b'>' | b' ' | b'\t' | b'\n' | b'\r' | b'/')
}

const TABLE_CLOSE: &[u8] = b"</table>";

fn is_table_close(rest: &[u8]) -> bool {
    rest.len() >= TABLE_CLOSE.len() && rest[..TABLE_CLOSE.len()].eq_ignore_ascii_case(TABLE_CLOSE)
}

fn matching_table_close(bytes: &[u8], open: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut i = open;
    while i < bytes.len() {
        if bytes[i] == b'<' {
            if is_table_open(&bytes[i..]) {
                depth += 1;
            } else if is_table_close(&bytes[i..]) {
                depth -= 1;
                if depth == 0 {
                    return Some(i + TABLE_CLOSE.len());
                }
                i += TABLE_CLOSE.len();
                continue;
            }
        }
        i += 1;
    }
    None
}

/// Lexes `src[start..end]`, a region free of tables, into plain text and
/// formula spans.
fn lex_formulas(src: &str, start: usize, end: usize, out: &mut Vec<ElementSpan>) {
    let bytes = &src.as_bytes()[..end];
    let mut plain_start = start;
    let mut i = start;
    while i < end {
        match bytes[i] {
            // A backslash escapes the following character, so `\$` is literal.
            b'\\' => i += 2,
            b'$' => {
                let display = bytes.get(i + 1) == Some(&b'$');
                let close = if display {
                    find_display_close(bytes, i + 2)
                } else {
                    find_inline_close(bytes, i + 1)
                };
                match close {
                    Some(after) => {
                        push_span(out, ElementKind::PlainText, plain_start..i);
                        let kind = if display {
                            ElementKind::DisplayFormula
                        } else {
                            ElementKind::InlineFormula
                        };
                        push_span(out, kind, i..after);
                        i = after;
                        plain_start = i;
                    }
                    None => i += if display { 2 } else { 1 },
                }
            }
            _ => i += 1,
        }
    }
    push_span(out, ElementKind::PlainText, plain_start..end);
}

/// Position just past the closing `$` of an inline formula whose content
/// starts at `from`. Inline formulas are non-empty and do not cross a blank
/// line.
fn find_inline_close(bytes: &[u8], from: usize) -> Option<usize> {
    let mut i = from;
    while i < bytes.len() {
        match bytes[i] {
            b'\\' => i += 2,
            b'$' => return (i > from).then_some(i + 1),
            b'\n' if is_blank_line_at(bytes, i) => return None,
            _ => i += 1,
        }
    }
    None
}

/// Position just past the closing `$$` of a display formula. A lone `$`
/// inside the body means the candidate is not a display formula.
fn find_display_close(bytes: &[u8], from: usize) -> Option<usize> {
    let mut i = from;
    while i < bytes.len() {
        match bytes[i] {
            b'\\' => i += 2,
            b'$' => {
                return (bytes.get(i + 1) == Some(&b'$')).then_some(i + 2);
            }
            _ => i += 1,
        }
    }
    None
}

fn is_blank_line_at(bytes: &[u8], newline: usize) -> bool {
    bytes[newline + 1..]
        .iter()
        .take_while(|b| **b != b'\n')
        .all(|b| b.is_ascii_whitespace())
        && bytes[newline + 1..].contains(&b'\n')
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    PlainOnly,
    WithFormula,
    WithTable,
    MultiColumn,
    RealWorld,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    Synthetic,
    ModelPrediction,
}

/// One image/annotation pair of a corpus file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_id: String,
    pub image_ref: String,
    pub width_px: u32,
    pub height_px: u32,
    pub annotation: AnnotationDoc,
    pub category: Category,
    pub iteration: u32,
    pub provenance: Provenance,
}

impl SampleRecord {
    pub fn validate(&self) -> Result<()> {
        if self.sample_id.is_empty() {
            return Err(Error::Schema("empty sample_id".into()));
        }
        if self.width_px == 0 || self.height_px == 0 {
            return Err(Error::Schema(format!(
                "sample {}: dimensions must be positive, got {}x{}",
                self.sample_id, self.width_px, self.height_px
            )));
        }
        Ok(())
    }
}

/// Reads a JSON Lines file of records, one per non-blank line.
pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| {
            Error::Schema(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for rec in records {
        serde_json::to_writer(&mut w, rec).map_err(|e| Error::Schema(e.to_string()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Loads a corpus file, enforcing record invariants and id uniqueness.
pub fn read_corpus(path: &Path) -> Result<Vec<SampleRecord>> {
    let records: Vec<SampleRecord> = read_jsonl(path)?;
    let mut seen = std::collections::HashSet::new();
    for rec in &records {
        rec.validate()?;
        if !seen.insert(rec.sample_id.as_str()) {
            return Err(Error::Schema(format!(
                "{}: duplicate sample_id {}",
                path.display(),
                rec.sample_id
            )));
        }
    }
    Ok(records)
}
