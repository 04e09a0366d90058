//! Plain-text quality filter: token multisets and multiset precision, recall
//! and F1 of a prediction against an OCR reference.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::docmodel::{AnnotationDoc, SampleRecord};

/// Unit -> occurrence count. Counts are always >= 1 and units non-empty.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenMultiset {
    entries: BTreeMap<String, u64>,
}

impl TokenMultiset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, unit: impl Into<String>, count: u64) {
        let unit = unit.into();
        if unit.is_empty() || count == 0 {
            return;
        }
        *self.entries.entry(unit).or_insert(0) += count;
    }

    pub fn count(&self, unit: &str) -> u64 {
        self.entries.get(unit).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.entries.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.entries.iter().map(|(u, c)| (u.as_str(), *c))
    }

    /// Sum of `min(pred, ref)` over the union of units (absent counts are 0,
    /// so only shared units contribute).
    pub fn overlap(&self, other: &TokenMultiset) -> u64 {
        let (small, large) = if self.len() <= other.len() {
            (self, other)
        } else {
            (other, self)
        };
        small
            .entries
            .iter()
            .map(|(u, c)| (*c).min(large.count(u)))
            .sum()
    }
}

impl<S: Into<String>> FromIterator<(S, u64)> for TokenMultiset {
    fn from_iter<I: IntoIterator<Item = (S, u64)>>(iter: I) -> Self {
        let mut m = TokenMultiset::new();
        for (u, c) in iter {
            m.insert(u, c);
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizeOptions {
    /// Unicode letters/digits when true, ASCII alphanumerics otherwise.
    pub unicode_alphanumeric: bool,
    pub lowercase: bool,
}

impl Default for NormalizeOptions {
    fn default() -> Self {
        Self {
            unicode_alphanumeric: true,
            lowercase: true,
        }
    }
}

pub fn normalize_tokens(text: &str) -> TokenMultiset {
    normalize_tokens_with(text, NormalizeOptions::default())
}

pub fn normalize_tokens_with(text: &str, opts: NormalizeOptions) -> TokenMultiset {
    let keep = |c: char| {
        if opts.unicode_alphanumeric {
            c.is_alphanumeric()
        } else {
            c.is_ascii_alphanumeric()
        }
    };
    let cleaned: String = text
        .chars()
        .map(|c| if keep(c) { c } else { ' ' })
        .collect();
    let cleaned = if opts.lowercase {
        cleaned.to_lowercase()
    } else {
        cleaned
    };
    let mut m = TokenMultiset::new();
    for unit in cleaned.split_whitespace() {
        m.insert(unit, 1);
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum ScoreError {
    #[error("prediction multiset is empty; precision is undefined")]
    EmptyPrediction,
    #[error("reference multiset is empty; recall is undefined")]
    EmptyReference,
}

pub fn precision(pred: &TokenMultiset, reference: &TokenMultiset) -> Result<f64, ScoreError> {
    let total = pred.total();
    if total == 0 {
        return Err(ScoreError::EmptyPrediction);
    }
    Ok(pred.overlap(reference) as f64 / total as f64)
}

pub fn recall(pred: &TokenMultiset, reference: &TokenMultiset) -> Result<f64, ScoreError> {
    let total = reference.total();
    if total == 0 {
        return Err(ScoreError::EmptyReference);
    }
    Ok(pred.overlap(reference) as f64 / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision, recall and F1. An empty prediction scores precision 0 (nothing
/// matched) instead of failing; an empty reference is an error.
pub fn f1(pred: &TokenMultiset, reference: &TokenMultiset) -> Result<FilterScores, ScoreError> {
    let r = recall(pred, reference)?;
    let p = match precision(pred, reference) {
        Ok(p) => p,
        Err(ScoreError::EmptyPrediction) => 0.0,
        Err(e) => return Err(e),
    };
    let f1 = if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    };
    Ok(FilterScores {
        precision: p,
        recall: r,
        f1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Retain,
    Discard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Reason {
    None,
    LowF1,
    InvalidTable,
    InvalidFormula,
    AspectRatio,
    EmptyReference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionDetail {
    Scores(FilterScores),
    /// Zero-based index of the first offending table or formula.
    ElementIndex(usize),
    AspectRatio(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterDecision {
    pub sample_id: String,
    pub verdict: Verdict,
    pub reason: Reason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<DecisionDetail>,
}

impl FilterDecision {
    pub fn retain(sample_id: impl Into<String>, detail: Option<DecisionDetail>) -> Self {
        Self {
            sample_id: sample_id.into(),
            verdict: Verdict::Retain,
            reason: Reason::None,
            detail,
        }
    }

    pub fn discard(
        sample_id: impl Into<String>,
        reason: Reason,
        detail: Option<DecisionDetail>,
    ) -> Self {
        debug_assert_ne!(reason, Reason::None);
        Self {
            sample_id: sample_id.into(),
            verdict: Verdict::Discard,
            reason,
            detail,
        }
    }

    pub fn is_retained(&self) -> bool {
        self.verdict == Verdict::Retain
    }
}

/// Which parts of the prediction are compared against the reference text.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextScope {
    #[default]
    PlainOnly,
    WithTableCells,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TextFilterOptions {
    pub threshold: f64,
    pub normalize: NormalizeOptions,
    pub scope: TextScope,
}

impl Default for TextFilterOptions {
    fn default() -> Self {
        Self {
            threshold: 0.90,
            normalize: NormalizeOptions::default(),
            scope: TextScope::PlainOnly,
        }
    }
}

/// Prediction text that enters the F1 comparison.
pub fn prediction_text(doc: &AnnotationDoc, scope: TextScope) -> String {
    match scope {
        TextScope::PlainOnly => doc.plain_text(),
        TextScope::WithTableCells => {
            let mut parts = vec![doc.plain_text()];
            parts.extend(doc.tables().map(strip_tags));
            parts.join(" ")
        }
    }
}

fn strip_tags(html: &str) -> String {
    let mut out = String::with_capacity(html.len());
    let mut in_tag = false;
    for c in html.chars() {
        match c {
            '<' => {
                in_tag = true;
                out.push(' ');
            }
            '>' if in_tag => in_tag = false,
            _ if !in_tag => out.push(c),
            _ => {}
        }
    }
    out
}

/// Scores a prediction against its reference text. `None` when the
/// reference normalizes to nothing.
pub fn score_text(
    doc: &AnnotationDoc,
    reference_text: &str,
    opts: &TextFilterOptions,
) -> Option<FilterScores> {
    let pred = normalize_tokens_with(&prediction_text(doc, opts.scope), opts.normalize);
    let reference = normalize_tokens_with(reference_text, opts.normalize);
    f1(&pred, &reference).ok()
}

pub fn text_filter_doc(
    sample_id: &str,
    doc: &AnnotationDoc,
    reference_text: &str,
    opts: &TextFilterOptions,
) -> FilterDecision {
    match score_text(doc, reference_text, opts) {
        None => FilterDecision::discard(sample_id, Reason::EmptyReference, None),
        Some(s) if s.f1 >= opts.threshold => {
            FilterDecision::retain(sample_id, Some(DecisionDetail::Scores(s)))
        }
        Some(s) => FilterDecision::discard(sample_id, Reason::LowF1, Some(DecisionDetail::Scores(s))),
    }
}

pub fn text_filter(sample: &SampleRecord, reference_text: &str, threshold: f64) -> FilterDecision {
    let opts = TextFilterOptions {
        threshold,
        ..TextFilterOptions::default()
    };
    text_filter_doc(&sample.sample_id, &sample.annotation, reference_text, &opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ms(pairs: &[(&str, u64)]) -> TokenMultiset {
        pairs.iter().map(|(u, c)| (*u, *c)).collect()
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(
            normalize_tokens("Hello, world! world"),
            ms(&[("hello", 1), ("world", 2)])
        );
        assert!(normalize_tokens("").is_empty());
        assert_eq!(normalize_tokens("a1-b2"), ms(&[("a1", 1), ("b2", 1)]));
    }

    #[test]
    fn normalize_unicode_and_switches() {
        assert_eq!(normalize_tokens("Café Müller"), ms(&[("café", 1), ("müller", 1)]));
        let ascii = NormalizeOptions {
            unicode_alphanumeric: false,
            lowercase: false,
        };
        assert_eq!(
            normalize_tokens_with("Café X", ascii),
            ms(&[("Caf", 1), ("X", 1)])
        );
    }

    #[test]
    fn precision_examples() {
        let ab = ms(&[("a", 2), ("b", 1)]);
        assert_eq!(precision(&ab, &ab).unwrap(), 1.0);
        assert_eq!(precision(&ms(&[("a", 1)]), &ms(&[("b", 1)])).unwrap(), 0.0);
        let pred = ms(&[("a", 1), ("b", 2), ("c", 1)]);
        let reference = ms(&[("a", 1), ("b", 1), ("c", 2)]);
        assert_eq!(precision(&pred, &reference).unwrap(), 0.75);
        assert_eq!(
            precision(&TokenMultiset::new(), &reference),
            Err(ScoreError::EmptyPrediction)
        );
    }

    #[test]
    fn recall_examples() {
        let ab = ms(&[("a", 2), ("b", 1)]);
        assert_eq!(recall(&ab, &ab).unwrap(), 1.0);
        assert_eq!(recall(&TokenMultiset::new(), &ms(&[("a", 3)])).unwrap(), 0.0);
        let pred = ms(&[("a", 1), ("b", 2), ("c", 1)]);
        let reference = ms(&[("a", 1), ("b", 1), ("c", 2)]);
        assert_eq!(recall(&pred, &reference).unwrap(), 0.75);
        assert_eq!(
            recall(&pred, &TokenMultiset::new()),
            Err(ScoreError::EmptyReference)
        );
    }

    #[test]
    fn f1_examples() {
        let ab = ms(&[("a", 2), ("b", 1)]);
        assert_eq!(f1(&ab, &ab).unwrap().f1, 1.0);
        assert_eq!(f1(&ms(&[("a", 1)]), &ms(&[("b", 1)])).unwrap().f1, 0.0);
        let s = f1(
            &ms(&[("a", 1), ("b", 2), ("c", 1)]),
            &ms(&[("a", 1), ("b", 1), ("c", 2)]),
        )
        .unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (0.75, 0.75, 0.75));
        assert_eq!(f1(&TokenMultiset::new(), &ab).unwrap().f1, 0.0);
    }

    fn sample(text: &str) -> SampleRecord {
        SampleRecord {
            sample_id: "s".into(),
            image_ref: "s.png".into(),
            width_px: 100,
            height_px: 141,
            annotation: AnnotationDoc::parse(text),
            category: crate::docmodel::Category::RealWorld,
            iteration: 1,
            provenance: crate::docmodel::Provenance::ModelPrediction,
        }
    }

    #[test]
    fn threshold_decisions() {
        // 19 of 20 reference words predicted: P = 1, R = 0.95, F1 = 38/39 > 0.9.
        let words: Vec<String> = (0..20).map(|i| format!("w{i}")).collect();
        let reference = words.join(" ");
        let d = text_filter(&sample(&words[..19].join(" ")), &reference, 0.90);
        assert_eq!(d.verdict, Verdict::Retain);
        assert_eq!(d.reason, Reason::None);

        // 8 of 10: P = 1, R = 0.8, F1 = 0.888.. < 0.9.
        let reference = words[..10].join(" ");
        let d = text_filter(&sample(&words[..8].join(" ")), &reference, 0.90);
        assert_eq!(d.reason, Reason::LowF1);
        assert_eq!(d.verdict, Verdict::Discard);
    }

    #[test]
    fn empty_reference_discards() {
        let d = text_filter(&sample("some text"), " ,.; ", 0.9);
        assert_eq!(d.reason, Reason::EmptyReference);
        assert_eq!(d.verdict, Verdict::Discard);
    }

    #[test]
    fn table_scope_includes_cells() {
        let doc = AnnotationDoc::parse("intro <table><tr><td>cell</td></tr></table>");
        assert_eq!(normalize_tokens(&prediction_text(&doc, TextScope::PlainOnly)), ms(&[("intro", 1)]));
        assert_eq!(
            normalize_tokens(&prediction_text(&doc, TextScope::WithTableCells)),
            ms(&[("intro", 1), ("cell", 1)])
        );
    }
}
