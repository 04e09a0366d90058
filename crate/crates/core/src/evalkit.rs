//! Normalized edit distance and per-element evaluation reports.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::docmodel::AnnotationDoc;
use crate::mathcheck::{extract_formulas, FormulaSpanChecked};
use crate::tablecheck::canonicalize_table;

/// Levenshtein distance over Unicode scalar values.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let (short, long) = if a.len() <= b.len() { (&a, &b) } else { (&b, &a) };
    if short.is_empty() {
        return long.len();
    }
    let mut prev: Vec<usize> = (0..=short.len()).collect();
    let mut curr = vec![0usize; short.len() + 1];
    for (i, lc) in long.iter().enumerate() {
        curr[0] = i + 1;
        for (j, sc) in short.iter().enumerate() {
            let sub = prev[j] + usize::from(lc != sc);
            curr[j + 1] = sub.min(prev[j + 1] + 1).min(curr[j] + 1);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[short.len()]
}

/// `edit_distance / max(len)`, 0 for two empty strings.
pub fn normalized_edit_distance(a: &str, b: &str) -> f64 {
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 0.0;
    }
    edit_distance(a, b) as f64 / longest as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalPair {
    pub sample_id: String,
    pub prediction: AnnotationDoc,
    pub target: AnnotationDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleScores {
    pub sample_id: String,
    pub text_ned: Option<f64>,
    pub table_ned: Option<f64>,
    pub formula_ned: Option<f64>,
    pub overall_ned: f64,
    /// Formulas paired by order whose inline/display mode differs.
    pub formula_mode_mismatches: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ColumnMeans {
    pub text: Option<f64>,
    pub table: Option<f64>,
    pub formula: Option<f64>,
    pub overall: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MissingCounts {
    pub text: usize,
    pub table: usize,
    pub formula: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_sample: Vec<SampleScores>,
    pub means: ColumnMeans,
    /// Pairs lacking the element kind on both sides, excluded from that mean.
    pub missing: MissingCounts,
    pub formula_mode_mismatches: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("sample {0} present in predictions but not in targets")]
    MissingTarget(String),
    #[error("sample {0} present in targets but not in predictions")]
    MissingPrediction(String),
    #[error("duplicate sample_id {0}")]
    Duplicate(String),
}

/// Mean NED over items paired by position; unmatched items pair with "".
fn paired_ned(pred: &[String], target: &[String]) -> Option<f64> {
    let n = pred.len().max(target.len());
    if n == 0 {
        return None;
    }
    let total: f64 = (0..n)
        .map(|i| {
            let p = pred.get(i).map(String::as_str).unwrap_or("");
            let t = target.get(i).map(String::as_str).unwrap_or("");
            normalized_edit_distance(p, t)
        })
        .sum();
    Some(total / n as f64)
}

fn canonical_tables(doc: &AnnotationDoc) -> Vec<String> {
    doc.tables()
        .map(|t| canonicalize_table(t).unwrap_or_else(|_| t.to_string()))
        .collect()
}

fn formula_sources(formulas: &[FormulaSpanChecked]) -> Vec<String> {
    formulas.iter().map(|f| f.source.clone()).collect()
}

pub fn evaluate_pair(pair: &EvalPair) -> SampleScores {
    let (p_text, t_text) = (pair.prediction.plain_text(), pair.target.plain_text());
    let text_ned = if p_text.is_empty() && t_text.is_empty() {
        None
    } else {
        Some(normalized_edit_distance(&p_text, &t_text))
    };
    let table_ned = paired_ned(&canonical_tables(&pair.prediction), &canonical_tables(&pair.target));
    let p_formulas = extract_formulas(&pair.prediction);
    let t_formulas = extract_formulas(&pair.target);
    let formula_ned = paired_ned(&formula_sources(&p_formulas), &formula_sources(&t_formulas));
    let formula_mode_mismatches = p_formulas
        .iter()
        .zip(&t_formulas)
        .filter(|(p, t)| p.mode != t.mode)
        .count();
    SampleScores {
        sample_id: pair.sample_id.clone(),
        text_ned,
        table_ned,
        formula_ned,
        overall_ned: normalized_edit_distance(pair.prediction.source_text(), pair.target.source_text()),
        formula_mode_mismatches,
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

pub fn evaluate_corpus(pairs: &[EvalPair]) -> EvalReport {
    let per_sample: Vec<SampleScores> = pairs.par_iter().map(evaluate_pair).collect();
    let means = ColumnMeans {
        text: mean(per_sample.iter().filter_map(|s| s.text_ned)),
        table: mean(per_sample.iter().filter_map(|s| s.table_ned)),
        formula: mean(per_sample.iter().filter_map(|s| s.formula_ned)),
        overall: mean(per_sample.iter().map(|s| s.overall_ned)),
    };
    let missing = MissingCounts {
        text: per_sample.iter().filter(|s| s.text_ned.is_none()).count(),
        table: per_sample.iter().filter(|s| s.table_ned.is_none()).count(),
        formula: per_sample.iter().filter(|s| s.formula_ned.is_none()).count(),
    };
    let formula_mode_mismatches = per_sample.iter().map(|s| s.formula_mode_mismatches).sum();
    EvalReport {
        per_sample,
        means,
        missing,
        formula_mode_mismatches,
    }
}

/// Joins prediction and target corpora by sample id, in prediction order.
pub fn pair_corpora(
    predictions: Vec<(String, AnnotationDoc)>,
    targets: Vec<(String, AnnotationDoc)>,
) -> Result<Vec<EvalPair>, EvalError> {
    let mut by_id: HashMap<String, AnnotationDoc> = HashMap::with_capacity(targets.len());
    for (id, doc) in targets {
        if by_id.insert(id.clone(), doc).is_some() {
            return Err(EvalError::Duplicate(id));
        }
    }
    let mut pairs = Vec::with_capacity(predictions.len());
    let mut seen = std::collections::HashSet::new();
    for (id, prediction) in predictions {
        if !seen.insert(id.clone()) {
            return Err(EvalError::Duplicate(id));
        }
        let target = by_id.remove(&id).ok_or_else(|| EvalError::MissingTarget(id.clone()))?;
        pairs.push(EvalPair {
            sample_id: id,
            prediction,
            target,
        });
    }
    if let Some(id) = by_id.into_keys().min() {
        return Err(EvalError::MissingPrediction(id));
    }
    Ok(pairs)
}
