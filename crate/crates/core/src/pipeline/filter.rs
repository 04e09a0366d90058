use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{AspectRange, FilterKind, PipelineConfig, RatioOrientation};
use crate::docmodel::{read_jsonl, AnnotationDoc, Category, Provenance, SampleRecord};
use crate::error::{Error, Result};
use crate::mathcheck::{formula_filter_doc, EnvironmentInventory};
use crate::tablecheck::table_filter_doc;
use crate::textfilter::{score_text, text_filter_doc, DecisionDetail, FilterDecision, Reason};

fn default_category() -> Category {
    Category::RealWorld
}

fn default_provenance() -> Provenance {
    Provenance::ModelPrediction
}

/// A sample entering the filter cascade. Accepts both full corpus records
/// and bare `{sample_id, prediction_text}` prediction lines; dimensions are
/// optional and the aspect-ratio filter is skipped without them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub sample_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width_px: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height_px: Option<u32>,
    #[serde(alias = "prediction_text")]
    pub annotation: AnnotationDoc,
    #[serde(default = "default_category")]
    pub category: Category,
    #[serde(default)]
    pub iteration: u32,
    #[serde(default = "default_provenance")]
    pub provenance: Provenance,
}

impl Candidate {
    pub fn dims(&self) -> Option<(u32, u32)> {
        Some((self.width_px?, self.height_px?))
    }
}

impl From<SampleRecord> for Candidate {
    fn from(r: SampleRecord) -> Self {
        Self {
            sample_id: r.sample_id,
            image_ref: Some(r.image_ref),
            width_px: Some(r.width_px),
            height_px: Some(r.height_px),
            annotation: r.annotation,
            category: r.category,
            iteration: r.iteration,
            provenance: r.provenance,
        }
    }
}

/// OCR reference line as written by the OCR adapter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceRecord {
    pub sample_id: String,
    pub reference_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub engine: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub engine_version: Option<String>,
}

/// Lines of a predictions file that could not be used.
#[derive(Debug, Clone, Default)]
pub struct LoadOutcome<T> {
    pub records: Vec<T>,
    pub rejected: Vec<String>,
}

/// Loads candidates, keeping good lines and collecting per-line problems.
/// Unreadable files and duplicate ids are hard errors.
pub fn load_candidates(path: &Path) -> Result<LoadOutcome<Candidate>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = LoadOutcome {
        records: Vec::new(),
        rejected: Vec::new(),
    };
    let mut seen = HashSet::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Candidate>(line) {
            Ok(c) if c.sample_id.is_empty() => {
                out.rejected.push(format!("{}:{}: empty sample_id", path.display(), n + 1))
            }
            Ok(c) if matches!(c.width_px, Some(0)) || matches!(c.height_px, Some(0)) => out
                .rejected
                .push(format!("{}:{}: zero image dimension", path.display(), n + 1)),
            Ok(c) => {
                if !seen.insert(c.sample_id.clone()) {
                    return Err(Error::Schema(format!(
                        "{}:{}: duplicate sample_id {}",
                        path.display(),
                        n + 1,
                        c.sample_id
                    )));
                }
                out.records.push(c);
            }
            Err(e) => out.rejected.push(format!("{}:{}: {e}", path.display(), n + 1)),
        }
    }
    Ok(out)
}

pub fn load_references(path: &Path) -> Result<HashMap<String, String>> {
    let records: Vec<ReferenceRecord> = read_jsonl(path)?;
    let mut map = HashMap::with_capacity(records.len());
    for r in records {
        if map.insert(r.sample_id.clone(), r.reference_text).is_some() {
            return Err(Error::Schema(format!(
                "{}: duplicate reference for {}",
                path.display(),
                r.sample_id
            )));
        }
    }
    Ok(map)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("image dimensions must be positive, got {width}x{height}")]
pub struct DimensionError {
    pub width: u32,
    pub height: u32,
}

pub fn aspect_ratio(width_px: u32, height_px: u32, orientation: RatioOrientation) -> f64 {
    match orientation {
        RatioOrientation::HeightOverWidth => height_px as f64 / width_px as f64,
        RatioOrientation::WidthOverHeight => width_px as f64 / height_px as f64,
    }
}

/// Retains images whose height/width ratio lies strictly inside `range`.
pub fn aspect_ratio_filter(
    sample_id: &str,
    width_px: u32,
    height_px: u32,
    range: AspectRange,
    orientation: RatioOrientation,
) -> std::result::Result<FilterDecision, DimensionError> {
    if width_px == 0 || height_px == 0 {
        return Err(DimensionError {
            width: width_px,
            height: height_px,
        });
    }
    let ratio = aspect_ratio(width_px, height_px, orientation);
    let detail = Some(DecisionDetail::AspectRatio(ratio));
    Ok(if range.contains(ratio) {
        FilterDecision::retain(sample_id, detail)
    } else {
        FilterDecision::discard(sample_id, Reason::AspectRatio, detail)
    })
}

/// Per-sample line of a [`FilterReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleOutcome {
    #[serde(flatten)]
    pub decision: FilterDecision,
    pub has_table: bool,
    pub has_formula: bool,
    /// F1 against the reference, computed before any filter runs.
    pub prefilter_f1: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub input_count: usize,
    pub retained_count: usize,
    pub discard_breakdown: BTreeMap<Reason, usize>,
    pub decisions: Vec<SampleOutcome>,
}

impl FilterReport {
    fn from_outcomes(decisions: Vec<SampleOutcome>) -> Self {
        let mut discard_breakdown = BTreeMap::new();
        let mut retained_count = 0;
        for d in &decisions {
            if d.decision.is_retained() {
                retained_count += 1;
            } else {
                *discard_breakdown.entry(d.decision.reason).or_insert(0) += 1;
            }
        }
        Self {
            input_count: decisions.len(),
            retained_count,
            discard_breakdown,
            decisions,
        }
    }

    pub fn retained_ids(&self) -> impl Iterator<Item = &str> {
        self.decisions
            .iter()
            .filter(|d| d.decision.is_retained())
            .map(|d| d.decision.sample_id.as_str())
    }

    pub fn prefilter_f1s(&self) -> Vec<f64> {
        self.decisions.iter().filter_map(|d| d.prefilter_f1).collect()
    }

    /// Copy with decisions sorted by sample id, for order-insensitive
    /// comparison.
    pub fn sorted_by_id(&self) -> Self {
        let mut r = self.clone();
        r.decisions
            .sort_by(|a, b| a.decision.sample_id.cmp(&b.decision.sample_id));
        r
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::Schema(e.to_string()))?;
        std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }
}

fn evaluate(
    sample: &Candidate,
    references: &HashMap<String, String>,
    config: &PipelineConfig,
    inventory: &EnvironmentInventory,
) -> SampleOutcome {
    let id = sample.sample_id.as_str();
    let doc = &sample.annotation;
    let text_opts = config.text_options();
    let reference = references.get(id);
    let prefilter_f1 = reference
        .and_then(|r| score_text(doc, r, &text_opts))
        .map(|s| s.f1);
    let outcome = |decision| SampleOutcome {
        decision,
        has_table: doc.has_table(),
        has_formula: doc.has_formula(),
        prefilter_f1,
    };

    if config.aspect_filter {
        if let Some((w, h)) = sample.dims() {
            match aspect_ratio_filter(id, w, h, config.aspect_range, config.aspect_orientation) {
                Ok(d) if d.is_retained() => {}
                Ok(d) => return outcome(d),
                // zero dimensions are rejected at load time
                Err(_) => {
                    return outcome(FilterDecision::discard(id, Reason::AspectRatio, None));
                }
            }
        }
    }

    let mut text_detail = None;
    for kind in &config.filter_order {
        let d = match kind {
            FilterKind::Text => match reference {
                Some(r) => text_filter_doc(id, doc, r, &text_opts),
                None => FilterDecision::discard(id, Reason::EmptyReference, None),
            },
            FilterKind::Table => table_filter_doc(id, doc),
            FilterKind::Formula => formula_filter_doc(id, doc, inventory),
        };
        if !d.is_retained() {
            return outcome(d);
        }
        if *kind == FilterKind::Text {
            text_detail = d.detail;
        }
    }
    outcome(FilterDecision::retain(id, text_detail))
}

/// Runs the filter cascade. Decisions keep input order, and the result is
/// independent of `config.parallelism`.
pub fn run_filter_pass(
    samples: &[Candidate],
    references: &HashMap<String, String>,
    config: &PipelineConfig,
    inventory: &EnvironmentInventory,
) -> Result<(Vec<Candidate>, FilterReport)> {
    let outcomes: Vec<SampleOutcome> = if config.parallelism <= 1 {
        samples
            .iter()
            .map(|s| evaluate(s, references, config, inventory))
            .collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.parallelism)
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
        pool.install(|| {
            samples
                .par_iter()
                .map(|s| evaluate(s, references, config, inventory))
                .collect()
        })
    };
    let retained = samples
        .iter()
        .zip(&outcomes)
        .filter(|(_, o)| o.decision.is_retained())
        .map(|(s, _)| s.clone())
        .collect();
    Ok((retained, FilterReport::from_outcomes(outcomes)))
}
