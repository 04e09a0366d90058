use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::filter::FilterReport;
use crate::textfilter::Reason;

/// Content class used for per-iteration tallies. A sample holding both
/// tables and formulas counts toward both `HasTable` and `HasFormula`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StatCategory {
    PlainOnly,
    HasTable,
    HasFormula,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub iteration: u32,
    pub input_count: usize,
    pub retained_total: usize,
    pub retained_by_category: BTreeMap<StatCategory, usize>,
    /// Mean F1 over samples that had a usable reference, before filtering.
    pub mean_f1_prefilter: Option<f64>,
    /// `None` on the first iteration.
    pub retained_ratio_vs_previous: Option<f64>,
    pub discard_breakdown: BTreeMap<Reason, usize>,
}

pub fn iteration_stats(
    iteration: u32,
    current: &FilterReport,
    previous_retained_ids: Option<&HashSet<String>>,
    prefilter_f1s: &[f64],
) -> IterationStats {
    let mut by_category: BTreeMap<StatCategory, usize> = [
        (StatCategory::PlainOnly, 0),
        (StatCategory::HasTable, 0),
        (StatCategory::HasFormula, 0),
    ]
    .into_iter()
    .collect();
    for d in current.decisions.iter().filter(|d| d.decision.is_retained()) {
        if d.has_table {
            *by_category.entry(StatCategory::HasTable).or_default() += 1;
        }
        if d.has_formula {
            *by_category.entry(StatCategory::HasFormula).or_default() += 1;
        }
        if !d.has_table && !d.has_formula {
            *by_category.entry(StatCategory::PlainOnly).or_default() += 1;
        }
    }
    let mean_f1_prefilter =
        (!prefilter_f1s.is_empty()).then(|| prefilter_f1s.iter().sum::<f64>() / prefilter_f1s.len() as f64);
    let retained_ratio_vs_previous = previous_retained_ids.and_then(|prev| {
        if prev.is_empty() {
            return None;
        }
        let kept = current.retained_ids().filter(|id| prev.contains(*id)).count();
        Some(kept as f64 / prev.len() as f64)
    });
    IterationStats {
        iteration,
        input_count: current.input_count,
        retained_total: current.retained_count,
        retained_by_category: by_category,
        mean_f1_prefilter,
        retained_ratio_vs_previous,
        discard_breakdown: current.discard_breakdown.clone(),
    }
}
