//! Self-improvement bookkeeping: the filter cascade over model predictions,
//! per-iteration statistics, class rebalancing and versioned manifests.

mod balance;
mod config;
mod dataset;
mod filter;
mod stats;

pub use balance::{sample_balance, BalanceClass};
pub use config::{AspectRange, FilterKind, PipelineConfig, RatioOrientation, SamplingRatios};
pub use dataset::{
    commit_dataset, content_digest, iteration_dir, latest_version, DatasetVersion, MANIFEST_FILE,
    VERSION_FILE,
};
pub use filter::{
    aspect_ratio, aspect_ratio_filter, load_candidates, load_references, run_filter_pass, Candidate,
    DimensionError, FilterReport, LoadOutcome, ReferenceRecord, SampleOutcome,
};
pub use stats::{iteration_stats, IterationStats, StatCategory};
