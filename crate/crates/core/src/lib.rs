//! Data machinery for training document-conversion models without
//! distillation: unified annotation parsing, rule-based quality filters,
//! synthetic document generation, self-improvement bookkeeping and a
//! normalized edit distance evaluation kit.

pub mod docmodel;
pub mod error;
pub mod evalkit;
pub mod mathcheck;
pub mod pipeline;
pub mod synthgen;
pub mod tablecheck;
pub mod textfilter;

pub use error::{Error, Result};
