use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::SamplingRatios;
use super::filter::Candidate;

/// Balance class of a sample: tables win over formulas so every sample has
/// exactly one class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BalanceClass {
    Plain,
    Table,
    Formula,
}

impl BalanceClass {
    pub fn of(c: &Candidate) -> Self {
        if c.annotation.has_table() {
            BalanceClass::Table
        } else if c.annotation.has_formula() {
            BalanceClass::Formula
        } else {
            BalanceClass::Plain
        }
    }
}

impl SamplingRatios {
    pub fn for_class(&self, class: BalanceClass) -> f64 {
        match class {
            BalanceClass::Plain => self.plain,
            BalanceClass::Table => self.table,
            BalanceClass::Formula => self.formula,
        }
    }
}

/// Resamples by class ratio: `floor(r)` copies plus one more with
/// probability `frac(r)`. Copies stay adjacent and input order is kept.
pub fn sample_balance(retained: &[Candidate], ratios: &SamplingRatios, seed: u64) -> Vec<Candidate> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(retained.len());
    for c in retained {
        let r = ratios.for_class(BalanceClass::of(c));
        let whole = r.floor();
        // one draw per sample keeps the stream aligned regardless of ratios
        let extra = rng.random::<f64>() < r - whole;
        let copies = whole as usize + usize::from(extra);
        out.extend(std::iter::repeat_n(c, copies).cloned());
    }
    out
}
