use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textfilter::{NormalizeOptions, TextFilterOptions, TextScope};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Text,
    Table,
    Formula,
}

impl FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "text" => Ok(FilterKind::Text),
            "table" => Ok(FilterKind::Table),
            "formula" => Ok(FilterKind::Formula),
            other => Err(Error::Config(format!("unknown filter {other:?}"))),
        }
    }
}

/// Which side of the image is the numerator of the aspect ratio.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatioOrientation {
    #[default]
    HeightOverWidth,
    WidthOverHeight,
}

/// Open interval `(lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AspectRange {
    pub lo: f64,
    pub hi: f64,
}

impl Default for AspectRange {
    fn default() -> Self {
        Self { lo: 0.4, hi: 2.5 }
    }
}

impl AspectRange {
    pub fn contains(&self, ratio: f64) -> bool {
        self.lo < ratio && ratio < self.hi
    }
}

/// Sampling ratio per balance class. Keys are `plain`, `table`, `formula`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingRatios {
    pub plain: f64,
    pub table: f64,
    pub formula: f64,
}

impl Default for SamplingRatios {
    fn default() -> Self {
        Self {
            plain: 1.0,
            table: 1.0,
            formula: 1.0,
        }
    }
}

impl FromStr for SamplingRatios {
    type Err = Error;

    /// Parses `plain=1.0,table=2,formula=0.5`; omitted keys stay at 1.0.
    fn from_str(s: &str) -> Result<Self> {
        let mut ratios = SamplingRatios::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key=value, got {part:?}")))?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("ratio {value:?} is not a number")))?;
            match key.trim() {
                "plain" => ratios.plain = value,
                "table" => ratios.table = value,
                "formula" => ratios.formula = value,
                other => return Err(Error::Config(format!("unknown ratio key {other:?}"))),
            }
        }
        ratios.validate()?;
        Ok(ratios)
    }
}

impl fmt::Display for SamplingRatios {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "plain={},table={},formula={}", self.plain, self.table, self.formula)
    }
}

impl SamplingRatios {
    pub fn validate(&self) -> Result<()> {
        for (k, v) in [("plain", self.plain), ("table", self.table), ("formula", self.formula)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("sampling ratio {k}={v} must be positive")));
            }
        }
        Ok(())
    }
}

fn default_threshold() -> f64 {
    0.90
}

fn default_order() -> Vec<FilterKind> {
    vec![FilterKind::Text, FilterKind::Table, FilterKind::Formula]
}

fn default_parallelism() -> usize {
    1
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_threshold")]
    pub f1_threshold: f64,
    #[serde(default)]
    pub aspect_range: AspectRange,
    #[serde(default)]
    pub aspect_orientation: RatioOrientation,
    /// Apply the aspect-ratio filter to samples that carry dimensions.
    #[serde(default = "default_true")]
    pub aspect_filter: bool,
    #[serde(default = "default_order")]
    pub filter_order: Vec<FilterKind>,
    #[serde(default)]
    pub sampling_ratios: SamplingRatios,
    #[serde(default)]
    pub text_scope: TextScope,
    #[serde(default)]
    pub normalize: NormalizeOptions,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default)]
    pub predictions: Option<PathBuf>,
    #[serde(default)]
    pub references: Option<PathBuf>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub env_inventory: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            f1_threshold: default_threshold(),
            aspect_range: AspectRange::default(),
            aspect_orientation: RatioOrientation::default(),
            aspect_filter: true,
            filter_order: default_order(),
            sampling_ratios: SamplingRatios::default(),
            text_scope: TextScope::default(),
            normalize: NormalizeOptions::default(),
            seed: 0,
            parallelism: default_parallelism(),
            predictions: None,
            references: None,
            output: None,
            env_inventory: None,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f1_threshold > 0.0 && self.f1_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "f1_threshold {} must lie in (0, 1]",
                self.f1_threshold
            )));
        }
        let AspectRange { lo, hi } = self.aspect_range;
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(Error::Config(format!(
                "aspect_range ({lo}, {hi}) must satisfy 0 < lo < hi"
            )));
        }
        let mut seen = Vec::new();
        for kind in &self.filter_order {
            if seen.contains(kind) {
                return Err(Error::Config(format!("filter {kind:?} listed twice")));
            }
            seen.push(*kind);
        }
        self.sampling_ratios.validate()?;
        if self.parallelism == 0 {
            return Err(Error::Config("parallelism must be positive".into()));
        }
        Ok(())
    }

    pub fn text_options(&self) -> TextFilterOptions {
        TextFilterOptions {
            threshold: self.f1_threshold,
            normalize: self.normalize,
            scope: self.text_scope,
        }
    }

    /// Settings that determine which samples are retained. Paths and
    /// parallelism are excluded so that digests do not depend on them.
    pub fn digest_material(&self) -> BTreeMap<&'static str, serde_json::Value> {
        let mut m = BTreeMap::new();
        m.insert("f1_threshold", serde_json::json!(self.f1_threshold));
        m.insert("aspect_range", serde_json::json!(self.aspect_range));
        m.insert("aspect_orientation", serde_json::json!(self.aspect_orientation));
        m.insert("aspect_filter", serde_json::json!(self.aspect_filter));
        m.insert("filter_order", serde_json::json!(self.filter_order));
        m.insert("sampling_ratios", serde_json::json!(self.sampling_ratios));
        m.insert("text_scope", serde_json::json!(self.text_scope));
        m.insert("normalize", serde_json::json!(self.normalize));
        m.insert("seed", serde_json::json!(self.seed));
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = PipelineConfig::from_toml("").unwrap();
        assert_eq!(c.f1_threshold, 0.90);
        assert_eq!(c.aspect_range, AspectRange { lo: 0.4, hi: 2.5 });
        assert_eq!(c.filter_order, vec![FilterKind::Text, FilterKind::Table, FilterKind::Formula]);
        assert_eq!(c.sampling_ratios, SamplingRatios::default());
    }

    #[test]
    fn file_values() {
        let c = PipelineConfig::from_toml(
            r#"
f1_threshold = 0.95
filter_order = ["text"]
parallelism = 8
aspect_range = { lo = 0.5, hi = 2.0 }
sampling_ratios = { plain = 0.5, table = 2.0, formula = 4.0 }
"#,
        )
        .unwrap();
        assert_eq!(c.f1_threshold, 0.95);
        assert_eq!(c.filter_order, vec![FilterKind::Text]);
        assert_eq!(c.parallelism, 8);
        assert_eq!(c.sampling_ratios.formula, 4.0);
    }

    #[test]
    fn invalid_values() {
        for bad in [
            "f1_threshold = 0.0",
            "f1_threshold = 1.5",
            "aspect_range = { lo = 2.0, hi = 1.0 }",
            "aspect_range = { lo = 0.0, hi = 1.0 }",
            "parallelism = 0",
            "sampling_ratios = { plain = 0.0, table = 1.0, formula = 1.0 }",
            "filter_order = [\"text\", \"text\"]",
            "unknown_key = 1",
        ] {
            assert!(matches!(PipelineConfig::from_toml(bad), Err(Error::Config(_))), "{bad}");
        }
    }

    #[test]
    fn ratio_flag_parsing() {
        let r: SamplingRatios = "plain=1.0,table=2,formula=0.5".parse().unwrap();
        assert_eq!((r.plain, r.table, r.formula), (1.0, 2.0, 0.5));
        assert!("plain=-1".parse::<SamplingRatios>().is_err());
        assert!("other=1".parse::<SamplingRatios>().is_err());
    }
}
