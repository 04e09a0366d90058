//! Synthetic image/annotation pairs: prompt templates, a text-generation
//! endpoint, table injection, column layouts and an external renderer.

mod endpoint;
mod layout;
mod prompts;
mod render;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use endpoint::{
    request_generation, CompletionRequest, CompletionResponse, EndpointError, GenerationEndpoint,
    GenerationError, GenerationRecord, HttpEndpoint, RetryPolicy, API_KEY_ENV,
};
pub use layout::{compose_layout, inject_table, paragraph_boundaries, HtmlDocument, LayoutError, PageTemplate};
pub use prompts::{build_prompt, GenSpec, PromptError, PromptText, DEFAULT_STYLES};
pub use render::{render_document, RenderError, RenderedSample, RendererCommand};

use crate::docmodel::{write_jsonl, AnnotationDoc, Category, Provenance, SampleRecord};
use crate::error::{Error, Result};
use crate::mathcheck::{formula_filter_doc, EnvironmentInventory};
use crate::tablecheck::{canonicalize_table, check_table, table_filter_doc};

const DEFAULT_TOPICS: &str = include_str!("../../resources/topics.txt");
const DEFAULT_TABLES: &str = include_str!("../../resources/tables.txt");

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const GENERATIONS_FILE: &str = "generations.jsonl";
pub const FAILURES_FILE: &str = "failures.jsonl";

fn default_model() -> String {
    "default".into()
}
fn default_max_tokens() -> u32 {
    2048
}
fn default_temperature() -> f64 {
    0.7
}
fn default_render_timeout() -> u64 {
    30
}
fn default_page_width() -> u32 {
    1240
}
fn default_max_retries() -> u32 {
    3
}
fn default_initial_backoff() -> u64 {
    500
}
fn default_max_backoff() -> u64 {
    30_000
}
fn default_max_response_bytes() -> usize {
    1 << 20
}
fn default_workers() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenConfig {
    #[serde(default)]
    pub endpoint_url: Option<String>,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default)]
    pub renderer_cmd: Option<String>,
    #[serde(default = "default_render_timeout")]
    pub render_timeout_secs: u64,
    #[serde(default = "default_page_width")]
    pub page_width: u32,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_initial_backoff")]
    pub initial_backoff_ms: u64,
    #[serde(default = "default_max_backoff")]
    pub max_backoff_ms: u64,
    #[serde(default = "default_max_response_bytes")]
    pub max_response_bytes: usize,
    #[serde(default = "default_workers")]
    pub parallelism: usize,
    #[serde(default = "default_workers")]
    pub render_workers: usize,
    #[serde(default)]
    pub topics_file: Option<PathBuf>,
    #[serde(default)]
    pub tables_file: Option<PathBuf>,
    #[serde(default)]
    pub env_inventory: Option<PathBuf>,
}

impl Default for GenConfig {
    fn default() -> Self {
        toml::from_str("").expect("all fields have defaults")
    }
}

impl GenConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: GenConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
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
        if self.parallelism == 0 || self.render_workers == 0 {
            return Err(Error::Config("parallelism and render_workers must be positive".into()));
        }
        if self.page_width == 0 {
            return Err(Error::Config("page_width must be positive".into()));
        }
        if self.render_timeout_secs == 0 {
            return Err(Error::Config("render_timeout_secs must be positive".into()));
        }
        Ok(())
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_retries: self.max_retries,
            initial_backoff: Duration::from_millis(self.initial_backoff_ms),
            max_backoff: Duration::from_millis(self.max_backoff_ms),
            max_response_bytes: self.max_response_bytes,
        }
    }

    pub fn http_endpoint(&self) -> Result<HttpEndpoint> {
        let url = self
            .endpoint_url
            .as_deref()
            .ok_or_else(|| Error::Config("endpoint_url is not set".into()))?;
        let mut ep = HttpEndpoint::new(url, self.model.clone());
        ep.max_tokens = self.max_tokens;
        ep.temperature = self.temperature;
        ep.max_response_bytes = self.max_response_bytes;
        Ok(ep)
    }

    pub fn renderer(&self) -> Result<RendererCommand> {
        let cmd = self
            .renderer_cmd
            .as_deref()
            .ok_or_else(|| Error::Config("renderer_cmd is not set".into()))?;
        Ok(RendererCommand::new(cmd).with_timeout(Duration::from_secs(self.render_timeout_secs)))
    }

    pub fn page_template(&self) -> PageTemplate {
        PageTemplate {
            width_px: self.page_width,
            ..PageTemplate::default()
        }
    }

    pub fn topics(&self) -> Result<Vec<String>> {
        let text = match &self.topics_file {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            None => DEFAULT_TOPICS.to_string(),
        };
        let topics: Vec<String> = non_comment_lines(&text).map(str::to_string).collect();
        if topics.is_empty() {
            return Err(Error::Config("topic list is empty".into()));
        }
        Ok(topics)
    }

    /// Canonical, valid tables, one per line.
    pub fn tables(&self) -> Result<Vec<String>> {
        let text = match &self.tables_file {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            None => DEFAULT_TABLES.to_string(),
        };
        let mut out = Vec::new();
        for (n, line) in non_comment_lines(&text).enumerate() {
            let canon = canonicalize_table(line).map_err(|e| Error::Config(format!("table {}: {e:?}", n + 1)))?;
            let verdict = check_table(&canon);
            if !verdict.valid {
                return Err(Error::Config(format!("table {} is structurally invalid", n + 1)));
            }
            out.push(canon);
        }
        if out.is_empty() {
            return Err(Error::Config("table list is empty".into()));
        }
        Ok(out)
    }

    pub fn inventory(&self) -> Result<EnvironmentInventory> {
        match &self.env_inventory {
            Some(p) => EnvironmentInventory::from_file(p),
            None => Ok(EnvironmentInventory::default()),
        }
    }
}

fn non_comment_lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'))
}

pub fn category_slug(c: Category) -> &'static str {
    match c {
        Category::PlainOnly => "plain",
        Category::WithFormula => "formula",
        Category::WithTable => "table",
        Category::MultiColumn => "multicolumn",
        Category::RealWorld => "realworld",
    }
}

pub fn parse_category(s: &str) -> Option<Category> {
    match s {
        "plain" => Some(Category::PlainOnly),
        "formula" => Some(Category::WithFormula),
        "table" => Some(Category::WithTable),
        "multicolumn" => Some(Category::MultiColumn),
        _ => None,
    }
}

pub const SYNTHETIC_CATEGORIES: [Category; 4] = [
    Category::PlainOnly,
    Category::WithFormula,
    Category::WithTable,
    Category::MultiColumn,
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchRequest {
    pub categories: Vec<Category>,
    pub count: usize,
    pub seed: u64,
    /// Column count for MultiColumn specs; drawn from {2, 3} when absent.
    pub columns: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedSample {
    pub sample_id: String,
    pub spec: GenSpec,
    /// Table given to the prompt or injected after generation.
    pub table: Option<String>,
}

/// Expands a request into exactly `count` specs per category, with topics,
/// per-sample seeds and tables drawn from one seeded stream.
pub fn plan_batch(request: &BatchRequest, topics: &[String], tables: &[String]) -> Result<Vec<PlannedSample>> {
    if topics.is_empty() || tables.is_empty() {
        return Err(Error::Config("topics and tables must be non-empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(request.seed);
    let mut out = Vec::with_capacity(request.count * request.categories.len());
    for &category in &request.categories {
        if category == Category::RealWorld {
            return Err(Error::Config("RealWorld samples cannot be generated".into()));
        }
        for idx in 0..request.count {
            let topic = topics[rng.random_range(0..topics.len())].clone();
            let seed = rng.next_u64();
            let table_pick = rng.random_range(0..tables.len());
            let drawn_cols = if rng.random_bool(0.5) { 2 } else { 3 };
            let mut spec = GenSpec::new(category, topic, seed);
            if category == Category::MultiColumn {
                spec.columns = request.columns.unwrap_or(drawn_cols);
            }
            spec.validate().map_err(|e| Error::Config(e.to_string()))?;
            let table = matches!(category, Category::WithTable | Category::MultiColumn)
                .then(|| tables[table_pick].clone());
            out.push(PlannedSample {
                sample_id: format!("{}-{idx:05}", category_slug(category)),
                spec,
                table,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureStage {
    Prompt,
    Generation,
    Layout,
    Prefilter,
    Render,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub sample_id: String,
    pub stage: FailureStage,
    pub error: String,
    pub spec: GenSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerationLogEntry {
    pub sample_id: String,
    #[serde(flatten)]
    pub record: GenerationRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub planned: usize,
    pub written: usize,
    pub per_category: BTreeMap<Category, usize>,
    pub failures: Vec<FailureRecord>,
}

/// A generated sample that passed the pre-render filters.
#[derive(Debug, Clone)]
pub struct PreparedSample {
    pub planned: PlannedSample,
    pub generation: GenerationRecord,
    pub document: HtmlDocument,
}

fn strip_code_fence(text: &str) -> &str {
    let t = text.trim();
    let Some(rest) = t.strip_prefix("```") else {
        return t;
    };
    let body = rest.split_once('\n').map(|(_, b)| b).unwrap_or("");
    body.trim_end().strip_suffix("```").unwrap_or(body).trim()
}

/// Text stage for one sample: prompt, endpoint call, table injection, layout
/// and the table/formula pre-filters. No I/O besides the endpoint.
pub fn prepare_sample(
    planned: &PlannedSample,
    endpoint: &dyn GenerationEndpoint,
    policy: &RetryPolicy,
    template: &PageTemplate,
    inventory: &EnvironmentInventory,
) -> std::result::Result<(PreparedSample, GenerationRecord), (FailureStage, String, Option<GenerationRecord>)> {
    let prompt_table = (planned.spec.category == Category::WithTable)
        .then_some(planned.table.as_deref())
        .flatten();
    let prompt = build_prompt(&planned.spec, prompt_table).map_err(|e| (FailureStage::Prompt, e.to_string(), None))?;
    let generation =
        request_generation(endpoint, &prompt, policy).map_err(|e| (FailureStage::Generation, e.to_string(), None))?;
    let fail = |stage, msg: String| (stage, msg, Some(generation.clone()));

    let mut text = strip_code_fence(&generation.response).to_string();
    if let Some(table) = &planned.table {
        if !AnnotationDoc::parse(text.as_str()).has_table() {
            text = inject_table(&text, table, planned.spec.seed);
        }
    }
    let document =
        compose_layout(&text, planned.spec.columns, template).map_err(|e| fail(FailureStage::Layout, e.to_string()))?;
    let doc = AnnotationDoc::parse(document.annotation.as_str());
    if doc.source_text().trim().is_empty() {
        return Err(fail(FailureStage::Prefilter, "empty annotation".into()));
    }
    for decision in [
        table_filter_doc(&planned.sample_id, &doc),
        formula_filter_doc(&planned.sample_id, &doc, inventory),
    ] {
        if !decision.is_retained() {
            return Err(fail(
                FailureStage::Prefilter,
                format!("{:?} {:?}", decision.reason, decision.detail),
            ));
        }
    }
    Ok((
        PreparedSample {
            planned: planned.clone(),
            generation: generation.clone(),
            document,
        },
        generation,
    ))
}

fn pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))
}

/// Generates, filters, renders and writes a batch under `out_dir`:
/// `corpus.jsonl`, `images/`, `html/`, `generations.jsonl` and
/// `failures.jsonl`. Failed samples are reported, never dropped silently.
pub fn generate_batch(
    plan: &[PlannedSample],
    endpoint: &dyn GenerationEndpoint,
    renderer: &RendererCommand,
    config: &GenConfig,
    out_dir: &Path,
) -> Result<BatchSummary> {
    let inventory = config.inventory()?;
    let policy = config.retry_policy();
    let template = config.page_template();
    let images = out_dir.join("images");
    let html_dir = out_dir.join("html");
    for d in [out_dir, &images, &html_dir] {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }

    let text_stage: Vec<_> = pool(config.parallelism)?.install(|| {
        plan.par_iter()
            .map(|p| prepare_sample(p, endpoint, &policy, &template, &inventory))
            .collect()
    });

    let mut failures = Vec::new();
    let mut generations = Vec::new();
    let mut prepared = Vec::new();
    for (p, result) in plan.iter().zip(text_stage) {
        let record = match result {
            Ok((sample, record)) => {
                prepared.push(sample);
                Some(record)
            }
            Err((stage, error, record)) => {
                log::warn!("{}: {stage:?} failed: {error}", p.sample_id);
                failures.push(FailureRecord {
                    sample_id: p.sample_id.clone(),
                    stage,
                    error,
                    spec: p.spec.clone(),
                });
                record
            }
        };
        if let Some(record) = record {
            generations.push(GenerationLogEntry {
                sample_id: p.sample_id.clone(),
                record,
            });
        }
    }

    let rendered: Vec<_> = pool(config.render_workers)?.install(|| {
        prepared
            .par_iter()
            .map(|s| {
                let id = &s.planned.sample_id;
                render_document(&s.document, renderer, &images.join(format!("{id}.png")))
            })
            .collect()
    });

    // single writer: everything below runs sequentially in plan order
    let mut corpus = Vec::new();
    let mut per_category = BTreeMap::new();
    for (s, result) in prepared.iter().zip(rendered) {
        let id = &s.planned.sample_id;
        let html_path = html_dir.join(format!("{id}.html"));
        std::fs::write(&html_path, &s.document.html).map_err(|e| Error::io(&html_path, e))?;
        match result {
            Ok(r) => {
                *per_category.entry(s.planned.spec.category).or_insert(0) += 1;
                corpus.push(SampleRecord {
                    sample_id: id.clone(),
                    image_ref: format!("images/{id}.png"),
                    width_px: r.width_px,
                    height_px: r.height_px,
                    annotation: AnnotationDoc::parse(r.annotation),
                    category: s.planned.spec.category,
                    iteration: 0,
                    provenance: Provenance::Synthetic,
                });
            }
            Err(e) => {
                log::warn!("{id}: render failed: {e}");
                failures.push(FailureRecord {
                    sample_id: id.clone(),
                    stage: FailureStage::Render,
                    error: e.to_string(),
                    spec: s.planned.spec.clone(),
                });
            }
        }
    }
    write_jsonl(&out_dir.join(CORPUS_FILE), &corpus)?;
    write_jsonl(&out_dir.join(GENERATIONS_FILE), &generations)?;
    write_jsonl(&out_dir.join(FAILURES_FILE), &failures)?;
    Ok(BatchSummary {
        planned: plan.len(),
        written: corpus.len(),
        per_category,
        failures,
    })
}
