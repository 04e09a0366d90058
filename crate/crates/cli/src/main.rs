use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use docforge_core::docmodel::{read_jsonl, write_jsonl};
use docforge_core::evalkit::{evaluate_corpus, pair_corpora};
use docforge_core::mathcheck::EnvironmentInventory;
use docforge_core::pipeline::{
    commit_dataset, content_digest, iteration_stats, latest_version, load_candidates, load_references,
    run_filter_pass, sample_balance, Candidate, FilterReport, PipelineConfig, SamplingRatios,
};
use docforge_core::synthgen::{
    generate_batch, parse_category, plan_batch, BatchRequest, GenConfig, SYNTHETIC_CATEGORIES,
};
use docforge_core::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_SCHEMA: u8 = 3;
const EXIT_PARTIAL: u8 = 4;

#[derive(Parser)]
#[command(name = "docforge", version, about = "Document-conversion training data pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic image/annotation pairs
    Gen(GenArgs),
    /// Run the quality-filter cascade over model predictions
    Filter(FilterArgs),
    /// Per-iteration statistics from a filter report
    Stats(StatsArgs),
    /// Resample a manifest by content class
    Balance(BalanceArgs),
    /// Filter, summarize and commit one self-improvement iteration
    Iterate(IterateArgs),
    /// Normalized edit distance between predictions and targets
    Eval(EvalArgs),
}

#[derive(Args)]
struct GenArgs {
    /// plain, formula, table, multicolumn or all
    #[arg(long, default_value = "all")]
    category: String,
    #[arg(long, default_value_t = 10)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Columns for multi-column samples (2 or 3); drawn per sample if omitted
    #[arg(long)]
    columns: Option<u8>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `endpoint_url` from the config
    #[arg(long)]
    endpoint: Option<String>,
    /// Overrides `renderer_cmd` from the config
    #[arg(long)]
    renderer: Option<String>,
}

#[derive(Args, Clone)]
struct FilterOverrides {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    f1_threshold: Option<f64>,
    #[arg(long)]
    env_inventory: Option<PathBuf>,
    #[arg(long)]
    parallelism: Option<usize>,
    /// Comma-separated filter order, e.g. text,table,formula
    #[arg(long)]
    filters: Option<String>,
}

#[derive(Args)]
struct FilterArgs {
    #[arg(long)]
    predictions: Option<PathBuf>,
    #[arg(long)]
    references: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    overrides: FilterOverrides,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    report: PathBuf,
    /// Manifest retained by the previous iteration
    #[arg(long)]
    previous: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    iteration: u32,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BalanceArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value = "plain=1.0,table=1.0,formula=1.0")]
    ratios: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output manifest; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct IterateArgs {
    /// Working directory holding predictions.jsonl, references.jsonl and an
    /// optional config.toml; versions are committed under DIR/versions
    #[arg(long)]
    from: PathBuf,
    #[command(flatten)]
    overrides: FilterOverrides,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    target: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Filter(a) => cmd_filter(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Balance(a) => cmd_balance(a),
        Command::Iterate(a) => cmd_iterate(a),
        Command::Eval(a) => cmd_eval(a),
    };
    match result {
        Ok(Outcome::Complete) => ExitCode::SUCCESS,
        Ok(Outcome::Partial) => ExitCode::from(EXIT_PARTIAL),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

enum Outcome {
    Complete,
    Partial,
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.chain().find_map(|c| c.downcast_ref::<Error>()) {
        Some(Error::Config(_)) => EXIT_CONFIG,
        Some(Error::Schema(_) | Error::Io { .. } | Error::Eval(_)) => EXIT_SCHEMA,
        _ => 1,
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let json = serde_json::to_string_pretty(value)?;
    std::fs::write(path, json + "\n").with_context(|| format!("writing {}", path.display()))
}

fn cmd_gen(a: GenArgs) -> anyhow::Result<Outcome> {
    let mut cfg = match &a.config {
        Some(p) => GenConfig::load(p)?,
        None => GenConfig::default(),
    };
    if a.endpoint.is_some() {
        cfg.endpoint_url = a.endpoint;
    }
    if a.renderer.is_some() {
        cfg.renderer_cmd = a.renderer;
    }
    let categories = if a.category == "all" {
        SYNTHETIC_CATEGORIES.to_vec()
    } else {
        a.category
            .split(',')
            .map(|s| parse_category(s.trim()).ok_or_else(|| Error::Config(format!("unknown category {s:?}"))))
            .collect::<Result<_, _>>()?
    };
    let request = BatchRequest {
        categories,
        count: a.count,
        seed: a.seed,
        columns: a.columns,
    };
    let plan = plan_batch(&request, &cfg.topics()?, &cfg.tables()?)?;
    let endpoint = cfg.http_endpoint()?;
    let renderer = cfg.renderer()?;
    let summary = generate_batch(&plan, &endpoint, &renderer, &cfg, &a.out)?;
    log::info!(
        "generated {} of {} samples; {} failures",
        summary.written,
        summary.planned,
        summary.failures.len()
    );
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(if summary.failures.is_empty() {
        Outcome::Complete
    } else {
        Outcome::Partial
    })
}

fn pipeline_config(o: &FilterOverrides, fallback: Option<&Path>) -> anyhow::Result<PipelineConfig> {
    let path = o.config.as_deref().or(fallback.filter(|p| p.exists()));
    let mut cfg = match path {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(t) = o.f1_threshold {
        cfg.f1_threshold = t;
    }
    if let Some(p) = &o.env_inventory {
        cfg.env_inventory = Some(p.clone());
    }
    if let Some(n) = o.parallelism {
        cfg.parallelism = n;
    }
    if let Some(f) = &o.filters {
        cfg.filter_order = f
            .split(',')
            .map(|s| s.trim().parse())
            .collect::<Result<_, Error>>()?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn inventory(cfg: &PipelineConfig) -> anyhow::Result<EnvironmentInventory> {
    Ok(match &cfg.env_inventory {
        Some(p) => EnvironmentInventory::from_file(p)?,
        None => EnvironmentInventory::default(),
    })
}

struct FilterRun {
    retained: Vec<Candidate>,
    report: FilterReport,
    rejected: Vec<String>,
}

fn run_filter(cfg: &PipelineConfig, predictions: &Path, references: &Path) -> anyhow::Result<FilterRun> {
    let loaded = load_candidates(predictions)?;
    for r in &loaded.rejected {
        log::warn!("skipped prediction line {r}");
    }
    let refs = load_references(references)?;
    let (retained, report) = run_filter_pass(&loaded.records, &refs, cfg, &inventory(cfg)?)?;
    Ok(FilterRun {
        retained,
        report,
        rejected: loaded.rejected,
    })
}

fn cmd_filter(a: FilterArgs) -> anyhow::Result<Outcome> {
    let cfg = pipeline_config(&a.overrides, None)?;
    let missing = |what: &str| Error::Config(format!("{what} not given on the command line or in the config"));
    let predictions = a.predictions.or(cfg.predictions.clone()).ok_or_else(|| missing("predictions"))?;
    let references = a.references.or(cfg.references.clone()).ok_or_else(|| missing("references"))?;
    let out = a.out.or(cfg.output.clone()).ok_or_else(|| missing("out"))?;
    let run = run_filter(&cfg, &predictions, &references)?;
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    run.report.save(&out.join("report.json"))?;
    write_jsonl(&out.join("retained.jsonl"), &run.retained)?;
    let digest = content_digest(&run.retained, &cfg);
    std::fs::write(out.join("digest.txt"), format!("{digest}\n"))?;
    log::info!(
        "retained {} of {} samples",
        run.report.retained_count,
        run.report.input_count
    );
    println!("{digest}");
    Ok(if run.rejected.is_empty() {
        Outcome::Complete
    } else {
        Outcome::Partial
    })
}

fn manifest_ids(path: &Path) -> anyhow::Result<HashSet<String>> {
    let records: Vec<Candidate> = read_jsonl(path)?;
    Ok(records.into_iter().map(|c| c.sample_id).collect())
}

fn cmd_stats(a: StatsArgs) -> anyhow::Result<Outcome> {
    let report = FilterReport::load(&a.report)?;
    let previous = a.previous.as_deref().map(manifest_ids).transpose()?;
    let stats = iteration_stats(a.iteration, &report, previous.as_ref(), &report.prefilter_f1s());
    match &a.out {
        Some(p) => write_json(p, &stats)?,
        None => println!("{}", serde_json::to_string_pretty(&stats)?),
    }
    Ok(Outcome::Complete)
}

fn cmd_balance(a: BalanceArgs) -> anyhow::Result<Outcome> {
    let ratios: SamplingRatios = a.ratios.parse()?;
    ratios.validate()?;
    let manifest: Vec<Candidate> = read_jsonl(&a.input)?;
    let balanced = sample_balance(&manifest, &ratios, a.seed);
    match &a.out {
        Some(p) => write_jsonl(p, &balanced)?,
        None => {
            for c in &balanced {
                println!("{}", serde_json::to_string(c)?);
            }
        }
    }
    log::info!("balanced {} records into {}", manifest.len(), balanced.len());
    Ok(Outcome::Complete)
}

fn cmd_iterate(a: IterateArgs) -> anyhow::Result<Outcome> {
    let dir = &a.from;
    let cfg = pipeline_config(&a.overrides, Some(&dir.join("config.toml")))?;
    let predictions = cfg.predictions.clone().unwrap_or_else(|| dir.join("predictions.jsonl"));
    let references = cfg.references.clone().unwrap_or_else(|| dir.join("references.jsonl"));
    let root = cfg.output.clone().unwrap_or_else(|| dir.join("versions"));
    let run = run_filter(&cfg, &predictions, &references)?;
    let parent = latest_version(&root)?;
    let previous = parent.as_ref().map(|p| manifest_ids(&p.manifest_path)).transpose()?;
    let version = commit_dataset(&root, &run.retained, &cfg, parent.as_ref())?;
    let stats = iteration_stats(
        version.iteration,
        &run.report,
        previous.as_ref(),
        &run.report.prefilter_f1s(),
    );
    let iter_dir = version.manifest_path.parent().expect("manifest lives in an iteration dir");
    run.report.save(&iter_dir.join("report.json"))?;
    write_json(&iter_dir.join("stats.json"), &stats)?;
    println!("{}", serde_json::to_string_pretty(&version)?);
    Ok(if run.rejected.is_empty() {
        Outcome::Complete
    } else {
        Outcome::Partial
    })
}

fn cmd_eval(a: EvalArgs) -> anyhow::Result<Outcome> {
    let load = |p: &Path| -> anyhow::Result<Vec<_>> {
        let loaded = load_candidates(p)?;
        if let Some(r) = loaded.rejected.first() {
            return Err(Error::Schema(r.clone()).into());
        }
        Ok(loaded.records.into_iter().map(|c| (c.sample_id, c.annotation)).collect())
    };
    let pairs = pair_corpora(load(&a.pred)?, load(&a.target)?).map_err(Error::from)?;
    let report = evaluate_corpus(&pairs);
    match &a.out {
        Some(p) => write_json(p, &report)?,
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    Ok(Outcome::Complete)
}
