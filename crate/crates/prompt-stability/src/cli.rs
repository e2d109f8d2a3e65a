//! Command-line front end.
//!
//! Three subcommands: `intra` and `inter` execute a stability run and write a
//! run directory (annotations.csv, series.json, metrics.json, manifest.json,
//! plot.svg); `metrics` recomputes the summary metrics from a stored series.
//!
//! Exit status: 0 on success, 2 when the run completed but the annotation
//! grid contains missing cells, 1 on failure.

use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::json;

use crate::annotate::{
    Annotator, CacheStore, CachedAnnotator, ChatClient, LlmClientConfig, NoiseModel, OutputSchema,
    RetryPolicy, SimulatedAnnotator, SimulatedAnnotatorConfig,
};
use crate::manifest::{ClampDisclosure, RunManifest};
use crate::metrics;
use crate::paraphrase::{
    clamp_sampling_temperature, FixedCorpus, LlmParaphraser, Paraphraser,
    SAMPLING_TEMPERATURE_CAP,
};
use crate::plot;
use crate::stability::{
    export_prompts, import_prompts, run_inter, run_intra, InterRunConfig, IntraRunConfig,
    PromptSpec, StabilitySeries, DEFAULT_TEMPERATURES,
};
use crate::store::{self, DataFormat, RunKind};

#[derive(Parser)]
#[command(name = "pss", version, about = "Prompt stability diagnostics for LLM annotation")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Repeated-annotation stability: one prompt, many iterations.
    Intra(IntraArgs),
    /// Prompt-variant stability: a paraphrase temperature sweep.
    Inter(InterArgs),
    /// Recompute summary metrics from a stored series.json.
    Metrics(MetricsArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Input dataset file.
    #[arg(long)]
    data: PathBuf,
    /// Input format.
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    /// Column holding stable row ids (positional ids if omitted).
    #[arg(long)]
    id_column: Option<String>,
    /// Column holding the text to classify.
    #[arg(long, default_value = "text")]
    text_column: String,
    /// File with the original instruction text.
    #[arg(long)]
    prompt: PathBuf,
    /// File with the output-format postfix appended to every prompt.
    #[arg(long)]
    postfix: PathBuf,
    /// Comma-separated permitted labels (categorical schema).
    #[arg(long, conflicts_with = "range")]
    labels: Option<String>,
    /// Inclusive integer range "LOW:HIGH" (interval schema).
    #[arg(long)]
    range: Option<String>,
    /// Rows to sample from the dataset.
    #[arg(long)]
    sample: Option<usize>,
    /// Bootstrap resamples per series point.
    #[arg(long)]
    bootstrap: Option<usize>,
    /// Confidence level for the bootstrap interval.
    #[arg(long)]
    confidence: Option<f64>,
    #[arg(long, value_enum)]
    ci_method: Option<CiMethodArg>,
    /// Master seed: drives row sampling, bootstrap streams, and the
    /// simulated annotator unless overridden.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    annotator: Option<AnnotatorArg>,
    /// Simulated annotator: per-call flip probability.
    #[arg(long)]
    sim_noise: Option<f64>,
    /// Simulated annotator: its own seed (defaults to --seed).
    #[arg(long)]
    sim_seed: Option<u64>,
    /// Chat-completions base URL.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Environment variable holding the API key.
    #[arg(long)]
    api_key_env: Option<String>,
    /// Maximum concurrent backend requests.
    #[arg(long)]
    parallelism: Option<usize>,
    /// Retries per annotation call.
    #[arg(long)]
    retries: Option<u32>,
    /// Annotation cache file (JSON lines); enables resume.
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Skip plot.svg.
    #[arg(long)]
    no_plot: bool,
    /// TOML configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for run artifacts.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct IntraArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Number of annotation iterations.
    #[arg(long)]
    iterations: Option<u32>,
}

#[derive(Args)]
struct InterArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated ascending paraphrase temperatures.
    #[arg(long)]
    temperatures: Option<String>,
    /// Prompt variants requested per temperature.
    #[arg(long)]
    variants: Option<usize>,
    /// Paraphrase provider: "llm" or "corpus:PATH".
    #[arg(long)]
    paraphraser: Option<String>,
    /// Write generated variants to this file and annotate as usual.
    #[arg(long)]
    export_prompts: Option<PathBuf>,
    /// Read variants from this file instead of generating.
    #[arg(long)]
    import_prompts: Option<PathBuf>,
    /// Print the unique variants per temperature to stdout.
    #[arg(long)]
    print_prompts: bool,
    /// Do not prepend the unmodified original prompt as a coder.
    #[arg(long)]
    no_include_original: bool,
}

#[derive(Args)]
struct MetricsArgs {
    /// Stored series.json from a previous run.
    #[arg(long)]
    series: PathBuf,
    /// Acceptability threshold.
    #[arg(long, default_value_t = metrics::DEFAULT_THRESHOLD)]
    threshold: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Jsonl,
}

#[derive(Clone, Copy, ValueEnum)]
enum CiMethodArg {
    Percentile,
    NormalApprox,
}

#[derive(Clone, Copy, ValueEnum)]
enum AnnotatorArg {
    Sim,
    Llm,
}

/// Optional TOML file mirroring the command-line flags.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    iterations: Option<u32>,
    sample: Option<usize>,
    bootstrap: Option<usize>,
    confidence: Option<f64>,
    ci_method: Option<String>,
    seed: Option<u64>,
    annotator: Option<String>,
    sim_noise: Option<f64>,
    sim_seed: Option<u64>,
    endpoint: Option<String>,
    model: Option<String>,
    api_key_env: Option<String>,
    parallelism: Option<usize>,
    retries: Option<u32>,
    temperatures: Option<Vec<f64>>,
    variants: Option<usize>,
    labels: Option<Vec<String>>,
}

fn load_file_config(path: Option<&Path>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading config file {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing config file {}", p.display()))
        }
    }
}

struct ResolvedCommon {
    data: PathBuf,
    format: DataFormat,
    id_column: Option<String>,
    text_column: String,
    prompt: PromptSpec,
    schema: OutputSchema,
    sample: usize,
    bootstrap: crate::resampling::BootstrapConfig,
    seed: u64,
    annotator_kind: AnnotatorArg,
    sim_cfg: SimulatedAnnotatorConfig,
    llm_cfg: LlmClientConfig,
    retry: RetryPolicy,
    cache: Option<PathBuf>,
    no_plot: bool,
    out: PathBuf,
}

fn read_text_file(path: &Path, what: &str) -> Result<String> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {what} file {}", path.display()))?;
    Ok(text.trim_end_matches(['\n', '\r']).to_string())
}

fn parse_schema(labels: Option<&str>, range: Option<&str>, file: &FileConfig) -> Result<OutputSchema> {
    if let Some(range) = range {
        let (low, high) = range
            .split_once([':', '-'])
            .or_else(|| range.split_once(".."))
            .ok_or_else(|| anyhow!("range must look like LOW:HIGH, got {range:?}"))?;
        return Ok(OutputSchema::IntegerRange {
            low: low.trim().parse().context("range low bound")?,
            high: high.trim().parse().context("range high bound")?,
        });
    }
    let allowed: Vec<String> = match labels {
        Some(s) => s.split(',').map(|t| t.trim().to_string()).collect(),
        None => file
            .labels
            .clone()
            .unwrap_or_else(|| vec!["0".into(), "1".into()]),
    };
    Ok(OutputSchema::Categorical { allowed })
}

fn resolve_common(args: &CommonArgs, file: &FileConfig) -> Result<ResolvedCommon> {
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let method = match args.ci_method {
        Some(CiMethodArg::Percentile) => crate::resampling::CiMethod::Percentile,
        Some(CiMethodArg::NormalApprox) => crate::resampling::CiMethod::NormalApprox,
        None => match file.ci_method.as_deref() {
            Some("normal_approx") | Some("normal-approx") => {
                crate::resampling::CiMethod::NormalApprox
            }
            Some("percentile") | None => crate::resampling::CiMethod::Percentile,
            Some(other) => bail!("unknown ci_method {other:?} in config file"),
        },
    };
    let schema = parse_schema(args.labels.as_deref(), args.range.as_deref(), file)?;
    let annotator_kind = match args.annotator {
        Some(kind) => kind,
        None => match file.annotator.as_deref() {
            Some("llm") => AnnotatorArg::Llm,
            Some("sim") | None => AnnotatorArg::Sim,
            Some(other) => bail!("unknown annotator {other:?} in config file"),
        },
    };
    let retry = RetryPolicy {
        max_retries: args.retries.or(file.retries).unwrap_or(3),
        initial_delay: Duration::from_millis(500),
    };
    let llm_defaults = LlmClientConfig::default();
    let llm_cfg = LlmClientConfig {
        endpoint: args
            .endpoint
            .clone()
            .or_else(|| file.endpoint.clone())
            .unwrap_or(llm_defaults.endpoint),
        model: args
            .model
            .clone()
            .or_else(|| file.model.clone())
            .unwrap_or(llm_defaults.model),
        api_key_env: args
            .api_key_env
            .clone()
            .or_else(|| file.api_key_env.clone())
            .unwrap_or(llm_defaults.api_key_env),
        parallelism: args.parallelism.or(file.parallelism).unwrap_or(8),
        max_retries: retry.max_retries,
        ..llm_defaults
    };
    let sim_cfg = SimulatedAnnotatorConfig {
        seed: args.sim_seed.or(file.sim_seed).unwrap_or(seed),
        schema: schema.clone(),
        noise: NoiseModel::Flip {
            probability: args.sim_noise.or(file.sim_noise).unwrap_or(0.05),
        },
        parallelism: args.parallelism.or(file.parallelism).unwrap_or(8),
    };
    Ok(ResolvedCommon {
        data: args.data.clone(),
        format: match args.format {
            FormatArg::Csv => DataFormat::Csv,
            FormatArg::Jsonl => DataFormat::Jsonl,
        },
        id_column: args.id_column.clone(),
        text_column: args.text_column.clone(),
        prompt: PromptSpec {
            original_text: read_text_file(&args.prompt, "prompt")?,
            postfix: read_text_file(&args.postfix, "postfix")?,
        },
        schema,
        sample: args.sample.or(file.sample).unwrap_or(100),
        bootstrap: crate::resampling::BootstrapConfig {
            samples: args.bootstrap.or(file.bootstrap).unwrap_or(1000),
            confidence: args.confidence.or(file.confidence).unwrap_or(0.95),
            method,
            seed,
        },
        seed,
        annotator_kind,
        sim_cfg,
        llm_cfg,
        retry,
        cache: args.cache.clone(),
        no_plot: args.no_plot,
        out: args.out.clone(),
    })
}

enum BuiltAnnotator {
    Sim(SimulatedAnnotator),
    Llm(ChatClient),
}

impl BuiltAnnotator {
    fn as_dyn(&self) -> &dyn Annotator {
        match self {
            BuiltAnnotator::Sim(a) => a,
            BuiltAnnotator::Llm(a) => a,
        }
    }

    fn describe(&self) -> serde_json::Value {
        match self {
            BuiltAnnotator::Sim(a) => json!({"kind": "sim", "config": a.config()}),
            BuiltAnnotator::Llm(a) => {
                let c = a.config();
                json!({
                    "kind": "llm",
                    "endpoint": c.endpoint,
                    "model": c.model,
                    "api_key_env": c.api_key_env,
                    "temperature": c.temperature,
                    "top_p": c.top_p,
                })
            }
        }
    }
}

fn build_annotator(common: &ResolvedCommon) -> Result<BuiltAnnotator> {
    Ok(match common.annotator_kind {
        AnnotatorArg::Sim => BuiltAnnotator::Sim(
            SimulatedAnnotator::new(common.sim_cfg.clone())
                .map_err(|e| anyhow!("simulated annotator: {e}"))?,
        ),
        AnnotatorArg::Llm => BuiltAnnotator::Llm(
            ChatClient::new(common.llm_cfg.clone()).map_err(|e| anyhow!("chat client: {e}"))?,
        ),
    })
}

fn write_artifacts(
    out: &Path,
    records: &[store::AnnotationRecord],
    kind: RunKind,
    series: &StabilitySeries,
    manifest: &RunManifest,
    no_plot: bool,
) -> Result<()> {
    std::fs::create_dir_all(out)?;
    store::export_csv_file(records, kind, &out.join("annotations.csv"))?;
    std::fs::write(
        out.join("series.json"),
        serde_json::to_string_pretty(series)? + "\n",
    )?;
    let report = metrics::report(series, metrics::DEFAULT_THRESHOLD);
    match report {
        Ok(report) => std::fs::write(
            out.join("metrics.json"),
            serde_json::to_string_pretty(&report)? + "\n",
        )?,
        Err(e) => {
            eprintln!("pss: warning: metrics unavailable: {e}");
            std::fs::write(out.join("metrics.json"), "null\n")?;
        }
    }
    std::fs::write(
        out.join("manifest.json"),
        serde_json::to_string_pretty(manifest)? + "\n",
    )?;
    if !no_plot {
        std::fs::write(
            out.join("plot.svg"),
            plot::render_svg(series, metrics::DEFAULT_THRESHOLD),
        )?;
    }
    Ok(())
}

fn advisory(series: &StabilitySeries) {
    if let Some(last) = series.points.last() {
        let t = metrics::DEFAULT_THRESHOLD;
        if last.estimate.ci_lower <= t && t <= last.estimate.ci_upper {
            println!(
                "advisory: the confidence interval at the final point includes {t}; \
                 the stability score cannot be distinguished from the acceptability threshold"
            );
        }
    }
}

fn exit_code(missing_cells: usize) -> i32 {
    if missing_cells > 0 {
        2
    } else {
        0
    }
}

fn cmd_intra(args: &IntraArgs) -> Result<i32> {
    let file = load_file_config(args.common.config.as_deref())?;
    let common = resolve_common(&args.common, &file)?;
    let iterations = args.iterations.or(file.iterations).unwrap_or(20);
    if iterations < 2 {
        bail!("--iterations must be at least 2");
    }

    let data = store::ingest(
        &common.data,
        common.format,
        common.id_column.as_deref(),
        &common.text_column,
    )?;
    let cfg = IntraRunConfig {
        iterations,
        sample_size: common.sample,
        sample_seed: common.seed,
        bootstrap: common.bootstrap,
        retry: common.retry,
    };
    let run_id = format!("intra-{}", common.seed);
    let annotator = build_annotator(&common)?;
    println!(
        "planned annotation calls: {}",
        common.sample.min(data.len()) * iterations as usize
    );

    let cache_store = match &common.cache {
        Some(path) => Some(CacheStore::open(path).map_err(|e| anyhow!("cache: {e}"))?),
        None => None,
    };
    let outcome = match &cache_store {
        Some(store_ref) => {
            let cached = CachedAnnotator::new(annotator.as_dyn(), store_ref, common.schema.clone());
            run_intra(&data, &common.prompt, &cached, &common.schema, &cfg, &run_id)?
        }
        None => run_intra(
            &data,
            &common.prompt,
            annotator.as_dyn(),
            &common.schema,
            &cfg,
            &run_id,
        )?,
    };

    let manifest = RunManifest {
        tool_version: RunManifest::tool_version(),
        run_id,
        kind: RunKind::Intra,
        rng_algorithm: RunManifest::rng_algorithm(),
        prompt: common.prompt.clone(),
        message_layout: "system=full prompt, user=text".into(),
        data_path: common.data.display().to_string(),
        annotator: annotator.describe(),
        paraphraser: None,
        schema: common.schema.clone(),
        intra: Some(cfg),
        inter: None,
        clamp_disclosures: vec![],
    };
    write_artifacts(
        &common.out,
        &outcome.records,
        RunKind::Intra,
        &outcome.series,
        &manifest,
        common.no_plot,
    )?;
    if outcome.missing_cells > 0 {
        eprintln!(
            "pss: warning: {} of {} cells missing after retries",
            outcome.missing_cells, outcome.cells_attempted
        );
    }
    advisory(&outcome.series);
    Ok(exit_code(outcome.missing_cells))
}

enum BuiltParaphraser {
    Llm(LlmParaphraser),
    Corpus(FixedCorpus, PathBuf),
}

impl BuiltParaphraser {
    fn as_dyn(&self) -> &dyn Paraphraser {
        match self {
            BuiltParaphraser::Llm(p) => p,
            BuiltParaphraser::Corpus(p, _) => p,
        }
    }

    fn describe(&self) -> serde_json::Value {
        match self {
            BuiltParaphraser::Llm(p) => json!({
                "kind": "llm",
                "endpoint": p.config().endpoint,
                "model": p.config().model,
                "sampling_temperature_cap": SAMPLING_TEMPERATURE_CAP,
            }),
            BuiltParaphraser::Corpus(c, path) => json!({
                "kind": "corpus",
                "path": path.display().to_string(),
                "label": c.label,
            }),
        }
    }
}

fn cmd_inter(args: &InterArgs) -> Result<i32> {
    let file = load_file_config(args.common.config.as_deref())?;
    let common = resolve_common(&args.common, &file)?;

    let temperatures: Vec<f64> = match &args.temperatures {
        Some(s) => s
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|_| anyhow!("bad temperature {t:?}")))
            .collect::<Result<_>>()?,
        None => file
            .temperatures
            .clone()
            .unwrap_or_else(|| DEFAULT_TEMPERATURES.to_vec()),
    };
    let cfg = InterRunConfig {
        temperatures: temperatures.clone(),
        variants_per_temperature: args.variants.or(file.variants).unwrap_or(10),
        sample_size: common.sample,
        sample_seed: common.seed,
        bootstrap: common.bootstrap,
        retry: common.retry,
        include_original: !args.no_include_original,
    };

    let data = store::ingest(
        &common.data,
        common.format,
        common.id_column.as_deref(),
        &common.text_column,
    )?;
    let paraphraser = match args.paraphraser.as_deref() {
        None | Some("llm") => BuiltParaphraser::Llm(LlmParaphraser::new(common.llm_cfg.clone())),
        Some(spec) => match spec.strip_prefix("corpus:") {
            Some(path) => {
                let path = PathBuf::from(path);
                let corpus = FixedCorpus::from_file(&path)
                    .map_err(|e| anyhow!("loading corpus {}: {e}", path.display()))?;
                BuiltParaphraser::Corpus(corpus, path)
            }
            None => bail!("--paraphraser must be \"llm\" or \"corpus:PATH\""),
        },
    };

    let imported = match &args.import_prompts {
        Some(path) => Some(import_prompts(path, &cfg.temperatures)?),
        None => None,
    };

    let run_id = format!("inter-{}", common.seed);
    let annotator = build_annotator(&common)?;
    println!(
        "planned annotation calls (upper bound): {}",
        common.sample.min(data.len())
            * cfg.temperatures.len()
            * (cfg.variants_per_temperature + usize::from(cfg.include_original))
    );

    let cache_store = match &common.cache {
        Some(path) => Some(CacheStore::open(path).map_err(|e| anyhow!("cache: {e}"))?),
        None => None,
    };
    let outcome = match &cache_store {
        Some(store_ref) => {
            let cached = CachedAnnotator::new(annotator.as_dyn(), store_ref, common.schema.clone());
            run_inter(
                &data,
                &common.prompt,
                paraphraser.as_dyn(),
                &cached,
                &common.schema,
                &cfg,
                &run_id,
                imported.as_deref(),
            )?
        }
        None => run_inter(
            &data,
            &common.prompt,
            paraphraser.as_dyn(),
            annotator.as_dyn(),
            &common.schema,
            &cfg,
            &run_id,
            imported.as_deref(),
        )?,
    };

    if args.print_prompts {
        for (t, group) in &outcome.variant_groups {
            println!("temperature {}:", store::format_temperature(*t));
            for v in group {
                println!("  {v}");
            }
        }
    }
    if let Some(path) = &args.export_prompts {
        export_prompts(&run_id, &outcome.variant_groups, path)?;
    }

    let clamp_disclosures = match &paraphraser {
        BuiltParaphraser::Llm(_) => cfg
            .temperatures
            .iter()
            .map(|&t| ClampDisclosure {
                requested: t,
                applied: clamp_sampling_temperature(t),
            })
            .collect(),
        BuiltParaphraser::Corpus(..) => vec![],
    };
    let manifest = RunManifest {
        tool_version: RunManifest::tool_version(),
        run_id,
        kind: RunKind::Inter,
        rng_algorithm: RunManifest::rng_algorithm(),
        prompt: common.prompt.clone(),
        message_layout: "system=full prompt, user=text".into(),
        data_path: common.data.display().to_string(),
        annotator: annotator.describe(),
        paraphraser: Some(paraphraser.describe()),
        schema: common.schema.clone(),
        intra: None,
        inter: Some(cfg),
        clamp_disclosures,
    };
    write_artifacts(
        &common.out,
        &outcome.records,
        RunKind::Inter,
        &outcome.series,
        &manifest,
        common.no_plot,
    )?;
    for skip in &outcome.skipped {
        eprintln!(
            "pss: warning: temperature {} skipped: {}",
            store::format_temperature(skip.temperature),
            skip.reason
        );
    }
    if outcome.missing_cells > 0 {
        eprintln!(
            "pss: warning: {} of {} cells missing after retries",
            outcome.missing_cells, outcome.cells_attempted
        );
    }
    advisory(&outcome.series);
    Ok(exit_code(outcome.missing_cells))
}

fn cmd_metrics(args: &MetricsArgs) -> Result<i32> {
    let text = std::fs::read_to_string(&args.series)
        .with_context(|| format!("reading {}", args.series.display()))?;
    let series: StabilitySeries =
        serde_json::from_str(&text).context("series.json is malformed")?;
    let report = metrics::report(&series, args.threshold)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(0)
}

/// Executes the parsed command; the error string doubles as the
/// machine-readable failure report on stderr.
pub fn run(cli: Cli) -> Result<i32> {
    match &cli.command {
        Command::Intra(args) => cmd_intra(args),
        Command::Inter(args) => cmd_inter(args),
        Command::Metrics(args) => cmd_metrics(args),
    }
}
