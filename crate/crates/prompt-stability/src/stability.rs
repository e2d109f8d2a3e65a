//! Intra- and inter-prompt stability routines.
//!
//! Both routines annotate a seeded sample of rows under a grid of coders and
//! score agreement with bootstrapped alpha:
//!
//! * intra: coders are iterations of one fixed prompt; after each iteration
//!   `k >= 2` alpha is computed over all iterations up to `k`, so the series
//!   shows cumulative agreement as evidence accumulates.
//! * inter: coders are prompt variants at one paraphrase temperature; the
//!   series runs over the temperature schedule.
//!
//! Failed annotations become missing cells rather than aborting the run;
//! only an iteration with zero parseable labels (or a temperature whose
//! variants cannot be obtained) is dropped.

use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotate::{
    annotate_with_retry, AnnotationRequest, Annotator, OutputSchema, RetryPolicy,
};
use crate::paraphrase::{parse_prompt_variants, ParaphraseError, Paraphraser, PromptVariantLine};
use crate::reliability::{ReliabilityTable, Scale};
use crate::resampling::{bootstrap_alpha, AlphaEstimate, BootstrapConfig, ResamplingError};
use crate::store::{sample, AnnotationRecord, CoderContext, Dataset, StoreError};

/// Instruction text plus the fixed output-format clause.
///
/// The postfix stays byte-identical across every variant of a run; the full
/// prompt is always `variant + " " + postfix`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub original_text: String,
    pub postfix: String,
}

impl PromptSpec {
    pub fn full_prompt(&self, variant_text: &str) -> String {
        format!("{} {}", variant_text, self.postfix)
    }

    pub fn original_full_prompt(&self) -> String {
        self.full_prompt(&self.original_text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Iteration,
    Temperature,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub x: f64,
    pub estimate: AlphaEstimate,
}

/// Per-step alpha estimates of one run, ordered by strictly increasing x.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilitySeries {
    pub axis: Axis,
    pub points: Vec<SeriesPoint>,
}

pub const DEFAULT_TEMPERATURES: [f64; 11] =
    [0.1, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntraRunConfig {
    pub iterations: u32,
    pub sample_size: usize,
    pub sample_seed: u64,
    pub bootstrap: BootstrapConfig,
    pub retry: RetryPolicy,
}

impl Default for IntraRunConfig {
    fn default() -> Self {
        Self {
            iterations: 20,
            sample_size: 100,
            sample_seed: 0,
            bootstrap: BootstrapConfig::default(),
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterRunConfig {
    /// Ascending paraphrase temperatures.
    pub temperatures: Vec<f64>,
    pub variants_per_temperature: usize,
    pub sample_size: usize,
    pub sample_seed: u64,
    pub bootstrap: BootstrapConfig,
    pub retry: RetryPolicy,
    /// Prepend the unmodified original prompt as a coder at every temperature.
    pub include_original: bool,
}

impl Default for InterRunConfig {
    fn default() -> Self {
        Self {
            temperatures: DEFAULT_TEMPERATURES.to_vec(),
            variants_per_temperature: 10,
            sample_size: 100,
            sample_seed: 0,
            bootstrap: BootstrapConfig::default(),
            retry: RetryPolicy::default(),
            include_original: true,
        }
    }
}

#[derive(Debug, Error)]
pub enum StabilityError {
    #[error("intra runs need at least 2 iterations, got {0}")]
    TooFewIterations(u32),
    #[error("temperatures must be positive and strictly increasing")]
    BadTemperatureSchedule,
    #[error("variants per temperature must be at least 1")]
    NoVariantsRequested,
    #[error("iteration {0} produced no parseable labels")]
    EmptyIteration(u32),
    #[error("sampled dataset is empty")]
    EmptySample,
    #[error("malformed prompt file at line {line}: {message}")]
    MalformedPromptFile { line: usize, message: String },
    #[error(transparent)]
    Resampling(#[from] ResamplingError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A temperature dropped from an inter series, with the reason.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TemperatureSkip {
    pub temperature: f64,
    pub reason: String,
}

#[derive(Debug)]
pub struct IntraOutcome {
    pub series: StabilitySeries,
    pub records: Vec<AnnotationRecord>,
    /// Cells that failed annotation after retries.
    pub missing_cells: usize,
    /// Grid cells attempted (annotator invocations before retry expansion).
    pub cells_attempted: usize,
}

#[derive(Debug)]
pub struct InterOutcome {
    pub series: StabilitySeries,
    pub records: Vec<AnnotationRecord>,
    pub missing_cells: usize,
    pub cells_attempted: usize,
    pub skipped: Vec<TemperatureSkip>,
    /// Variant texts actually used (post dedup, original included), per
    /// temperature; the export workflow writes these.
    pub variant_groups: Vec<(f64, Vec<String>)>,
}

struct GridJob {
    row_idx: usize,
    context: CoderContext,
    full_prompt: String,
}

struct GridCell {
    row_idx: usize,
    context: CoderContext,
    raw_reply: String,
    label: String,
}

/// Annotates every job with at most `annotator.max_parallelism()` calls in
/// flight. Results are keyed by grid position, so completion order never
/// affects output. Failed cells are simply absent.
fn annotate_grid(
    rows: &Dataset,
    jobs: &[GridJob],
    annotator: &dyn Annotator,
    schema: &OutputSchema,
    retry: &RetryPolicy,
) -> Vec<Option<GridCell>> {
    let workers = annotator.max_parallelism().max(1).min(jobs.len().max(1));
    let next = Mutex::new(0usize);
    let results: Vec<Mutex<Option<GridCell>>> =
        (0..jobs.len()).map(|_| Mutex::new(None)).collect();

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = {
                    let mut guard = next.lock().unwrap();
                    let idx = *guard;
                    if idx >= jobs.len() {
                        return;
                    }
                    *guard += 1;
                    idx
                };
                let job = &jobs[idx];
                let row = &rows.rows[job.row_idx];
                let coder_id = job.context.coder_id();
                let req = AnnotationRequest {
                    row_id: &row.id,
                    text: &row.text,
                    full_prompt: &job.full_prompt,
                    context_id: &coder_id,
                };
                if let Ok((raw, label)) = annotate_with_retry(annotator, &req, schema, retry) {
                    *results[idx].lock().unwrap() = Some(GridCell {
                        row_idx: job.row_idx,
                        context: job.context.clone(),
                        raw_reply: raw,
                        label: label.raw,
                    });
                }
            });
        }
    });

    results
        .into_iter()
        .map(|m| m.into_inner().unwrap())
        .collect()
}

fn scale_of(schema: &OutputSchema) -> Scale {
    match schema {
        OutputSchema::Categorical { .. } => Scale::Nominal,
        OutputSchema::IntegerRange { .. } => Scale::Interval,
    }
}

fn record_from(cell: &GridCell, rows: &Dataset, run_id: &str) -> AnnotationRecord {
    let row = &rows.rows[cell.row_idx];
    AnnotationRecord {
        row_id: row.id.clone(),
        text: row.text.clone(),
        raw_reply: cell.raw_reply.clone(),
        label: cell.label.clone(),
        context: cell.context.clone(),
        run_id: run_id.to_string(),
        timestamp: chrono::Utc::now(),
    }
}

/// Intra-prompt stability: annotate the sampled rows once per iteration with
/// the identical full prompt, then score cumulative alpha after each
/// iteration `k` in `2..=iterations`.
pub fn run_intra(
    data: &Dataset,
    prompt: &PromptSpec,
    annotator: &dyn Annotator,
    schema: &OutputSchema,
    cfg: &IntraRunConfig,
    run_id: &str,
) -> Result<IntraOutcome, StabilityError> {
    if cfg.iterations < 2 {
        return Err(StabilityError::TooFewIterations(cfg.iterations));
    }
    let rows = sample(data, cfg.sample_size, cfg.sample_seed);
    if rows.is_empty() {
        return Err(StabilityError::EmptySample);
    }

    let full_prompt = prompt.original_full_prompt();
    let jobs: Vec<GridJob> = (1..=cfg.iterations)
        .flat_map(|i| {
            (0..rows.len()).map(move |r| (i, r))
        })
        .map(|(i, r)| GridJob {
            row_idx: r,
            context: CoderContext::Iteration { iteration: i },
            full_prompt: full_prompt.clone(),
        })
        .collect();
    let cells_attempted = jobs.len();
    let cells = annotate_grid(&rows, &jobs, annotator, schema, &cfg.retry);

    // Per-iteration success accounting; an iteration with nothing parseable
    // means the backend is broken, not merely noisy.
    let mut per_iteration = vec![0usize; cfg.iterations as usize + 1];
    let mut table = ReliabilityTable::new(scale_of(schema));
    for row in &rows.rows {
        table.add_unit(&row.id);
    }
    for i in 1..=cfg.iterations {
        table.add_coder(&format!("iter-{i}"));
    }
    let mut records = Vec::new();
    let mut missing = 0usize;
    for cell in &cells {
        match cell {
            Some(cell) => {
                if let CoderContext::Iteration { iteration } = cell.context {
                    per_iteration[iteration as usize] += 1;
                }
                table
                    .set(
                        &rows.rows[cell.row_idx].id,
                        &cell.context.coder_id(),
                        &cell.label,
                    )
                    .expect("parsed labels are non-empty");
                records.push(record_from(cell, &rows, run_id));
            }
            None => missing += 1,
        }
    }
    for i in 1..=cfg.iterations {
        if per_iteration[i as usize] == 0 {
            return Err(StabilityError::EmptyIteration(i));
        }
    }

    let mut points = Vec::new();
    for k in 2..=cfg.iterations {
        let sub = table.first_coders(k as usize);
        let estimate = bootstrap_alpha(&sub, &cfg.bootstrap)?;
        points.push(SeriesPoint {
            x: f64::from(k),
            estimate,
        });
    }

    Ok(IntraOutcome {
        series: StabilitySeries {
            axis: Axis::Iteration,
            points,
        },
        records,
        missing_cells: missing,
        cells_attempted,
    })
}

/// Assembles the coder set for one temperature: optional original first, then
/// the generated variants with exact duplicates collapsed.
fn assemble_variants(
    original: &str,
    generated: &[String],
    include_original: bool,
    temperature: f64,
) -> Vec<(String, String, bool)> {
    let mut texts: Vec<(String, bool)> = Vec::new();
    if include_original {
        texts.push((original.to_string(), true));
    }
    for v in generated {
        if !texts.iter().any(|(t, _)| t == v) {
            texts.push((v.clone(), false));
        }
    }
    let temp_label = crate::store::format_temperature(temperature);
    texts
        .into_iter()
        .enumerate()
        .map(|(j, (text, original))| (format!("t{temp_label}-v{j}"), text, original))
        .collect()
}

/// Inter-prompt stability: for each scheduled temperature obtain prompt
/// variants, annotate the (rows x variants) grid, and score alpha with
/// variants as coders. A temperature whose variants cannot be obtained is
/// skipped and reported, not fatal.
///
/// `imported` replaces generation wholesale (the edit-prompts workflow);
/// temperatures absent from it are skipped.
pub fn run_inter(
    data: &Dataset,
    prompt: &PromptSpec,
    paraphraser: &dyn Paraphraser,
    annotator: &dyn Annotator,
    schema: &OutputSchema,
    cfg: &InterRunConfig,
    run_id: &str,
    imported: Option<&[(f64, Vec<String>)]>,
) -> Result<InterOutcome, StabilityError> {
    validate_temperatures(&cfg.temperatures)?;
    if cfg.variants_per_temperature == 0 {
        return Err(StabilityError::NoVariantsRequested);
    }
    // One seeded sample for the whole sweep keeps the unit axis comparable
    // across temperatures.
    let rows = sample(data, cfg.sample_size, cfg.sample_seed);
    if rows.is_empty() {
        return Err(StabilityError::EmptySample);
    }

    let mut points = Vec::new();
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    let mut variant_groups = Vec::new();
    let mut missing = 0usize;
    let mut cells_attempted = 0usize;

    for &t in &cfg.temperatures {
        let generated: Result<Vec<String>, ParaphraseError> = match imported {
            Some(groups) => groups
                .iter()
                .find(|(gt, _)| (gt - t).abs() < 1e-9)
                .map(|(_, v)| v.clone())
                .ok_or(ParaphraseError::UnknownTemperature(t)),
            None => paraphraser.generate(&prompt.original_text, cfg.variants_per_temperature, t),
        };
        let generated = match generated {
            Ok(v) => v,
            Err(e) => {
                skipped.push(TemperatureSkip {
                    temperature: t,
                    reason: e.to_string(),
                });
                continue;
            }
        };

        let variants = assemble_variants(&prompt.original_text, &generated, cfg.include_original, t);
        variant_groups.push((t, variants.iter().map(|(_, text, _)| text.clone()).collect()));

        let jobs: Vec<GridJob> = variants
            .iter()
            .flat_map(|(id, text, original)| {
                let full = prompt.full_prompt(text);
                (0..rows.len()).map(move |r| GridJob {
                    row_idx: r,
                    context: CoderContext::Variant {
                        prompt_id: id.clone(),
                        prompt: text.clone(),
                        original: *original,
                        temperature: t,
                    },
                    full_prompt: full.clone(),
                })
            })
            .collect();
        cells_attempted += jobs.len();
        let cells = annotate_grid(&rows, &jobs, annotator, schema, &cfg.retry);

        let mut table = ReliabilityTable::new(scale_of(schema));
        for row in &rows.rows {
            table.add_unit(&row.id);
        }
        for (id, _, _) in &variants {
            table.add_coder(id);
        }
        let mut any = false;
        for cell in &cells {
            match cell {
                Some(cell) => {
                    any = true;
                    table
                        .set(
                            &rows.rows[cell.row_idx].id,
                            &cell.context.coder_id(),
                            &cell.label,
                        )
                        .expect("parsed labels are non-empty");
                    records.push(record_from(cell, &rows, run_id));
                }
                None => missing += 1,
            }
        }
        if !any {
            skipped.push(TemperatureSkip {
                temperature: t,
                reason: "no parseable annotations".into(),
            });
            continue;
        }
        match bootstrap_alpha(&table, &cfg.bootstrap) {
            Ok(estimate) => points.push(SeriesPoint { x: t, estimate }),
            Err(e) => skipped.push(TemperatureSkip {
                temperature: t,
                reason: e.to_string(),
            }),
        }
    }

    Ok(InterOutcome {
        series: StabilitySeries {
            axis: Axis::Temperature,
            points,
        },
        records,
        missing_cells: missing,
        cells_attempted,
        skipped,
        variant_groups,
    })
}

fn validate_temperatures(temps: &[f64]) -> Result<(), StabilityError> {
    if temps.is_empty()
        || temps.iter().any(|t| *t <= 0.0)
        || temps.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(StabilityError::BadTemperatureSchedule);
    }
    Ok(())
}

/// Writes per-temperature variant lists in the tab-separated prompt-variant
/// layout for manual editing.
pub fn export_prompts(
    label: &str,
    groups: &[(f64, Vec<String>)],
    path: &Path,
) -> Result<(), StabilityError> {
    let lines: Vec<PromptVariantLine> = groups
        .iter()
        .flat_map(|(t, texts)| {
            texts.iter().map(move |text| PromptVariantLine {
                label: label.to_string(),
                temperature: *t,
                text: text.clone(),
            })
        })
        .collect();
    std::fs::write(path, crate::paraphrase::write_prompt_variants(&lines))?;
    Ok(())
}

/// Reads per-temperature variant lists back. Every temperature in the file
/// must belong to the run's schedule; the offending line is reported if not.
pub fn import_prompts(
    path: &Path,
    schedule: &[f64],
) -> Result<Vec<(f64, Vec<String>)>, StabilityError> {
    let input = std::fs::read_to_string(path)?;
    import_prompts_str(&input, schedule)
}

pub fn import_prompts_str(
    input: &str,
    schedule: &[f64],
) -> Result<Vec<(f64, Vec<String>)>, StabilityError> {
    let lines = parse_prompt_variants(input).map_err(|e| match e {
        ParaphraseError::MalformedPromptFile { line, message } => {
            StabilityError::MalformedPromptFile { line, message }
        }
        other => StabilityError::MalformedPromptFile {
            line: 0,
            message: other.to_string(),
        },
    })?;
    let mut groups: Vec<(f64, Vec<String>)> = Vec::new();
    for (i, l) in lines.iter().enumerate() {
        if !schedule.iter().any(|t| (t - l.temperature).abs() < 1e-9) {
            return Err(StabilityError::MalformedPromptFile {
                line: i + 1,
                message: format!(
                    "temperature {} is not in the configured schedule",
                    l.temperature
                ),
            });
        }
        match groups
            .iter_mut()
            .find(|(t, _)| (*t - l.temperature).abs() < 1e-9)
        {
            Some((_, texts)) => texts.push(l.text.clone()),
            None => groups.push((l.temperature, vec![l.text.clone()])),
        }
    }
    Ok(groups)
}
