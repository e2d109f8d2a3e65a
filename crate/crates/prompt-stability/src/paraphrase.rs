//! Paraphrase providers for the inter-prompt sweep.
//!
//! A [`Paraphraser`] turns the original instruction into `count` reworded
//! variants at a given "temperature" — the sweep parameter controlling how
//! far variants may drift. Two providers: an LLM-backed generator, and a
//! fixed-list corpus replayed from a prompt-variant file for reproducible
//! offline runs.
//!
//! Variant texts never include the output postfix; that clause is appended
//! unchanged downstream so only the construct description varies.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotate::{AnnotateError, ChatClient, LlmClientConfig};

/// Backends commonly cap sampling temperature at 2.0; sweep temperatures
/// above the cap are clamped and the mapping disclosed in the run manifest.
pub const SAMPLING_TEMPERATURE_CAP: f64 = 2.0;

pub trait Paraphraser: Send + Sync {
    /// `count` variant texts of `original` at the given sweep temperature.
    /// Duplicates are preserved here; deduplication happens downstream.
    fn generate(
        &self,
        original: &str,
        count: usize,
        temperature: f64,
    ) -> Result<Vec<String>, ParaphraseError>;

    fn name(&self) -> &str;
}

#[derive(Debug, Error)]
pub enum ParaphraseError {
    #[error("paraphrase generation failed: {0}")]
    Failed(String),
    #[error("temperature {0} is not present in the corpus")]
    UnknownTemperature(f64),
    #[error("malformed prompt-variant file at line {line}: {message}")]
    MalformedPromptFile { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Clamps a sweep temperature onto the backend's sampling range.
pub fn clamp_sampling_temperature(requested: f64) -> f64 {
    requested.min(SAMPLING_TEMPERATURE_CAP)
}

// ---------------------------------------------------------------------------
// Prompt-variant file
// ---------------------------------------------------------------------------

/// One line of a prompt-variant file: run label, temperature, variant text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptVariantLine {
    pub label: String,
    pub temperature: f64,
    pub text: String,
}

/// Parses the tab-separated prompt-variant format: one record per line,
/// `label<TAB>temperature<TAB>variant text`. Blank lines are skipped.
pub fn parse_prompt_variants(input: &str) -> Result<Vec<PromptVariantLine>, ParaphraseError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, '\t');
        let label = parts.next().unwrap_or("");
        let temp = parts
            .next()
            .ok_or_else(|| ParaphraseError::MalformedPromptFile {
                line: i + 1,
                message: "expected three tab-separated fields".into(),
            })?;
        let text = parts
            .next()
            .ok_or_else(|| ParaphraseError::MalformedPromptFile {
                line: i + 1,
                message: "missing variant text field".into(),
            })?;
        let temperature: f64 =
            temp.trim()
                .parse()
                .map_err(|_| ParaphraseError::MalformedPromptFile {
                    line: i + 1,
                    message: format!("temperature {temp:?} is not a number"),
                })?;
        if text.is_empty() {
            return Err(ParaphraseError::MalformedPromptFile {
                line: i + 1,
                message: "variant text is empty".into(),
            });
        }
        out.push(PromptVariantLine {
            label: label.to_string(),
            temperature,
            text: text.to_string(),
        });
    }
    Ok(out)
}

/// Serializes variant lines back to the tab-separated layout.
pub fn write_prompt_variants(lines: &[PromptVariantLine]) -> String {
    let mut out = String::new();
    for l in lines {
        out.push_str(&l.label);
        out.push('\t');
        out.push_str(&crate::store::format_temperature(l.temperature));
        out.push('\t');
        out.push_str(&l.text);
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// Fixed-list replay provider
// ---------------------------------------------------------------------------

/// Prompt variants grouped by temperature, replayed byte-exactly.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FixedCorpus {
    /// Temperature groups in order of first appearance in the source file.
    pub groups: Vec<(f64, Vec<String>)>,
    pub label: String,
}

const TEMPERATURE_EPS: f64 = 1e-9;

impl FixedCorpus {
    pub fn from_str(input: &str) -> Result<Self, ParaphraseError> {
        let lines = parse_prompt_variants(input)?;
        let mut corpus = FixedCorpus::default();
        for l in lines {
            if corpus.label.is_empty() {
                corpus.label = l.label.clone();
            }
            match corpus
                .groups
                .iter_mut()
                .find(|(t, _)| (*t - l.temperature).abs() < TEMPERATURE_EPS)
            {
                Some((_, texts)) => texts.push(l.text),
                None => corpus.groups.push((l.temperature, vec![l.text])),
            }
        }
        Ok(corpus)
    }

    pub fn from_file(path: &Path) -> Result<Self, ParaphraseError> {
        Self::from_str(&std::fs::read_to_string(path)?)
    }

    pub fn temperatures(&self) -> Vec<f64> {
        self.groups.iter().map(|(t, _)| *t).collect()
    }

    pub fn variants_at(&self, temperature: f64) -> Option<&[String]> {
        self.groups
            .iter()
            .find(|(t, _)| (*t - temperature).abs() < TEMPERATURE_EPS)
            .map(|(_, v)| v.as_slice())
    }
}

impl Paraphraser for FixedCorpus {
    fn generate(
        &self,
        _original: &str,
        count: usize,
        temperature: f64,
    ) -> Result<Vec<String>, ParaphraseError> {
        let variants = self
            .variants_at(temperature)
            .ok_or(ParaphraseError::UnknownTemperature(temperature))?;
        Ok(variants.iter().take(count).cloned().collect())
    }

    fn name(&self) -> &str {
        "corpus"
    }
}

// ---------------------------------------------------------------------------
// LLM-backed generator
// ---------------------------------------------------------------------------

/// Generates paraphrases through a chat-completions backend, one request per
/// variant. The sweep temperature maps onto the backend's sampling
/// temperature via [`clamp_sampling_temperature`].
pub struct LlmParaphraser {
    cfg: LlmClientConfig,
}

impl LlmParaphraser {
    pub fn new(cfg: LlmClientConfig) -> Self {
        Self { cfg }
    }

    pub fn config(&self) -> &LlmClientConfig {
        &self.cfg
    }
}

const PARAPHRASE_INSTRUCTION: &str = "Paraphrase the user's text. Reply with one \
paraphrase only, preserving the meaning as closely as you can. Respond nothing else.";

fn strip_reply(reply: &str) -> String {
    reply.trim().trim_matches(['"', '\'']).trim().to_string()
}

impl Paraphraser for LlmParaphraser {
    fn generate(
        &self,
        original: &str,
        count: usize,
        temperature: f64,
    ) -> Result<Vec<String>, ParaphraseError> {
        let sampling = clamp_sampling_temperature(temperature);
        let client = ChatClient::new(LlmClientConfig {
            temperature: sampling,
            ..self.cfg.clone()
        })
        .map_err(|e| ParaphraseError::Failed(e.to_string()))?;

        let mut variants = Vec::with_capacity(count);
        for _ in 0..count {
            let mut last: Option<AnnotateError> = None;
            let mut got = None;
            for attempt in 0..=self.cfg.max_retries {
                if attempt > 0 {
                    std::thread::sleep(std::time::Duration::from_millis(200 * (1 << attempt)));
                }
                match client.complete(PARAPHRASE_INSTRUCTION, original) {
                    Ok(reply) => {
                        let cleaned = strip_reply(&reply);
                        if !cleaned.is_empty() {
                            got = Some(cleaned);
                            break;
                        }
                        last = Some(AnnotateError::Transport("empty paraphrase".into()));
                    }
                    Err(e) if e.is_fatal() => {
                        return Err(ParaphraseError::Failed(e.to_string()))
                    }
                    Err(e) => last = Some(e),
                }
            }
            match got {
                Some(v) => variants.push(v),
                None => {
                    return Err(ParaphraseError::Failed(
                        last.map(|e| e.to_string()).unwrap_or_default(),
                    ))
                }
            }
        }
        Ok(variants)
    }

    fn name(&self) -> &str {
        "llm"
    }
}
