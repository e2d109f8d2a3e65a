//! Annotation backends and the machinery around them.
//!
//! An [`Annotator`] maps (row, full prompt) to a raw text reply. The reply is
//! then parsed against an [`OutputSchema`] describing what the prompt's
//! postfix demands ("Respond 0 for Democrat, or 1 for Republican...").
//! [`annotate_with_retry`] wraps the two steps with exponential backoff, and
//! [`cache::CachedAnnotator`] memoizes cells so a resumed run issues no
//! backend calls for work already done.

mod cache;
mod client;
mod sim;

pub use cache::{parse_cache_line, prompt_hash, CacheRecord, CacheStore, CachedAnnotator};
pub use client::{chat_annotate, parse_chat_response, ChatClient, LlmClientConfig};
pub use sim::{normalized_edit_distance, NoiseModel, SimulatedAnnotator, SimulatedAnnotatorConfig};

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::reliability::LabelValue;

/// What the prompt instructs the model to reply with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OutputSchema {
    /// A fixed set of permitted tokens, e.g. {"0", "1"} or category codes.
    Categorical { allowed: Vec<String> },
    /// An integer in an inclusive range, e.g. 1..=10.
    IntegerRange { low: i64, high: i64 },
}

impl OutputSchema {
    pub fn validate(&self) -> Result<(), AnnotateError> {
        match self {
            OutputSchema::Categorical { allowed } if allowed.is_empty() => Err(
                AnnotateError::BadSchema("categorical schema needs at least one token".into()),
            ),
            OutputSchema::IntegerRange { low, high } if low > high => Err(
                AnnotateError::BadSchema(format!("empty integer range {low}..{high}")),
            ),
            _ => Ok(()),
        }
    }
}

/// One annotation call. `context_id` identifies the coder (iteration index or
/// prompt-variant id) so that the simulator and the cache can distinguish
/// calls that share the same text and prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationRequest<'a> {
    pub row_id: &'a str,
    pub text: &'a str,
    pub full_prompt: &'a str,
    pub context_id: &'a str,
}

pub trait Annotator: Send + Sync {
    fn annotate(&self, req: &AnnotationRequest) -> Result<String, AnnotateError>;
    fn name(&self) -> &str;
    fn max_parallelism(&self) -> usize {
        1
    }
}

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("rate limited{}", .retry_after.map(|d| format!(" (retry after {d:?})")).unwrap_or_default())]
    RateLimited { retry_after: Option<Duration> },
    #[error("authentication failed: {0}")]
    AuthFailed(String),
    #[error("backend reply did not match the output schema: {raw:?}")]
    UnparseableOutput { raw: String },
    #[error("invalid output schema: {0}")]
    BadSchema(String),
    #[error("cache record at {path}:{line} is corrupt: {message}")]
    CacheCorrupt {
        path: String,
        line: usize,
        message: String,
    },
    #[error("cache io: {0}")]
    CacheIo(String),
}

impl AnnotateError {
    /// Fatal errors abort immediately instead of being retried.
    pub fn is_fatal(&self) -> bool {
        matches!(
            self,
            AnnotateError::AuthFailed(_)
                | AnnotateError::BadSchema(_)
                | AnnotateError::CacheCorrupt { .. }
        )
    }
}

/// A cell that could not be annotated after retries; becomes a missing entry
/// in the reliability table.
#[derive(Debug, Error)]
#[error("annotation failed after {attempts} attempt(s): {last_error}")]
pub struct AnnotationFailed {
    pub attempts: u32,
    pub last_error: AnnotateError,
}

/// Parses a raw backend reply against the schema: trims whitespace and
/// surrounding punctuation, then requires exact token membership
/// (categorical) or an in-range integer (integer range).
pub fn parse_label(raw: &str, schema: &OutputSchema) -> Result<LabelValue, AnnotateError> {
    let cleaned = raw
        .trim()
        .trim_matches(|c: char| c.is_ascii_punctuation() && c != '-')
        .trim();
    match schema {
        OutputSchema::Categorical { allowed } => {
            if allowed.iter().any(|t| t == cleaned) {
                Ok(LabelValue {
                    raw: cleaned.to_string(),
                    numeric: None,
                })
            } else {
                Err(AnnotateError::UnparseableOutput {
                    raw: raw.to_string(),
                })
            }
        }
        OutputSchema::IntegerRange { low, high } => match cleaned.parse::<i64>() {
            Ok(v) if (*low..=*high).contains(&v) => Ok(LabelValue {
                raw: v.to_string(),
                numeric: Some(v as f64),
            }),
            _ => Err(AnnotateError::UnparseableOutput {
                raw: raw.to_string(),
            }),
        },
    }
}

/// Backoff schedule for retried annotation calls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            initial_delay: Duration::from_millis(500),
        }
    }
}

impl RetryPolicy {
    fn delay(&self, attempt: u32) -> Duration {
        self.initial_delay * 2u32.saturating_pow(attempt)
    }
}

/// Calls the annotator and parses the reply, retrying unparseable output and
/// transient transport errors with exponential backoff. Fatal errors (auth)
/// abort immediately. Returns the raw reply alongside the parsed label.
pub fn annotate_with_retry(
    annotator: &dyn Annotator,
    req: &AnnotationRequest,
    schema: &OutputSchema,
    policy: &RetryPolicy,
) -> Result<(String, LabelValue), AnnotationFailed> {
    let mut last_error = None;
    for attempt in 0..=policy.max_retries {
        if attempt > 0 {
            let mut delay = policy.delay(attempt - 1);
            if let Some(AnnotateError::RateLimited {
                retry_after: Some(server),
            }) = &last_error
            {
                delay = delay.max(*server);
            }
            std::thread::sleep(delay);
        }
        match annotator.annotate(req).and_then(|raw| {
            let label = parse_label(&raw, schema)?;
            Ok((raw, label))
        }) {
            Ok(result) => return Ok(result),
            Err(e) if e.is_fatal() => {
                return Err(AnnotationFailed {
                    attempts: attempt + 1,
                    last_error: e,
                })
            }
            Err(e) => last_error = Some(e),
        }
    }
    Err(AnnotationFailed {
        attempts: policy.max_retries + 1,
        last_error: last_error.expect("at least one attempt"),
    })
}
