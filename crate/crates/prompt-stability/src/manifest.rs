//! Run manifest: everything needed to reproduce a run.
//!
//! With the simulated backend a manifest pins the run byte-for-byte: every
//! default is materialized, every seed recorded, and the RNG algorithm named
//! so the provenance of the resample streams is explicit. API keys never
//! appear here — only the name of the environment variable that held one.

use serde::{Deserialize, Serialize};

use crate::resampling::RNG_ALGORITHM;
use crate::stability::{InterRunConfig, IntraRunConfig, PromptSpec};
use crate::store::RunKind;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClampDisclosure {
    pub requested: f64,
    pub applied: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub run_id: String,
    pub kind: RunKind,
    pub rng_algorithm: String,
    pub prompt: PromptSpec,
    /// System/user message split used by the chat client (recorded because
    /// the wire layout is a convention of this tool).
    pub message_layout: String,
    pub data_path: String,
    pub annotator: serde_json::Value,
    pub paraphraser: Option<serde_json::Value>,
    pub schema: crate::annotate::OutputSchema,
    pub intra: Option<IntraRunConfig>,
    pub inter: Option<InterRunConfig>,
    /// Sweep-to-sampling temperature mappings for the LLM paraphrase path.
    pub clamp_disclosures: Vec<ClampDisclosure>,
}

impl RunManifest {
    pub fn tool_version() -> String {
        env!("CARGO_PKG_VERSION").to_string()
    }

    pub fn rng_algorithm() -> String {
        RNG_ALGORITHM.to_string()
    }
}
