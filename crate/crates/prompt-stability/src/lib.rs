//! Stability diagnostics for LLM-based text annotation.
//!
//! The central question this crate answers: if you ask a language model to
//! classify the same data again — with the identical prompt, or with a
//! semantically similar rewording — how much do the labels move?
//!
//! Agreement is measured with Krippendorff's Alpha, treating repeated
//! iterations (or prompt variants) as coders. Two routines drive the
//! analysis:
//!
//! * [`stability::run_intra`] — annotate the same rows repeatedly with one
//!   fixed prompt and score cumulative agreement after each iteration.
//! * [`stability::run_inter`] — sweep paraphrase "temperatures", annotate the
//!   rows under every prompt variant, and score agreement per temperature.
//!
//! Each score carries a bootstrap confidence interval ([`resampling`]), and
//! [`metrics`] condenses a whole series into summary numbers (weighted mean,
//! threshold crossings, area under the curve, variance).
//!
//! Annotation backends are pluggable ([`annotate::Annotator`]): an
//! OpenAI-compatible chat-completions client for real runs, and a seeded
//! simulator for offline verification. Paraphrase providers
//! ([`paraphrase::Paraphraser`]) follow the same pattern, including a
//! fixed-list replay provider for reproducible sweeps.

pub mod annotate;
pub mod cli;
pub mod manifest;
pub mod metrics;
pub mod paraphrase;
pub mod plot;
pub mod reliability;
pub mod resampling;
pub mod stability;
pub mod store;

pub use reliability::{alpha, ReliabilityTable, Scale};
pub use resampling::{bootstrap_alpha, AlphaEstimate, BootstrapConfig};
pub use stability::{PromptSpec, StabilitySeries};
