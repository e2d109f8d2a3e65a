//! Bootstrap confidence intervals for alpha.
//!
//! Resampling is over units (data rows), never coders: coders are the design
//! factor under study. Each resample draws the unit axis with replacement,
//! recomputes alpha, and the interval comes from the distribution of resampled
//! alphas. The per-resample RNG stream is derived from `(seed, resample
//! index)`, so evaluating resamples in parallel cannot change the result.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::reliability::{PreparedTable, ReliabilityError, ReliabilityTable};

/// Name of the generator backing resample streams, recorded in run manifests.
pub const RNG_ALGORITHM: &str = "ChaCha8";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiMethod {
    /// Empirical quantiles of the bootstrap distribution.
    Percentile,
    /// Mean plus or minus z times the bootstrap standard deviation.
    NormalApprox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub samples: usize,
    pub confidence: f64,
    pub method: CiMethod,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            samples: 1000,
            confidence: 0.95,
            method: CiMethod::Percentile,
            seed: 0,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<(), ResamplingError> {
        if self.samples < 2 {
            return Err(ResamplingError::BadConfig(
                "bootstrap samples must be at least 2".into(),
            ));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(ResamplingError::BadConfig(
                "confidence must lie strictly between 0 and 1".into(),
            ));
        }
        Ok(())
    }
}

/// Point estimate plus bootstrap interval for one alpha computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaEstimate {
    pub mean_alpha: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    /// Resamples that produced an alpha.
    pub samples_used: usize,
    /// Resamples skipped because alpha was undefined on them.
    pub degenerate_samples: usize,
}

#[derive(Debug, Error, PartialEq)]
pub enum ResamplingError {
    #[error("bootstrap requires at least 2 pairable units, found {0}")]
    TooFewUnits(usize),
    #[error("every bootstrap resample was degenerate")]
    AllSamplesDegenerate,
    #[error("empty sequence has no quantiles")]
    EmptySequence,
    #[error("invalid bootstrap configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Reliability(#[from] ReliabilityError),
}

/// Linear-interpolation quantile over an ascending slice (position `q*(n-1)`).
pub fn quantile(sorted_values: &[f64], q: f64) -> Result<f64, ResamplingError> {
    if sorted_values.is_empty() {
        return Err(ResamplingError::EmptySequence);
    }
    let q = q.clamp(0.0, 1.0);
    let pos = q * (sorted_values.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Ok(sorted_values[lo] + (sorted_values[hi] - sorted_values[lo]) * frac)
}

fn resample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut bytes = [0u8; 32];
    bytes[..8].copy_from_slice(&seed.to_le_bytes());
    bytes[8..16].copy_from_slice(&(index as u64).to_le_bytes());
    ChaCha8Rng::from_seed(bytes)
}

/// Bootstrap estimate of alpha for the table.
///
/// Draws `cfg.samples` unit-axis resamples with replacement, computes alpha on
/// each, and skips resamples on which alpha is undefined (counted as
/// degenerate). Deterministic given `cfg.seed` regardless of thread count.
pub fn bootstrap_alpha(
    table: &ReliabilityTable,
    cfg: &BootstrapConfig,
) -> Result<AlphaEstimate, ResamplingError> {
    cfg.validate()?;
    let pairable = table.pairable_units();
    if pairable < 2 {
        return Err(ResamplingError::TooFewUnits(pairable));
    }
    let prepared = PreparedTable::build(table)?;
    let n_units = table.units().len();

    let alphas: Vec<Option<f64>> = (0..cfg.samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = resample_rng(cfg.seed, i);
            let indices: Vec<usize> = (0..n_units).map(|_| rng.random_range(0..n_units)).collect();
            prepared.alpha_over(&indices)
        })
        .collect();

    let mut retained: Vec<f64> = alphas.iter().filter_map(|a| *a).collect();
    let degenerate = cfg.samples - retained.len();
    if retained.is_empty() {
        return Err(ResamplingError::AllSamplesDegenerate);
    }

    let mean = retained.iter().sum::<f64>() / retained.len() as f64;
    let (lower, upper) = match cfg.method {
        CiMethod::Percentile => {
            retained.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let tail = (1.0 - cfg.confidence) / 2.0;
            (
                quantile(&retained, tail)?,
                quantile(&retained, 1.0 - tail)?,
            )
        }
        CiMethod::NormalApprox => {
            let var = retained.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>()
                / retained.len() as f64;
            let sd = var.sqrt();
            let z = Normal::standard().inverse_cdf(0.5 + cfg.confidence / 2.0);
            (mean - z * sd, mean + z * sd)
        }
    };

    Ok(AlphaEstimate {
        mean_alpha: mean,
        ci_lower: lower,
        ci_upper: upper,
        samples_used: retained.len(),
        degenerate_samples: degenerate,
    })
}
