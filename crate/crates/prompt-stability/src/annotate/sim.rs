//! Seeded simulated annotator for offline verification.
//!
//! Each row gets a stable base label from a hash of its id; each call may
//! flip that label with a configurable probability. The flip decision is a
//! pure function of (seed, row id, full prompt, context id), so identical
//! calls always produce identical replies, including under concurrency.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AnnotateError, AnnotationRequest, Annotator, OutputSchema};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    /// Flip the base label with fixed probability.
    Flip { probability: f64 },
    /// Flip probability grows with the normalized edit distance between the
    /// call's full prompt and a reference prompt, times `scale` (clamped to 1).
    DistanceProportional { reference: String, scale: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedAnnotatorConfig {
    pub seed: u64,
    pub schema: OutputSchema,
    pub noise: NoiseModel,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
}

fn default_parallelism() -> usize {
    8
}

pub struct SimulatedAnnotator {
    cfg: SimulatedAnnotatorConfig,
}

impl SimulatedAnnotator {
    pub fn new(cfg: SimulatedAnnotatorConfig) -> Result<Self, AnnotateError> {
        cfg.schema.validate()?;
        let p = match &cfg.noise {
            NoiseModel::Flip { probability } => *probability,
            NoiseModel::DistanceProportional { scale, .. } => *scale,
        };
        if !(0.0..=f64::INFINITY).contains(&p) {
            return Err(AnnotateError::BadSchema(
                "noise probability must be non-negative".into(),
            ));
        }
        if let NoiseModel::Flip { probability } = cfg.noise {
            if probability > 1.0 {
                return Err(AnnotateError::BadSchema(
                    "flip probability must not exceed 1".into(),
                ));
            }
        }
        Ok(Self { cfg })
    }

    pub fn config(&self) -> &SimulatedAnnotatorConfig {
        &self.cfg
    }

    fn labels(&self) -> Vec<String> {
        match &self.cfg.schema {
            OutputSchema::Categorical { allowed } => allowed.clone(),
            OutputSchema::IntegerRange { low, high } => {
                (*low..=*high).map(|v| v.to_string()).collect()
            }
        }
    }

    fn flip_probability(&self, full_prompt: &str) -> f64 {
        match &self.cfg.noise {
            NoiseModel::Flip { probability } => *probability,
            NoiseModel::DistanceProportional { reference, scale } => {
                (scale * normalized_edit_distance(reference, full_prompt)).clamp(0.0, 1.0)
            }
        }
    }
}

impl Annotator for SimulatedAnnotator {
    fn annotate(&self, req: &AnnotationRequest) -> Result<String, AnnotateError> {
        let labels = self.labels();
        let base = (stable_hash(&[b"base", req.row_id.as_bytes()]) % labels.len() as u64) as usize;

        let call_seed = stable_hash(&[
            b"call",
            &self.cfg.seed.to_le_bytes(),
            req.row_id.as_bytes(),
            req.full_prompt.as_bytes(),
            req.context_id.as_bytes(),
        ]);
        let mut rng = ChaCha8Rng::seed_from_u64(call_seed);
        let p = self.flip_probability(req.full_prompt);
        let idx = if labels.len() > 1 && rng.random::<f64>() < p {
            // Perturb to a uniformly chosen different label.
            let shift = rng.random_range(1..labels.len());
            (base + shift) % labels.len()
        } else {
            base
        };
        Ok(labels[idx].clone())
    }

    fn name(&self) -> &str {
        "sim"
    }

    fn max_parallelism(&self) -> usize {
        self.cfg.parallelism
    }
}

/// FNV-1a over length-delimited parts. Stable across builds and platforms.
fn stable_hash(parts: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    let mut eat = |byte: u8| {
        h ^= byte as u64;
        h = h.wrapping_mul(0x100000001b3);
    };
    for part in parts {
        for b in (part.len() as u64).to_le_bytes() {
            eat(b);
        }
        for &b in *part {
            eat(b);
        }
    }
    h
}

/// Levenshtein distance divided by the longer length; 0 for equal strings.
pub fn normalized_edit_distance(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let max_len = a.len().max(b.len());
    if max_len == 0 {
        return 0.0;
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let cost = usize::from(ca != cb);
            cur[j + 1] = (prev[j] + cost).min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()] as f64 / max_len as f64
}
