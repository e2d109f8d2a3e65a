//! Krippendorff's Alpha via the coincidence-matrix formulation.
//!
//! Alpha is `1 - D_o / D_e`: observed disagreement over the disagreement
//! expected by chance. Both terms are read off a symmetric category-by-category
//! coincidence matrix in which every unit with `m >= 2` ratings contributes
//! each ordered pair of its ratings with weight `1 / (m - 1)`. Units with a
//! single rating carry no pairable information and are excluded, which is the
//! standard missing-data treatment.
//!
//! Two metric scales are supported: nominal (all distinct categories equally
//! distant) and interval (squared numeric difference).

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Distance metric governing how label disagreement is weighted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    /// All distinct categories are equally distant: d = 0 if equal, 1 otherwise.
    Nominal,
    /// Labels are numeric; d is the squared difference between values.
    Interval,
}

/// A single label as produced by a coder.
///
/// `numeric` is populated only under the interval scale, where it holds the
/// parsed value of `raw`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelValue {
    pub raw: String,
    pub numeric: Option<f64>,
}

#[derive(Debug, Error, PartialEq)]
pub enum ReliabilityError {
    #[error("no unit has two or more ratings; alpha is undefined")]
    NoPairableUnits,
    #[error("interval scale requires numeric labels: unit {unit:?}, coder {coder:?}, label {raw:?}")]
    NonNumericLabel {
        unit: String,
        coder: String,
        raw: String,
    },
    #[error("label is empty after trimming: unit {unit:?}, coder {coder:?}")]
    EmptyLabel { unit: String, coder: String },
}

/// Units-by-coders label matrix with missing entries allowed.
///
/// Units and coders are registered in insertion order; cells are set through
/// [`ReliabilityTable::set`], which auto-registers unseen ids.
#[derive(Debug, Clone)]
pub struct ReliabilityTable {
    scale: Scale,
    units: Vec<String>,
    coders: Vec<String>,
    unit_index: HashMap<String, usize>,
    coder_index: HashMap<String, usize>,
    cells: HashMap<(usize, usize), String>,
}

impl ReliabilityTable {
    pub fn new(scale: Scale) -> Self {
        Self {
            scale,
            units: Vec::new(),
            coders: Vec::new(),
            unit_index: HashMap::new(),
            coder_index: HashMap::new(),
            cells: HashMap::new(),
        }
    }

    pub fn scale(&self) -> Scale {
        self.scale
    }

    pub fn units(&self) -> &[String] {
        &self.units
    }

    pub fn coders(&self) -> &[String] {
        &self.coders
    }

    /// Registers a unit id (no-op if already present) and returns its index.
    pub fn add_unit(&mut self, unit: &str) -> usize {
        if let Some(&i) = self.unit_index.get(unit) {
            return i;
        }
        let i = self.units.len();
        self.units.push(unit.to_string());
        self.unit_index.insert(unit.to_string(), i);
        i
    }

    /// Registers a coder id (no-op if already present) and returns its index.
    pub fn add_coder(&mut self, coder: &str) -> usize {
        if let Some(&i) = self.coder_index.get(coder) {
            return i;
        }
        let i = self.coders.len();
        self.coders.push(coder.to_string());
        self.coder_index.insert(coder.to_string(), i);
        i
    }

    /// Sets the label a coder gave a unit. Unknown unit/coder ids are
    /// registered on first use; a repeated (unit, coder) pair overwrites.
    ///
    /// Fails if the label is empty after trimming.
    pub fn set(&mut self, unit: &str, coder: &str, raw: &str) -> Result<(), ReliabilityError> {
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            return Err(ReliabilityError::EmptyLabel {
                unit: unit.to_string(),
                coder: coder.to_string(),
            });
        }
        let u = self.add_unit(unit);
        let c = self.add_coder(coder);
        self.cells.insert((u, c), trimmed.to_string());
        Ok(())
    }

    pub fn get(&self, unit: &str, coder: &str) -> Option<&str> {
        let u = *self.unit_index.get(unit)?;
        let c = *self.coder_index.get(coder)?;
        self.cells.get(&(u, c)).map(|s| s.as_str())
    }

    /// Raw labels of one unit, in coder order.
    pub fn unit_labels(&self, unit_idx: usize) -> Vec<(usize, &str)> {
        (0..self.coders.len())
            .filter_map(|c| self.cells.get(&(unit_idx, c)).map(|s| (c, s.as_str())))
            .collect()
    }

    /// Number of units carrying at least two ratings.
    pub fn pairable_units(&self) -> usize {
        (0..self.units.len())
            .filter(|&u| {
                (0..self.coders.len())
                    .filter(|&c| self.cells.contains_key(&(u, c)))
                    .count()
                    >= 2
            })
            .count()
    }

    /// A table over the same coders whose units are the given indices of this
    /// table, in order. Indices may repeat (bootstrap resampling); repeated
    /// units become distinct units in the result.
    pub fn select_units(&self, indices: &[usize]) -> ReliabilityTable {
        let mut out = ReliabilityTable::new(self.scale);
        for coder in &self.coders {
            out.add_coder(coder);
        }
        for (pos, &u) in indices.iter().enumerate() {
            let name = format!("r{pos}");
            let ui = out.add_unit(&name);
            for c in 0..self.coders.len() {
                if let Some(v) = self.cells.get(&(u, c)) {
                    out.cells.insert((ui, c), v.clone());
                }
            }
        }
        out
    }

    /// A table over the same units restricted to the first `n` coders.
    pub fn first_coders(&self, n: usize) -> ReliabilityTable {
        let n = n.min(self.coders.len());
        let mut out = ReliabilityTable::new(self.scale);
        for coder in &self.coders[..n] {
            out.add_coder(coder);
        }
        for unit in &self.units {
            out.add_unit(unit);
        }
        for (&(u, c), v) in &self.cells {
            if c < n {
                out.cells.insert((u, c), v.clone());
            }
        }
        out
    }
}

/// Symmetric tally of within-unit rating pairs.
#[derive(Debug, Clone)]
pub struct CoincidenceMatrix {
    /// Distinct categories, in first-appearance order.
    pub categories: Vec<LabelValue>,
    /// `counts[k][l]`: weighted number of (k, l) ordered pairs.
    pub counts: Vec<Vec<f64>>,
    /// Per-category totals `n_k` (row sums).
    pub marginals: Vec<f64>,
    /// Grand total: the number of pairable values.
    pub total: f64,
}

impl CoincidenceMatrix {
    fn distance(&self, scale: Scale, k: usize, l: usize) -> f64 {
        match scale {
            Scale::Nominal => {
                if k == l {
                    0.0
                } else {
                    1.0
                }
            }
            Scale::Interval => {
                let a = self.categories[k].numeric.expect("interval category");
                let b = self.categories[l].numeric.expect("interval category");
                (a - b) * (a - b)
            }
        }
    }
}

/// Per-unit category assignments against a shared category set. Built once so
/// that bootstrap resamples can re-accumulate coincidences cheaply.
#[derive(Debug, Clone)]
pub(crate) struct PreparedTable {
    pub scale: Scale,
    pub categories: Vec<LabelValue>,
    /// For each unit of the source table, the category index of every filled
    /// cell. Units with fewer than two entries contribute nothing to alpha.
    pub unit_values: Vec<Vec<usize>>,
}

impl PreparedTable {
    pub fn build(table: &ReliabilityTable) -> Result<Self, ReliabilityError> {
        let mut categories: Vec<LabelValue> = Vec::new();
        let mut nominal_keys: HashMap<String, usize> = HashMap::new();
        let mut interval_keys: HashMap<u64, usize> = HashMap::new();
        let mut unit_values = Vec::with_capacity(table.units.len());

        for u in 0..table.units.len() {
            let labels = table.unit_labels(u);
            if labels.len() < 2 {
                unit_values.push(Vec::new());
                continue;
            }
            let mut vals = Vec::with_capacity(labels.len());
            for (c, raw) in labels {
                let idx = match table.scale {
                    // Nominal category identity: exact trimmed token.
                    Scale::Nominal => *nominal_keys.entry(raw.to_string()).or_insert_with(|| {
                        categories.push(LabelValue {
                            raw: raw.to_string(),
                            numeric: None,
                        });
                        categories.len() - 1
                    }),
                    // Interval category identity: numeric equality, so "1"
                    // and "1.0" collapse to one category.
                    Scale::Interval => {
                        let value: f64 = raw.parse().map_err(|_| {
                            ReliabilityError::NonNumericLabel {
                                unit: table.units[u].clone(),
                                coder: table.coders[c].clone(),
                                raw: raw.to_string(),
                            }
                        })?;
                        let key = (value + 0.0).to_bits();
                        *interval_keys.entry(key).or_insert_with(|| {
                            categories.push(LabelValue {
                                raw: raw.to_string(),
                                numeric: Some(value),
                            });
                            categories.len() - 1
                        })
                    }
                };
                vals.push(idx);
            }
            unit_values.push(vals);
        }

        if unit_values.iter().all(|v| v.len() < 2) {
            return Err(ReliabilityError::NoPairableUnits);
        }
        Ok(Self {
            scale: table.scale,
            categories,
            unit_values,
        })
    }

    /// Accumulates the coincidence matrix over the given unit indices
    /// (indices may repeat). Returns `None` if no selected unit is pairable.
    pub fn coincidence_over(&self, unit_indices: &[usize]) -> Option<CoincidenceMatrix> {
        let k = self.categories.len();
        let mut counts = vec![vec![0.0; k]; k];
        let mut any = false;
        for &u in unit_indices {
            let vals = &self.unit_values[u];
            let m = vals.len();
            if m < 2 {
                continue;
            }
            any = true;
            let w = 1.0 / (m as f64 - 1.0);
            for (i, &a) in vals.iter().enumerate() {
                for (j, &b) in vals.iter().enumerate() {
                    if i != j {
                        counts[a][b] += w;
                    }
                }
            }
        }
        if !any {
            return None;
        }
        let marginals: Vec<f64> = counts.iter().map(|row| row.iter().sum()).collect();
        let total = marginals.iter().sum();
        Some(CoincidenceMatrix {
            categories: self.categories.clone(),
            counts,
            marginals,
            total,
        })
    }

    /// Alpha over the given unit selection; `None` when no pairable units.
    pub fn alpha_over(&self, unit_indices: &[usize]) -> Option<f64> {
        let m = self.coincidence_over(unit_indices)?;
        Some(alpha_from_coincidence(&m, self.scale))
    }

    pub fn all_units(&self) -> Vec<usize> {
        (0..self.unit_values.len()).collect()
    }
}

fn alpha_from_coincidence(m: &CoincidenceMatrix, scale: Scale) -> f64 {
    let k = m.categories.len();
    let n = m.total;
    let mut observed = 0.0;
    let mut expected = 0.0;
    for a in 0..k {
        for b in 0..k {
            let d = m.distance(scale, a, b);
            observed += m.counts[a][b] * d;
            expected += m.marginals[a] * m.marginals[b] * d;
        }
    }
    let d_o = observed / n;
    let d_e = expected / (n * (n - 1.0));
    if d_e == 0.0 {
        // All pairable values identical: unanimous data, maximal reliability.
        return 1.0;
    }
    1.0 - d_o / d_e
}

/// Builds the coincidence matrix for a table.
///
/// Every unit with `m >= 2` ratings contributes each ordered pair of its
/// ratings with weight `1 / (m - 1)`; single-rating units are skipped.
pub fn build_coincidence(table: &ReliabilityTable) -> Result<CoincidenceMatrix, ReliabilityError> {
    let prepared = PreparedTable::build(table)?;
    prepared
        .coincidence_over(&prepared.all_units())
        .ok_or(ReliabilityError::NoPairableUnits)
}

/// Krippendorff's Alpha for the table. `1.0` when expected disagreement is
/// zero (all pairable values identical).
pub fn alpha(table: &ReliabilityTable) -> Result<f64, ReliabilityError> {
    let prepared = PreparedTable::build(table)?;
    prepared
        .alpha_over(&prepared.all_units())
        .ok_or(ReliabilityError::NoPairableUnits)
}
