//! Summary metrics derived from a stability series.
//!
//! Four numbers condense a series of per-step alpha estimates: a weighted
//! mean emphasizing early iterations / low temperatures, the first point at
//! which the CI crosses the acceptability threshold, the area under the
//! alpha-versus-axis curve (trapezoidal, normalized by the axis range), and
//! the population variance of the point estimates.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stability::{Axis, StabilitySeries};

pub const DEFAULT_THRESHOLD: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdKind {
    /// First x at which the CI lower bound reaches the threshold (>=).
    LowerBoundExceeds,
    /// First x at which the CI upper bound falls below the threshold (<).
    UpperBoundDrops,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub weighted_mean: f64,
    /// The weighted mean divides by the weight sum so it stays on the alpha
    /// scale; recorded here because the convention is ours.
    pub weighted_mean_normalized: bool,
    pub threshold_kind: ThresholdKind,
    pub threshold_value: f64,
    /// Iteration count or temperature at which the threshold test fires;
    /// absent when it never does.
    pub threshold_x: Option<f64>,
    /// Trapezoidal area divided by the x-range; equals the constant for a
    /// constant series. Absent for single-point series.
    pub auc_pss: Option<f64>,
    /// Unnormalized trapezoidal area.
    pub auc_raw: Option<f64>,
    pub variance: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("series is empty")]
    EmptySeries,
    #[error("area under the curve needs at least two points")]
    SinglePoint,
    #[error("weighted mean requires every x to be positive")]
    NonPositiveAxis,
}

/// Inverse-x weighted mean of the point alphas, normalized by the weight sum.
pub fn weighted_mean(series: &StabilitySeries) -> Result<f64, MetricsError> {
    if series.points.is_empty() {
        return Err(MetricsError::EmptySeries);
    }
    if series.points.iter().any(|p| p.x <= 0.0) {
        return Err(MetricsError::NonPositiveAxis);
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for p in &series.points {
        let w = 1.0 / p.x;
        num += w * p.estimate.mean_alpha;
        den += w;
    }
    Ok(num / den)
}

/// Smallest x whose CI lower bound reaches `t`; `None` if never.
pub fn iteration_threshold(series: &StabilitySeries, t: f64) -> Option<f64> {
    series
        .points
        .iter()
        .find(|p| p.estimate.ci_lower >= t)
        .map(|p| p.x)
}

/// Smallest x whose CI upper bound falls strictly below `t`; `None` if never.
pub fn temperature_threshold(series: &StabilitySeries, t: f64) -> Option<f64> {
    series
        .points
        .iter()
        .find(|p| p.estimate.ci_upper < t)
        .map(|p| p.x)
}

/// Trapezoidal area under mean alpha versus x, normalized by the x-range.
pub fn auc_pss(series: &StabilitySeries) -> Result<f64, MetricsError> {
    Ok(auc_raw(series)? / (series.points.last().unwrap().x - series.points[0].x))
}

/// Unnormalized trapezoidal area.
pub fn auc_raw(series: &StabilitySeries) -> Result<f64, MetricsError> {
    if series.points.len() < 2 {
        return Err(MetricsError::SinglePoint);
    }
    let mut area = 0.0;
    for pair in series.points.windows(2) {
        let dx = pair[1].x - pair[0].x;
        area += dx * (pair[0].estimate.mean_alpha + pair[1].estimate.mean_alpha) / 2.0;
    }
    Ok(area)
}

/// Population variance of the point alphas (single point yields 0).
pub fn variance(series: &StabilitySeries) -> Result<f64, MetricsError> {
    if series.points.is_empty() {
        return Err(MetricsError::EmptySeries);
    }
    let n = series.points.len() as f64;
    let mean = series.points.iter().map(|p| p.estimate.mean_alpha).sum::<f64>() / n;
    Ok(series
        .points
        .iter()
        .map(|p| {
            let d = p.estimate.mean_alpha - mean;
            d * d
        })
        .sum::<f64>()
        / n)
}

/// The full metrics block for a series. The threshold operator follows the
/// series axis: iterations test the lower bound, temperatures the upper.
pub fn report(series: &StabilitySeries, threshold: f64) -> Result<MetricsReport, MetricsError> {
    let (kind, threshold_x) = match series.axis {
        Axis::Iteration => (
            ThresholdKind::LowerBoundExceeds,
            iteration_threshold(series, threshold),
        ),
        Axis::Temperature => (
            ThresholdKind::UpperBoundDrops,
            temperature_threshold(series, threshold),
        ),
    };
    let (auc_n, auc_r) = if series.points.len() >= 2 {
        (Some(auc_pss(series)?), Some(auc_raw(series)?))
    } else {
        (None, None)
    };
    Ok(MetricsReport {
        weighted_mean: weighted_mean(series)?,
        weighted_mean_normalized: true,
        threshold_kind: kind,
        threshold_value: threshold,
        threshold_x,
        auc_pss: auc_n,
        auc_raw: auc_r,
        variance: variance(series)?,
    })
}
