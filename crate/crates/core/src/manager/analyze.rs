use serde::{Deserialize, Serialize};

use super::monitor::MetricWindow;
use super::KnowledgeBase;

/// Number of window means used by the trend forecast.
pub const TREND_POINTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SymptomKind {
    QosDegradationPredicted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Symptom {
    pub kind: SymptomKind,
    pub observed_mean: f64,
    pub forecast_mean: f64,
    pub threshold: f64,
    pub raised_at: f64,
}

/// Least-squares line through `(i, ys[i])`, returned as (intercept, slope).
fn fit_line(ys: &[f64]) -> (f64, f64) {
    let n = ys.len() as f64;
    let sx: f64 = (0..ys.len()).map(|i| i as f64).sum();
    let sxx: f64 = (0..ys.len()).map(|i| (i * i) as f64).sum();
    let sy: f64 = ys.iter().sum();
    let sxy: f64 = ys.iter().enumerate().map(|(i, y)| i as f64 * y).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    (intercept, slope)
}

/// Extrapolated window means for the next `horizon` windows, based on the
/// last [`TREND_POINTS`] means. Empty when fewer means are available.
pub fn forecast(means: &[f64], horizon: u32) -> Vec<f64> {
    if means.len() < TREND_POINTS {
        return Vec::new();
    }
    let recent = &means[means.len() - TREND_POINTS..];
    let (intercept, slope) = fit_line(recent);
    let last_x = (TREND_POINTS - 1) as f64;
    (1..=horizon).map(|h| intercept + slope * (last_x + h as f64)).collect()
}

/// Raises a degradation symptom when the latest window mean exceeds the
/// activation level, or when the trend of the last windows crosses the RTT
/// threshold within the forecast horizon. Windows without samples are
/// skipped; an empty latest window never triggers.
pub fn analyze(history: &[MetricWindow], kb: &KnowledgeBase) -> Option<Symptom> {
    let latest = history.last()?;
    let observed = latest.mean_rtt?;
    let means: Vec<f64> = history.iter().filter_map(|w| w.mean_rtt).collect();
    let predicted = forecast(&means, kb.forecast_horizon_windows);

    let activated = observed > kb.activation_fraction * kb.rtt_threshold_s;
    let trending = predicted.iter().any(|&m| m > kb.rtt_threshold_s);
    if !(activated || trending) {
        return None;
    }
    Some(Symptom {
        kind: SymptomKind::QosDegradationPredicted,
        observed_mean: observed,
        forecast_mean: predicted.iter().copied().fold(observed, f64::max),
        threshold: kb.rtt_threshold_s,
        raised_at: latest.end,
    })
}
