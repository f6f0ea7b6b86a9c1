//! Flags loss traces that keep bouncing instead of settling.

use serde::{Deserialize, Serialize};

use super::LossRecord;

/// Thresholds for [`detect_oscillation`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillationTest {
    /// Fraction of the trace, taken from the end, that is inspected.
    pub tail_fraction: f64,
    /// Residual spread about the tail's linear trend, relative to its mean,
    /// above which the tail counts as unsettled.
    pub max_cv: f64,
    /// Minimum share of tail steps that increase the loss.
    pub min_rise_share: f64,
    pub min_len: usize,
}

impl Default for OscillationTest {
    fn default() -> Self {
        Self {
            tail_fraction: 0.5,
            max_cv: 2e-4,
            min_rise_share: 0.25,
            min_len: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillationReport {
    pub oscillating: bool,
    /// Detrended standard deviation over mean of the tail.
    pub tail_cv: f64,
    pub rise_share: f64,
}

/// Variance test on the trace tail. The linear trend is removed first so a
/// steady descent does not count as spread, and a run must also rise often
/// to be flagged.
pub fn detect_oscillation(trace: &[LossRecord], test: &OscillationTest) -> OscillationReport {
    let quiet = OscillationReport {
        oscillating: false,
        tail_cv: 0.0,
        rise_share: 0.0,
    };
    if trace.len() < test.min_len.max(3) {
        return quiet;
    }
    let k = ((trace.len() as f64 * test.tail_fraction).ceil() as usize).clamp(3, trace.len());
    let tail: Vec<f64> = trace[trace.len() - k..].iter().map(|r| r.value).collect();
    if tail.iter().any(|v| !v.is_finite()) {
        return OscillationReport {
            oscillating: true,
            tail_cv: f64::INFINITY,
            rise_share: 1.0,
        };
    }
    let n = k as f64;
    let mean = tail.iter().sum::<f64>() / n;
    let xm = (n - 1.0) / 2.0;
    let sxx: f64 = (0..k).map(|i| (i as f64 - xm).powi(2)).sum();
    let slope = tail.iter().enumerate().map(|(i, v)| (i as f64 - xm) * (v - mean)).sum::<f64>() / sxx;
    let var = tail
        .iter()
        .enumerate()
        .map(|(i, v)| (v - mean - slope * (i as f64 - xm)).powi(2))
        .sum::<f64>()
        / n;
    let tail_cv = if mean.abs() > 0.0 { var.sqrt() / mean.abs() } else { 0.0 };
    let rises = tail.windows(2).filter(|w| w[1] > w[0]).count();
    let rise_share = rises as f64 / (k - 1) as f64;
    OscillationReport {
        oscillating: tail_cv > test.max_cv && rise_share >= test.min_rise_share,
        tail_cv,
        rise_share,
    }
}
