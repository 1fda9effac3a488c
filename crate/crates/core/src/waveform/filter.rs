use std::fmt;

use serde::{Deserialize, Serialize};

use super::{SignalBounds, WaveformRecord};
use crate::error::{Error, Result};

/// Reliability thresholds for waveform screening.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QualityThresholds {
    pub min_snr: f64,
    /// The only cloud-flag value accepted as cloud free.
    pub cloud_free_flag: i32,
    /// Largest tolerated |SRTM − waveform centroid| in m.
    pub max_elev_gap: f64,
}

impl Default for QualityThresholds {
    fn default() -> Self {
        Self { min_snr: 15.0, cloud_free_flag: 15, max_elev_gap: 100.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RejectReason {
    NoSignal,
    DegenerateNoise,
    Snr,
    Cloud,
    Saturated,
    ElevationMismatch,
    FitFailure,
}

impl RejectReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            RejectReason::NoSignal => "NoSignal",
            RejectReason::DegenerateNoise => "DegenerateNoise",
            RejectReason::Snr => "SNR",
            RejectReason::Cloud => "Cloud",
            RejectReason::Saturated => "Saturated",
            RejectReason::ElevationMismatch => "ElevationMismatch",
            RejectReason::FitFailure => "FitFailure",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterDecision {
    Keep,
    Reject(RejectReason),
}

impl FilterDecision {
    pub fn is_keep(&self) -> bool {
        matches!(self, FilterDecision::Keep)
    }
}

/// Energy-weighted mean elevation of the noise-subtracted signal.
pub fn centroid_elev(w: &WaveformRecord, b: &SignalBounds) -> f64 {
    let (mut se, mut s) = (0.0, 0.0);
    for i in b.begin_bin..=b.end_bin {
        let e = (w.intensities[i] - b.noise.mean).max(0.0);
        se += e * w.elev(i);
        s += e;
    }
    if s > 0.0 {
        se / s
    } else {
        0.5 * (b.begin_elev + b.end_elev)
    }
}

/// Screens one waveform; the first failed rule is reported, checked in the
/// order SNR, cloud flag, saturation, SRTM elevation gap.
pub fn quality_filter(w: &WaveformRecord, bounds: &Result<SignalBounds>, t: &QualityThresholds) -> FilterDecision {
    let b = match bounds {
        Ok(b) => b,
        Err(Error::DegenerateNoise) => return FilterDecision::Reject(RejectReason::DegenerateNoise),
        Err(_) => return FilterDecision::Reject(RejectReason::NoSignal),
    };
    if !(b.noise.snr >= t.min_snr) {
        return FilterDecision::Reject(RejectReason::Snr);
    }
    if w.cloud_flag != t.cloud_free_flag {
        return FilterDecision::Reject(RejectReason::Cloud);
    }
    if w.sat_ndx > 0 {
        return FilterDecision::Reject(RejectReason::Saturated);
    }
    if (w.srtm_elev - centroid_elev(w, b)).abs() > t.max_elev_gap {
        return FilterDecision::Reject(RejectReason::ElevationMismatch);
    }
    FilterDecision::Keep
}
