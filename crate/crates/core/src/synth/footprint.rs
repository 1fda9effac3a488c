use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spatial::Point;
use crate::waveform::{RejectReason, WaveformRecord};

/// Waveform synthesis settings. Lengths in m, intensities in digitiser counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WaveformSpec {
    pub bin_size: f64,
    pub n_bins: usize,
    /// Height of the ground return above the lowest bin.
    pub ground_offset: f64,
    pub background: f64,
    /// Ground-return amplitude; each footprint varies it by ±20%.
    pub peak: f64,
    /// Per-bin noise standard deviation as a fraction of the peak.
    pub noise_sd_frac: f64,
    /// Canopy height = `height_intercept + height_slope · AGB` (+ noise).
    pub height_intercept: f64,
    pub height_slope: f64,
    pub height_noise_sd: f64,
    pub canopy_amplitude_ratio: f64,
    /// Canopy return width = `canopy_sigma_min + canopy_sigma_frac · height`.
    pub canopy_sigma_min: f64,
    pub canopy_sigma_frac: f64,
    pub ground_sigma: f64,
    /// Ground elevation scatter around the DEM cell value.
    pub ground_noise_sd: f64,
    pub srtm_noise_sd: f64,
    /// Fraction of footprints given exactly one quality violation.
    pub violation_rate: f64,
    /// Noise fraction used for planted SNR violations.
    pub snr_violation_noise_frac: f64,
}

impl Default for WaveformSpec {
    fn default() -> Self {
        Self {
            bin_size: 0.5,
            n_bins: 240,
            ground_offset: 25.0,
            background: 40.0,
            peak: 200.0,
            noise_sd_frac: 0.02,
            height_intercept: 10.0,
            height_slope: 0.06,
            height_noise_sd: 2.0,
            canopy_amplitude_ratio: 0.6,
            canopy_sigma_min: 1.0,
            canopy_sigma_frac: 0.15,
            ground_sigma: 1.5,
            ground_noise_sd: 1.0,
            srtm_noise_sd: 2.0,
            violation_rate: 0.1,
            snr_violation_noise_frac: 1.0 / 9.0,
        }
    }
}

impl WaveformSpec {
    /// Noise-free canopy height for a biomass density.
    pub fn canopy_height(&self, agb: f64) -> f64 {
        self.height_intercept + self.height_slope * agb
    }

    pub fn validate(&self) -> Result<()> {
        let pos = [self.bin_size, self.peak, self.canopy_amplitude_ratio, self.canopy_sigma_min, self.ground_sigma];
        if pos.iter().any(|v| !(*v > 0.0)) || self.n_bins < crate::waveform::MIN_BINS {
            return Err(Error::Config("waveform bin size, peak, widths and bin count must be positive".into()));
        }
        let nonneg = [
            self.noise_sd_frac,
            self.height_noise_sd,
            self.ground_noise_sd,
            self.srtm_noise_sd,
            self.canopy_sigma_frac,
            self.background,
        ];
        if nonneg.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Config("waveform noise levels must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.violation_rate) {
            return Err(Error::Config("violation_rate must lie in [0, 1]".into()));
        }
        let window = self.bin_size * (self.n_bins - 1) as f64;
        if !(self.ground_offset > 0.0 && self.ground_offset < window) {
            return Err(Error::Config("ground_offset must lie inside the waveform window".into()));
        }
        Ok(())
    }
}

/// What was planted for one footprint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FootprintTruth {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub agb: f64,
    /// Canopy-to-ground return separation.
    pub canopy_height: f64,
    pub ground_elev: f64,
    pub violation: Option<RejectReason>,
}

/// Synthesises one two-return waveform (canopy over ground).
pub(crate) fn synthesize(
    id: String,
    loc: Point,
    agb: f64,
    dem_elev: f64,
    spec: &WaveformSpec,
    violation: Option<RejectReason>,
    rng: &mut impl Rng,
) -> (WaveformRecord, FootprintTruth) {
    let gauss = |sd: f64, rng: &mut _| if sd > 0.0 { Normal::new(0.0, sd).unwrap().sample(rng) } else { 0.0 };
    let height = (spec.canopy_height(agb) + gauss(spec.height_noise_sd, rng)).max(1.0);
    let ground = dem_elev + gauss(spec.ground_noise_sd, rng);
    let bs = spec.bin_size;
    let bottom = ground - spec.ground_offset - rng.random_range(0.0..bs);
    let top = bottom + (spec.n_bins - 1) as f64 * bs;
    let peak = spec.peak * rng.random_range(0.8..1.2);
    let canopy_amp = spec.canopy_amplitude_ratio * peak;
    let canopy_sigma = spec.canopy_sigma_min + spec.canopy_sigma_frac * height;
    let noise_frac = if violation == Some(RejectReason::Snr) { spec.snr_violation_noise_frac } else { spec.noise_sd_frac };
    let noise_sd = noise_frac * peak;
    let canopy = ground + height;
    let intensities = (0..spec.n_bins)
        .map(|i| {
            let z = top - i as f64 * bs;
            let g = peak * (-0.5 * ((z - ground) / spec.ground_sigma).powi(2)).exp();
            let c = canopy_amp * (-0.5 * ((z - canopy) / canopy_sigma).powi(2)).exp();
            (spec.background + g + c + gauss(noise_sd, rng)).max(0.0)
        })
        .collect();
    let mut srtm = ground + gauss(spec.srtm_noise_sd, rng);
    let (mut sat_ndx, mut cloud_flag) = (0, 15);
    match violation {
        Some(RejectReason::Cloud) => cloud_flag = rng.random_range(0..15),
        Some(RejectReason::Saturated) => sat_ndx = rng.random_range(1..=5),
        Some(RejectReason::ElevationMismatch) => {
            let off = rng.random_range(150.0..400.0);
            srtm += if rng.random_bool(0.5) { off } else { -off };
        }
        _ => {}
    }
    let rec = WaveformRecord {
        id: id.clone(),
        lon: loc.x,
        lat: loc.y,
        bin_top_elev: top,
        bin_size: bs,
        intensities,
        sat_ndx,
        cloud_flag,
        srtm_elev: srtm,
        acquired_at: None,
    };
    let truth = FootprintTruth { id, x: loc.x, y: loc.y, agb, canopy_height: height, ground_elev: ground, violation };
    (rec, truth)
}

pub fn write_footprint_truth(path: impl AsRef<Path>, rows: &[FootprintTruth]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["id", "x", "y", "agb", "canopy_height", "ground_elev", "violation"])?;
    for t in rows {
        w.write_record([
            t.id.clone(),
            t.x.to_string(),
            t.y.to_string(),
            t.agb.to_string(),
            t.canopy_height.to_string(),
            t.ground_elev.to_string(),
            t.violation.map_or(String::new(), |v| v.to_string()),
        ])?;
    }
    w.flush()?;
    Ok(())
}
