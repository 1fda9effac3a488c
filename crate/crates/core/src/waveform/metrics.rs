use serde::{Deserialize, Serialize};

use super::{GaussianComponent, SignalBounds, WaveformRecord};
use crate::error::{Error, Result};
use crate::raster::{plane_slope, Grid};

/// Names of the per-footprint predictors, in [`WaveformMetrics::features`] order.
pub const METRIC_NAMES: [&str; 15] = [
    "wext", "h10", "h20", "h30", "h40", "h50", "h60", "h70", "h80", "h90", "ti", "slope", "tch", "lead",
    "trail",
];

/// Canopy-structure descriptors of one waveform (all lengths in m).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveformMetrics {
    pub wext: f64,
    pub tch: f64,
    pub lead: f64,
    pub trail: f64,
    /// Depths below the signal beginning reaching 10%, 20%, …, 90% of the energy.
    pub h: [f64; 9],
    /// Terrain elevation range over the 3×3 DEM patch.
    pub ti: f64,
    /// Terrain slope in degrees.
    pub slope: f64,
    pub begin_elev: f64,
    pub end_elev: f64,
    pub ground_elev: f64,
}

impl WaveformMetrics {
    pub fn features(&self) -> [f64; 15] {
        let h = &self.h;
        [
            self.wext, h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8], self.ti, self.slope, self.tch,
            self.lead, self.trail,
        ]
    }

    pub fn feature(&self, name: &str) -> Option<f64> {
        METRIC_NAMES.iter().position(|n| *n == name).map(|i| self.features()[i])
    }

    pub fn is_finite(&self) -> bool {
        self.features().iter().all(|v| v.is_finite())
            && self.begin_elev.is_finite()
            && self.end_elev.is_finite()
            && self.ground_elev.is_finite()
    }
}

/// 3×3 elevations around a footprint (row 0 north) and their spacing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemPatch {
    pub elev: [[f64; 3]; 3],
    pub cellsize: f64,
}

impl DemPatch {
    pub fn flat(elev: f64, cellsize: f64) -> Self {
        Self { elev: [[elev; 3]; 3], cellsize }
    }

    /// Patch around the DEM cell containing `(x, y)`; missing neighbours copy
    /// the centre. `None` when the centre cell is outside or nodata.
    pub fn from_grid(dem: &Grid, x: f64, y: f64) -> Option<Self> {
        let (r, c) = dem.cell_of(crate::spatial::Point::new(x, y))?;
        let p = dem.patch3(r, c);
        let z0 = p[1][1]?;
        let mut elev = [[z0; 3]; 3];
        for (i, line) in p.iter().enumerate() {
            for (j, v) in line.iter().enumerate() {
                elev[i][j] = v.unwrap_or(z0);
            }
        }
        Some(Self { elev, cellsize: dem.cellsize() })
    }

    pub fn range(&self) -> f64 {
        let it = self.elev.iter().flatten();
        let hi = it.clone().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = it.copied().fold(f64::INFINITY, f64::min);
        hi - lo
    }
}

/// The stronger of the two lowest components; the lower one wins a tie.
///
/// `components` must be ordered by centre elevation, highest first.
pub fn identify_ground_peak(components: &[GaussianComponent]) -> Result<GaussianComponent> {
    match components {
        [] => Err(Error::NoComponents),
        [only] => Ok(*only),
        [.., upper, lowest] => Ok(if upper.amplitude > lowest.amplitude { *upper } else { *lowest }),
    }
}

/// Depths below `begin_elev` at which cumulative noise-subtracted energy
/// reaches 10%..90%. Each bin's energy spreads evenly over its bin width.
pub fn energy_quantiles(w: &WaveformRecord, bounds: &SignalBounds) -> [f64; 9] {
    let bs = w.bin_size;
    let energy: Vec<f64> = (bounds.begin_bin..=bounds.end_bin)
        .map(|i| (w.intensities[i] - bounds.noise.mean).max(0.0))
        .collect();
    let total: f64 = energy.iter().sum();
    let wext = bounds.wext();
    let mut out = [0.0; 9];
    if total <= 0.0 {
        return out;
    }
    let mut cum = 0.0;
    let mut k = 0;
    for (j, e) in energy.iter().enumerate() {
        let next = cum + e;
        while k < 9 && next >= total * (k as f64 + 1.0) / 10.0 {
            let target = total * (k as f64 + 1.0) / 10.0;
            let frac = if *e > 0.0 { (target - cum) / e } else { 0.0 };
            let depth = j as f64 * bs - bs / 2.0 + frac * bs;
            out[k] = depth.clamp(0.0, wext);
            k += 1;
        }
        cum = next;
    }
    while k < 9 {
        out[k] = wext;
        k += 1;
    }
    out
}

/// Derives the canopy metrics of one footprint.
///
/// `components` must be ordered by centre elevation, highest first.
pub fn extract_metrics(
    w: &WaveformRecord,
    bounds: &SignalBounds,
    components: &[GaussianComponent],
    dem: &DemPatch,
) -> Result<WaveformMetrics> {
    let ground = identify_ground_peak(components)?;
    let top = components[0];
    let (begin, end) = (bounds.begin_elev, bounds.end_elev);
    let ground_elev = ground.center_elev.clamp(end, begin);
    Ok(WaveformMetrics {
        wext: begin - end,
        tch: top.center_elev - ground.center_elev,
        lead: (begin - top.center_elev).max(0.0),
        trail: (ground.center_elev - end).max(0.0),
        h: energy_quantiles(w, bounds),
        ti: dem.range(),
        slope: plane_slope(&dem.elev, dem.cellsize),
        begin_elev: begin,
        end_elev: end,
        ground_elev,
    })
}
