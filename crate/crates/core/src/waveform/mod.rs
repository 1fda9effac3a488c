//! Large-footprint waveform screening, decomposition and canopy metrics.

mod bounds;
mod decompose;
mod filter;
mod metrics;
mod record;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use bounds::{detect_signal_bounds, NoiseStats, SignalBounds, DEFAULT_THRESHOLD_K};
pub use decompose::{
    decompose_gaussians, Decomposition, GaussianComponent, DEFAULT_MAX_COMPONENTS, MAX_COMPONENTS_LIMIT,
};
pub use filter::{centroid_elev, quality_filter, FilterDecision, QualityThresholds, RejectReason};
pub use metrics::{energy_quantiles, extract_metrics, identify_ground_peak, DemPatch, WaveformMetrics, METRIC_NAMES};
pub use record::{read_waveforms, write_waveforms, WaveformRecord, MIN_BINS};

use crate::error::{Error, Result};
use crate::raster::Grid;
use crate::spatial::Point;

/// Settings for [`process_waveform`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WaveformConfig {
    pub threshold_k: f64,
    pub max_components: usize,
    pub quality: QualityThresholds,
}

impl Default for WaveformConfig {
    fn default() -> Self {
        Self {
            threshold_k: DEFAULT_THRESHOLD_K,
            max_components: DEFAULT_MAX_COMPONENTS,
            quality: QualityThresholds::default(),
        }
    }
}

/// Outcome for one footprint.
#[derive(Debug, Clone, PartialEq)]
pub struct FootprintResult {
    pub id: String,
    pub location: Point,
    pub decision: FilterDecision,
    pub snr: Option<f64>,
    pub n_components: usize,
    pub metrics: Option<WaveformMetrics>,
}

/// Kept footprint with its metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct FootprintMetrics {
    pub id: String,
    pub location: Point,
    pub metrics: WaveformMetrics,
}

/// Screens one waveform and, when kept, derives its metrics.
///
/// The DEM patch comes from the cell containing the footprint; without a DEM
/// (or outside it) the terrain is taken as flat at the SRTM elevation.
pub fn process_waveform(w: &WaveformRecord, dem: Option<&Grid>, cfg: &WaveformConfig) -> FootprintResult {
    let mut out = FootprintResult {
        id: w.id.clone(),
        location: w.location(),
        decision: FilterDecision::Reject(RejectReason::NoSignal),
        snr: None,
        n_components: 0,
        metrics: None,
    };
    if w.validate().is_err() {
        return out;
    }
    let bounds = detect_signal_bounds(w, cfg.threshold_k);
    out.snr = bounds.as_ref().ok().map(|b| b.noise.snr);
    out.decision = quality_filter(w, &bounds, &cfg.quality);
    let (FilterDecision::Keep, Ok(b)) = (out.decision, bounds) else {
        return out;
    };
    let patch = dem
        .and_then(|g| DemPatch::from_grid(g, w.lon, w.lat))
        .unwrap_or_else(|| DemPatch::flat(w.srtm_elev, dem.map_or(90.0, Grid::cellsize)));
    let metrics = decompose_gaussians(w, &b, cfg.max_components)
        .and_then(|d| {
            out.n_components = d.components.len();
            extract_metrics(w, &b, &d.components, &patch)
        })
        .ok()
        .filter(WaveformMetrics::is_finite);
    match metrics {
        Some(m) => out.metrics = Some(m),
        None => out.decision = FilterDecision::Reject(RejectReason::FitFailure),
    }
    out
}

/// Processes a batch in parallel; output order follows input order.
pub fn process_waveforms(ws: &[WaveformRecord], dem: Option<&Grid>, cfg: &WaveformConfig) -> Vec<FootprintResult> {
    ws.par_iter().map(|w| process_waveform(w, dem, cfg)).collect()
}

pub fn kept_metrics(results: &[FootprintResult]) -> Vec<FootprintMetrics> {
    results
        .iter()
        .filter_map(|r| {
            Some(FootprintMetrics { id: r.id.clone(), location: r.location, metrics: r.metrics? })
        })
        .collect()
}

const METRIC_HEADER_TAIL: [&str; 4] = ["begin_elev", "end_elev", "ground_elev", "reject_reason"];

/// One row per kept footprint: id, lon, lat, the metrics and an empty reason.
pub fn write_metrics_csv(path: impl AsRef<Path>, rows: &[FootprintMetrics]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["id", "lon", "lat"];
    header.extend(METRIC_NAMES);
    header.extend(METRIC_HEADER_TAIL);
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.id.clone(), r.location.x.to_string(), r.location.y.to_string()];
        rec.extend(r.metrics.features().iter().map(f64::to_string));
        rec.extend([r.metrics.begin_elev, r.metrics.end_elev, r.metrics.ground_elev].iter().map(f64::to_string));
        rec.push(String::new());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics_csv(path: impl AsRef<Path>) -> Result<Vec<FootprintMetrics>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::parse(path, format!("missing column `{name}`")))
    };
    let id_c = col("id")?;
    let (x_c, y_c) = (col("lon")?, col("lat")?);
    let feat_c: Vec<usize> = METRIC_NAMES.iter().map(|n| col(n)).collect::<Result<_>>()?;
    let (b_c, e_c, g_c) = (col("begin_elev")?, col("end_elev")?, col("ground_elev")?);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let num = |c: usize| -> Result<f64> {
            rec.get(c)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| Error::parse(path, format!("bad number in column {c}")))
        };
        let f: Vec<f64> = feat_c.iter().map(|&c| num(c)).collect::<Result<_>>()?;
        let metrics = WaveformMetrics {
            wext: f[0],
            h: [f[1], f[2], f[3], f[4], f[5], f[6], f[7], f[8], f[9]],
            ti: f[10],
            slope: f[11],
            tch: f[12],
            lead: f[13],
            trail: f[14],
            begin_elev: num(b_c)?,
            end_elev: num(e_c)?,
            ground_elev: num(g_c)?,
        };
        out.push(FootprintMetrics {
            id: rec.get(id_c).unwrap_or_default().to_string(),
            location: Point::new(num(x_c)?, num(y_c)?),
            metrics,
        });
    }
    Ok(out)
}

/// Screening report: one row per input waveform.
pub fn write_filter_csv(path: impl AsRef<Path>, rows: &[FootprintResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["id", "lon", "lat", "snr", "kept", "reject_reason"])?;
    for r in rows {
        let reason = match r.decision {
            FilterDecision::Keep => String::new(),
            FilterDecision::Reject(x) => x.to_string(),
        };
        w.write_record([
            r.id.clone(),
            r.location.x.to_string(),
            r.location.y.to_string(),
            r.snr.map_or(String::new(), |s| s.to_string()),
            r.decision.is_keep().to_string(),
            reason,
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics_csv_round_trip() {
        let m = WaveformMetrics {
            wext: 40.5,
            tch: 28.25,
            lead: 3.0,
            trail: 2.5,
            h: [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0],
            ti: 4.0,
            slope: 1.5,
            begin_elev: 140.5,
            end_elev: 100.0,
            ground_elev: 102.5,
        };
        let rows = vec![FootprintMetrics { id: "a".into(), location: Point::new(10.0, 20.0), metrics: m }];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        write_metrics_csv(&p, &rows).unwrap();
        assert_eq!(read_metrics_csv(&p).unwrap(), rows);
    }
}
