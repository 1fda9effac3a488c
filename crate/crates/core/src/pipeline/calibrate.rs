use serde::Serialize;

use crate::allometry::{plot_agb_density, PlotRecord};
use crate::error::{Error, Result};
use crate::geostat::SampleSet;
use crate::raster::match_points;
use crate::regression::{kfold_cv, stepwise_bic, DesignMatrix, LinearModel, Regressor};
use crate::spatial::Point;
use crate::waveform::{FootprintMetrics, WaveformMetrics, METRIC_NAMES};

/// Cross-validated skill of the footprint model at one pairing distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalibrationSweepRow {
    pub max_dist: f64,
    pub n_pairs: usize,
    /// NaN when the model could not be cross-validated on these pairs.
    pub r2: f64,
    pub rmse: f64,
}

/// A plot paired with its nearest kept footprint.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationPair {
    pub plot: usize,
    pub footprint: usize,
    pub dist: f64,
    pub agb: f64,
    pub metrics: WaveformMetrics,
}

/// Pairs each plot with its nearest footprint no farther than `max_dist`.
pub fn calibration_pairs(
    plots: &[PlotRecord],
    footprints: &[FootprintMetrics],
    max_dist: f64,
) -> Result<Vec<CalibrationPair>> {
    let a: Vec<Point> = plots.iter().map(PlotRecord::location).collect();
    let b: Vec<Point> = footprints.iter().map(|f| f.location).collect();
    match_points(&a, &b, max_dist)
        .into_iter()
        .map(|m| {
            Ok(CalibrationPair {
                plot: m.a,
                footprint: m.b,
                dist: m.dist,
                agb: plot_agb_density(&plots[m.a])?,
                metrics: footprints[m.b].metrics,
            })
        })
        .collect()
}

/// Design matrix over all waveform metrics; `target` may be all zeros when
/// only predicting.
pub fn metrics_design<'a>(metrics: impl Iterator<Item = &'a WaveformMetrics>, target: Option<Vec<f64>>) -> Result<DesignMatrix> {
    let rows: Vec<[f64; 15]> = metrics.map(WaveformMetrics::features).collect();
    let mut d = DesignMatrix::new(target.unwrap_or_else(|| vec![0.0; rows.len()]))?;
    for (j, name) in METRIC_NAMES.iter().enumerate() {
        d.push_numeric(*name, rows.iter().map(|r| r[j]).collect())?;
    }
    Ok(d)
}

fn pairs_design(pairs: &[CalibrationPair]) -> Result<DesignMatrix> {
    metrics_design(pairs.iter().map(|p| &p.metrics), Some(pairs.iter().map(|p| p.agb).collect()))
}

/// Stepwise-BIC model of plot AGB on waveform metrics. Requires at least two
/// pairs per selected metric (and at least two pairs).
pub fn fit_glas_agb_model(pairs: &[CalibrationPair]) -> Result<LinearModel> {
    if pairs.len() < 3 {
        return Err(Error::InsufficientPairs { needed: 3, got: pairs.len() });
    }
    let model = stepwise_bic(&pairs_design(pairs)?)?;
    let needed = 2 * model.selected_features.len().max(1);
    if pairs.len() < needed {
        return Err(Error::InsufficientPairs { needed, got: pairs.len() });
    }
    Ok(model)
}

/// k-fold CV of [`fit_glas_agb_model`] at each distance. Fails with
/// `NoPairs` when a distance yields no pair at all; when pairs exist but are
/// too few to cross-validate, the row carries NaN scores.
pub fn calibration_sweep(
    plots: &[PlotRecord],
    footprints: &[FootprintMetrics],
    distances: &[f64],
    folds: usize,
    seed: u64,
) -> Result<Vec<CalibrationSweepRow>> {
    distances
        .iter()
        .map(|&max_dist| {
            let pairs = calibration_pairs(plots, footprints, max_dist)?;
            if pairs.is_empty() {
                return Err(Error::NoPairs { max_dist });
            }
            let d = pairs_design(&pairs)?;
            let k = folds.min(pairs.len());
            let cv = kfold_cv(
                &d,
                |train| {
                    let m = stepwise_bic(train)?;
                    if train.n() < 2 * m.selected_features.len().max(1) {
                        return Err(Error::InsufficientPairs { needed: 2 * m.selected_features.len(), got: train.n() });
                    }
                    Ok(m)
                },
                k,
                seed,
            );
            let (r2, rmse) = match cv {
                Ok(s) => (s.r2, s.rmse),
                Err(e) => {
                    log::warn!("calibration at {max_dist} m with {} pairs not scored: {e}", pairs.len());
                    (f64::NAN, f64::NAN)
                }
            };
            Ok(CalibrationSweepRow { max_dist, n_pairs: pairs.len(), r2, rmse })
        })
        .collect()
}

pub fn write_sweep_csv(path: impl AsRef<std::path::Path>, rows: &[CalibrationSweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Footprint AGB predictions with negatives clamped to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct FootprintAgb {
    pub samples: SampleSet,
    pub n_clamped: usize,
}

/// Applies the footprint model to every kept footprint.
pub fn predict_footprints(model: &LinearModel, footprints: &[FootprintMetrics]) -> Result<FootprintAgb> {
    let d = metrics_design(footprints.iter().map(|f| &f.metrics), None)?;
    let raw = if footprints.is_empty() { Vec::new() } else { model.predict(&d)? };
    let n_clamped = raw.iter().filter(|v| **v < 0.0).count();
    if n_clamped > 0 {
        log::warn!("{n_clamped} negative footprint AGB predictions clamped to 0");
    }
    let values = raw.into_iter().map(|v| v.max(0.0)).collect();
    let samples = SampleSet::new(footprints.iter().map(|f| f.location).collect(), values)?;
    Ok(FootprintAgb { samples, n_clamped })
}

/// `x,y,agb` per footprint sample (coincident footprints already merged).
pub fn write_footprint_agb_csv(path: impl AsRef<std::path::Path>, fa: &FootprintAgb) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "y", "agb"])?;
    for (p, v) in fa.samples.points().iter().zip(fa.samples.values()) {
        w.write_record([p.x.to_string(), p.y.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn metrics(tch: f64, lead: f64) -> WaveformMetrics {
        WaveformMetrics {
            wext: tch + lead + 5.0,
            tch,
            lead,
            trail: 5.0,
            h: [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0].map(|v| v * tch.sqrt() + (v * lead).ln()),
            ti: (tch * 7.0).sin().abs(),
            slope: (lead * 3.0).cos().abs(),
            begin_elev: 100.0,
            end_elev: 0.0,
            ground_elev: 5.0,
        }
    }

    fn footprints(n: usize) -> Vec<FootprintMetrics> {
        (0..n)
            .map(|i| FootprintMetrics {
                id: format!("f{i}"),
                location: Point::new(100.0 * i as f64, 0.0),
                metrics: metrics(10.0 + (i * 7 % 23) as f64, 1.0 + (i * 5 % 11) as f64 / 3.0),
            })
            .collect()
    }

    #[test]
    fn exact_tch_model() {
        let fps = footprints(30);
        let plots: Vec<PlotRecord> = fps
            .iter()
            .map(|f| PlotRecord::with_density(f.id.clone(), f.location.x + 5.0, 3.0, 1.0, 5.0 * f.metrics.tch))
            .collect();
        let pairs = calibration_pairs(&plots, &fps, 10.0).unwrap();
        assert_eq!(pairs.len(), 30);
        let m = fit_glas_agb_model(&pairs).unwrap();
        assert!(m.selected_features.iter().any(|f| f == "tch"));
        let pred = predict_footprints(&m, &fps).unwrap();
        assert_eq!(pred.n_clamped, 0);
        for (f, v) in fps.iter().zip(pred.samples.values()) {
            assert!((v - 5.0 * f.metrics.tch).abs() < 1e-6);
        }
        let rows = calibration_sweep(&plots, &fps, &[10.0, 10.0], 5, 1).unwrap();
        assert_eq!(rows[0], rows[1]);
        assert!((rows[0].r2 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn no_pairs_and_empty() {
        let fps = footprints(5);
        let plots = vec![PlotRecord::with_density("p", 50.0, 5000.0, 1.0, 100.0)];
        assert!(matches!(calibration_sweep(&plots, &fps, &[100.0], 10, 0), Err(Error::NoPairs { .. })));
        let all = footprints(30);
        let plots: Vec<PlotRecord> =
            all.iter().map(|f| PlotRecord::with_density("p", f.location.x, 0.0, 1.0, f.metrics.tch)).collect();
        let m = fit_glas_agb_model(&calibration_pairs(&plots, &all, 1.0).unwrap()).unwrap();
        let out = predict_footprints(&m, &[]).unwrap();
        assert!(out.samples.is_empty());
    }

    #[test]
    fn too_few_pairs() {
        let fps = footprints(2);
        let plots: Vec<PlotRecord> =
            fps.iter().map(|f| PlotRecord::with_density("p", f.location.x, 0.0, 1.0, 50.0)).collect();
        let pairs = calibration_pairs(&plots, &fps, 1.0).unwrap();
        assert!(matches!(fit_glas_agb_model(&pairs), Err(Error::InsufficientPairs { .. })));
    }
}
