use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geostat::{
    default_lags, empirical_variogram, fit_exponential, regression_krige_with, EmpiricalVariogram, SampleSet,
    VariogramModel, DEFAULT_LAG_BINS, DEFAULT_NEIGHBORHOOD,
};
use crate::raster::{resample, Aggregation, Grid, GridStack};
use crate::regression::{
    fit_random_forest_oob, rf_importance, stepwise_bic, DesignMatrix, ForestParams, Model, Regressor, MAX_LEVELS,
};
use crate::seed::derive;

/// Trend model family for the wall-to-wall map.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrendKind {
    #[default]
    Rf,
    Lm,
}

impl std::str::FromStr for TrendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rf" => Ok(TrendKind::Rf),
            "lm" => Ok(TrendKind::Lm),
            _ => Err(Error::Config(format!("unknown trend `{s}` (expected rf or lm)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapSettings {
    pub trend: TrendKind,
    pub neighborhood: usize,
    pub lag_bins: usize,
    /// Keep only the `top_k` covariates by forest importance; all when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub top_k: Option<usize>,
    pub importance_repetitions: usize,
    /// Aggregation for numeric bands; class bands always use the mode.
    pub aggregation: Aggregation,
    pub forest: ForestParams,
}

impl Default for MapSettings {
    fn default() -> Self {
        Self {
            trend: TrendKind::Rf,
            neighborhood: DEFAULT_NEIGHBORHOOD,
            lag_bins: DEFAULT_LAG_BINS,
            top_k: None,
            importance_repetitions: 10,
            aggregation: Aggregation::Mean,
            forest: ForestParams::default(),
        }
    }
}

/// A regression-kriged AGB map at one grid size.
#[derive(Debug, Clone)]
pub struct MapProduct {
    pub grid_size: f64,
    /// Trend plus kriged residual, clamped at 0 (Mg/ha).
    pub agb: Grid,
    pub trend: Grid,
    /// Kriging variance; nodata everywhere when kriging fell back.
    pub krige_var: Grid,
    pub empirical: Option<EmpiricalVariogram>,
    pub variogram: Option<VariogramModel>,
    pub trend_model: Model,
    pub covariates_used: Vec<String>,
    /// Footprint samples with complete covariates.
    pub n_samples: usize,
    pub n_clamped: usize,
    /// Set when the variogram could not be fitted and `agb` is the trend.
    pub fallback: bool,
}

/// Aggregates every band to `grid_size`; bands named in `categorical` use
/// the mode. The size must be an integer multiple of the native cell size.
pub fn resample_covariates(
    stack: &GridStack,
    categorical: &[String],
    grid_size: f64,
    aggregation: Aggregation,
) -> Result<GridStack> {
    let tpl = stack.template().ok_or(Error::TooFewBands { needed: 1, got: 0 })?;
    let ratio = grid_size / tpl.cellsize();
    let factor = ratio.round();
    if !(factor >= 1.0) || (ratio - factor).abs() > 1e-9 * ratio {
        return Err(Error::InvalidArgument(format!(
            "grid size {grid_size} is not a multiple of the covariate cell size {}",
            tpl.cellsize()
        )));
    }
    let bands = stack
        .bands()
        .iter()
        .map(|(name, g)| {
            let scheme = if categorical.contains(name) { Aggregation::Mode } else { aggregation };
            Ok((name.clone(), resample(g, factor as usize, scheme)?))
        })
        .collect::<Result<Vec<_>>>()?;
    GridStack::from_bands(bands)
}

struct CovariateTable {
    names: Vec<String>,
    /// Level values of each class band, ascending (empty for numeric bands).
    levels: Vec<Vec<f64>>,
}

impl CovariateTable {
    fn new(stack: &GridStack, categorical: &[String]) -> Result<Self> {
        let mut levels = Vec::new();
        for (name, g) in stack.bands() {
            if categorical.contains(name) {
                let mut l: Vec<f64> = g.valid_values().collect();
                l.sort_by(f64::total_cmp);
                l.dedup();
                if l.len() > MAX_LEVELS {
                    return Err(Error::InvalidDesign(format!("band `{name}` has more than {MAX_LEVELS} classes")));
                }
                levels.push(l);
            } else {
                levels.push(Vec::new());
            }
        }
        Ok(Self { names: stack.names().iter().map(|s| s.to_string()).collect(), levels })
    }

    fn design(&self, rows: &[Vec<f64>], target: Vec<f64>) -> Result<DesignMatrix> {
        let mut d = DesignMatrix::new(target)?;
        for (j, name) in self.names.iter().enumerate() {
            let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            if self.levels[j].is_empty() {
                d.push_numeric(name.clone(), col)?;
            } else {
                let lv = &self.levels[j];
                let codes: Vec<usize> =
                    col.iter().map(|v| lv.binary_search_by(|l| l.total_cmp(v)).unwrap_or(0)).collect();
                d.push_categorical(name.clone(), &codes, lv.len())?;
            }
        }
        Ok(d)
    }
}

/// Regression kriging of footprint AGB over the covariates.
///
/// The trend is fitted on the covariate values of the cells holding the
/// footprints, residuals are taken against out-of-bag forest predictions (or
/// in-sample linear fits), and an exponential variogram of the residuals
/// drives ordinary kriging at every cell centre.
pub fn build_map(
    agb_glas: &SampleSet,
    covariates: &GridStack,
    categorical: &[String],
    grid_size: f64,
    settings: &MapSettings,
    seed: u64,
) -> Result<MapProduct> {
    if agb_glas.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let mut stack = resample_covariates(covariates, categorical, grid_size, settings.aggregation)?;
    let mut table = CovariateTable::new(&stack, categorical)?;
    let tpl = stack.template().expect("non-empty stack").clone();

    let mut pts = Vec::new();
    let mut rows = Vec::new();
    let mut target = Vec::new();
    for (p, v) in agb_glas.points().iter().zip(agb_glas.values()) {
        if let Some(x) = tpl.cell_of(*p).and_then(|(r, c)| stack.cell_vector(r, c)) {
            pts.push(*p);
            rows.push(x);
            target.push(*v);
        }
    }
    let n = target.len();
    if n < 3 {
        return Err(Error::TooFewSamples { needed: 3, got: n });
    }

    if let (Some(k), TrendKind::Rf) = (settings.top_k, settings.trend) {
        if k < stack.len() {
            let d = table.design(&rows, target.clone())?;
            let imp = rf_importance(&d, &settings.forest, settings.importance_repetitions, derive(seed, 1))?;
            let mut order: Vec<usize> = (0..imp.len()).collect();
            order.sort_by(|&a, &b| imp[b].mean.total_cmp(&imp[a].mean).then(a.cmp(&b)));
            let mut keep: Vec<usize> = order[..k.max(1)].to_vec();
            keep.sort_unstable();
            stack = GridStack::from_bands(keep.iter().map(|&j| stack.bands()[j].clone()).collect())?;
            rows = rows.iter().map(|r| keep.iter().map(|&j| r[j]).collect()).collect();
            table = CovariateTable::new(&stack, categorical)?;
        }
    }

    let d = table.design(&rows, target.clone())?;
    let (trend_model, fitted) = match settings.trend {
        TrendKind::Rf => {
            let fit = fit_random_forest_oob(&d, &settings.forest, derive(seed, 2))?;
            let fitted: Vec<f64> = fit
                .oob_predictions
                .iter()
                .enumerate()
                .map(|(i, o)| if o.is_nan() { fit.forest.predict_row(&d.row(i)) } else { *o })
                .collect();
            (Model::Forest(fit.forest), fitted)
        }
        TrendKind::Lm => {
            let m = stepwise_bic(&d)?;
            let fitted = m.predict(&d)?;
            (Model::Linear(m), fitted)
        }
    };

    // trend at every cell with complete covariates
    let cells: Vec<(usize, Vec<f64>)> = (0..tpl.len())
        .filter_map(|i| stack.cell_vector(i / tpl.ncols(), i % tpl.ncols()).map(|x| (i, x)))
        .collect();
    let (idx, xs): (Vec<usize>, Vec<Vec<f64>>) = cells.into_iter().unzip();
    let pred = if xs.is_empty() { Vec::new() } else { trend_model.predict(&table.design(&xs, vec![0.0; xs.len()])?)? };
    let mut tv = vec![tpl.nodata(); tpl.len()];
    for (i, v) in idx.into_iter().zip(pred) {
        tv[i] = v;
    }
    let trend = tpl.with_values(tv)?;

    let residuals = SampleSet::new(pts, target.iter().zip(&fitted).map(|(o, f)| o - f).collect())?;
    let (_, max_lag) = default_lags(&residuals);
    let variogram = (settings.lag_bins > 0 && max_lag > 0.0)
        .then(|| empirical_variogram(&residuals, max_lag / settings.lag_bins as f64, max_lag))
        .transpose()
        .ok()
        .flatten();
    let kriged = match variogram.as_ref().and_then(|ev| fit_exponential(ev).ok()) {
        Some(m) if m.sill() > 0.0 => match regression_krige_with(&trend, &residuals, &m, settings.neighborhood) {
            Ok((fin, var)) => Some((fin, var, m)),
            Err(e) => {
                log::warn!("residual kriging failed at {grid_size} m: {e}");
                None
            }
        },
        // a flat zero variogram means the residuals are constant
        Some(m) => {
            let mean = residuals.values().iter().sum::<f64>() / residuals.len() as f64;
            Some((trend.map_valid(|t| t + mean), trend.map_valid(|_| 0.0), m))
        }
        None => None,
    };
    let (agb, krige_var, vmodel, fallback) = match kriged {
        Some((fin, var, m)) => (fin, var, Some(m), false),
        None => {
            log::warn!("no usable residual variogram at {grid_size} m; map is trend only");
            (trend.clone(), trend.map_valid(|_| trend.nodata()), None, true)
        }
    };
    let n_clamped = agb.valid_values().filter(|v| *v < 0.0).count();
    let agb = agb.map_valid(|v| v.max(0.0));
    Ok(MapProduct {
        grid_size,
        agb,
        trend,
        krige_var,
        empirical: variogram,
        variogram: vmodel,
        trend_model,
        covariates_used: table.names,
        n_samples: n,
        n_clamped,
        fallback,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spatial::Point;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn stack() -> GridStack {
        let (nc, nr) = (20, 16);
        let a: Vec<f64> = (0..nc * nr).map(|i| (i % nc) as f64).collect();
        let b: Vec<f64> = (0..nc * nr).map(|i| ((i / nc) % 3) as f64).collect();
        let g = |v| Grid::from_values(nc, nr, 0.0, 0.0, 100.0, -9999.0, v).unwrap();
        GridStack::from_bands(vec![("a".into(), g(a)), ("cls".into(), g(b))]).unwrap()
    }

    fn samples(f: impl Fn(Point) -> f64) -> SampleSet {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<Point> =
            (0..150).map(|_| Point::new(rng.random_range(0.0..2000.0), rng.random_range(0.0..1600.0))).collect();
        let vals = pts.iter().map(|p| f(*p)).collect();
        SampleSet::new(pts, vals).unwrap()
    }

    #[test]
    fn zero_residual_gives_trend() {
        let s = stack();
        let tpl = s.template().unwrap().clone();
        let truth = |p: Point| {
            let (r, c) = tpl.cell_of(p).unwrap();
            10.0 + 3.0 * c as f64 + 5.0 * (r % 3) as f64
        };
        let settings = MapSettings { trend: TrendKind::Lm, ..Default::default() };
        let m = build_map(&samples(truth), &s, &["cls".to_string()], 100.0, &settings, 1).unwrap();
        assert_eq!(m.agb.nrows(), 16);
        for (a, t) in m.agb.values().iter().zip(m.trend.values()) {
            assert!((a - t).abs() < 1e-6, "{a} vs {t}");
        }
        assert!(m.krige_var.valid_values().all(|v| v >= 0.0));
    }

    #[test]
    fn coarser_grid_and_bad_sizes() {
        let s = stack();
        let settings = MapSettings { forest: ForestParams { n_trees: 20, ..Default::default() }, ..Default::default() };
        let m = build_map(&samples(|p| 100.0 + p.x / 50.0), &s, &["cls".into()], 200.0, &settings, 2).unwrap();
        assert_eq!((m.agb.nrows(), m.agb.ncols()), (8, 10));
        assert!(m.agb.valid_values().all(|v| v >= 0.0));
        let trend_valid = m.trend.valid_count();
        assert_eq!(m.agb.valid_count(), trend_valid);
        assert!(build_map(&samples(|_| 1.0), &s, &[], 150.0, &settings, 2).is_err());
        let empty = SampleSet::new(vec![], vec![]).unwrap();
        assert!(build_map(&empty, &s, &[], 100.0, &settings, 2).is_err());
    }

    #[test]
    fn resample_uses_mode_for_classes() {
        let s = stack();
        let r = resample_covariates(&s, &["cls".into()], 400.0, Aggregation::Mean).unwrap();
        let cls = r.get("cls").unwrap();
        assert!(cls.valid_values().all(|v| v.fract() == 0.0));
        let same = resample_covariates(&s, &[], 100.0, Aggregation::Mean).unwrap();
        assert_eq!(same, s);
    }
}
