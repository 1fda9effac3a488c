//! End-to-end mapping: footprint screening and metrics, plot calibration of
//! footprint AGB, wall-to-wall regression kriging and plot validation.

mod calibrate;
mod map;
mod validate;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use calibrate::{
    calibration_pairs, calibration_sweep, fit_glas_agb_model, metrics_design, predict_footprints,
    write_footprint_agb_csv, write_sweep_csv, CalibrationPair, CalibrationSweepRow, FootprintAgb,
};
pub use map::{build_map, resample_covariates, MapProduct, MapSettings, TrendKind};
pub use validate::{
    split_plots, validate_map, write_validation_cells_csv, write_validation_csv, Validation, ValidationCell,
    DEFAULT_MIN_PLOTS,
};

use crate::allometry::{attach_trees, carbon_stock, read_plots, read_trees, write_carbon_csv, CarbonConvention, CarbonStock, PlotRecord};
use crate::error::{Error, Result};
use crate::geostat::{write_variogram_csv, VariogramModel};
use crate::raster::{Grid, GridStack};
use crate::regression::{LinearModel, Model, DEFAULT_FOLDS};
use crate::seed::derive;
use crate::waveform::{
    kept_metrics, process_waveforms, read_waveforms, write_filter_csv, write_metrics_csv, FootprintMetrics,
    FootprintResult, WaveformConfig, WaveformRecord,
};

const TAG_SPLIT: u64 = 11;
const TAG_SWEEP: u64 = 12;
const TAG_MAP: u64 = 13;

pub const DEFAULT_GRID_SIZES: [f64; 3] = [500.0, 1000.0, 2000.0];
pub const DEFAULT_SWEEP_DISTANCES: [f64; 6] = [100.0, 200.0, 250.0, 300.0, 350.0, 400.0];

/// Input files; relative paths resolve against the configuration file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputPaths {
    pub waveforms: PathBuf,
    pub plots: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trees: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dem: Option<PathBuf>,
    /// ESRI ASCII covariate rasters; each band is named after its file stem.
    pub covariates: Vec<PathBuf>,
    /// Bands holding class codes.
    pub categorical: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub grid_sizes: Vec<f64>,
    /// Plot–footprint pairing distance for the footprint AGB model.
    pub calibration_distance: f64,
    pub sweep_distances: Vec<f64>,
    pub cv_folds: usize,
    /// Share of plots used for calibration; the rest validate the maps.
    pub train_fraction: f64,
    pub min_plots_per_cell: usize,
    pub carbon: CarbonConvention,
    pub inputs: InputPaths,
    pub waveform: WaveformConfig,
    pub map: MapSettings,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("run"),
            grid_sizes: DEFAULT_GRID_SIZES.to_vec(),
            calibration_distance: 250.0,
            sweep_distances: DEFAULT_SWEEP_DISTANCES.to_vec(),
            cv_folds: DEFAULT_FOLDS,
            train_fraction: 0.5,
            min_plots_per_cell: DEFAULT_MIN_PLOTS,
            carbon: CarbonConvention::default(),
            inputs: InputPaths::default(),
            waveform: WaveformConfig::default(),
            map: MapSettings::default(),
            base_dir: PathBuf::new(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut c: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.base_dir = base_dir.into();
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml_str(&text, base)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Configuration for a generated scene written by [`crate::synth::Scene::write`].
    pub fn for_scene(scene: &crate::synth::Scene) -> Self {
        use crate::synth::files;
        Self {
            seed: scene.config.seed,
            inputs: InputPaths {
                waveforms: files::WAVEFORMS.into(),
                plots: files::PLOTS.into(),
                trees: None,
                dem: Some(files::DEM.into()),
                covariates: scene.covariate_files(),
                categorical: scene.categorical.clone(),
            },
            ..Self::default()
        }
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.base_dir.join(p)
    }

    pub fn output_path(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: &[f64]| v.iter().all(|x| x.is_finite() && *x > 0.0);
        if self.grid_sizes.is_empty() || !positive(&self.grid_sizes) {
            return Err(Error::Config("grid_sizes must be a non-empty list of positive sizes".into()));
        }
        if !positive(&self.sweep_distances) || !positive(&[self.calibration_distance]) {
            return Err(Error::Config("pairing distances must be positive".into()));
        }
        if self.cv_folds < 2 {
            return Err(Error::Config("cv_folds must be >= 2".into()));
        }
        if self.min_plots_per_cell == 0 {
            return Err(Error::Config("min_plots_per_cell must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.train_fraction) {
            return Err(Error::Config("train_fraction must lie in [0, 1]".into()));
        }
        if self.map.neighborhood == 0 || self.map.forest.n_trees == 0 || self.map.forest.min_leaf == 0 {
            return Err(Error::Config("neighborhood, n_trees and min_leaf must be >= 1".into()));
        }
        Ok(())
    }

    /// The configuration as recorded in the manifest: everything that
    /// affects results, without the output location.
    pub fn effective_json(&self) -> Result<serde_json::Value> {
        let mut v = serde_json::to_value(self)?;
        if let Some(o) = v.as_object_mut() {
            o.remove("output_dir");
        }
        Ok(v)
    }
}

/// Loaded inputs of a run.
#[derive(Debug, Clone)]
pub struct RunInputs {
    pub waveforms: Vec<WaveformRecord>,
    pub plots: Vec<PlotRecord>,
    pub dem: Option<Grid>,
    pub covariates: GridStack,
    pub categorical: Vec<String>,
}

pub fn read_covariates(paths: &[PathBuf]) -> Result<GridStack> {
    let mut s = GridStack::new();
    for p in paths {
        let name = p
            .file_stem()
            .and_then(|n| n.to_str())
            .ok_or_else(|| Error::Config(format!("cannot name a band after `{}`", p.display())))?;
        s.push(name, Grid::read_ascii(p)?)?;
    }
    Ok(s)
}

pub fn load_inputs(cfg: &RunConfig) -> Result<RunInputs> {
    let i = &cfg.inputs;
    if i.covariates.is_empty() {
        return Err(Error::Config("inputs.covariates is empty".into()));
    }
    let mut plots = read_plots(cfg.resolve(&i.plots))?;
    if let Some(t) = &i.trees {
        attach_trees(&mut plots, read_trees(cfg.resolve(t))?);
    }
    let covariates = read_covariates(&i.covariates.iter().map(|p| cfg.resolve(p)).collect::<Vec<_>>())?;
    if let Some(c) = i.categorical.iter().find(|c| covariates.get(c).is_none()) {
        return Err(Error::Config(format!("categorical band `{c}` is not among the covariates")));
    }
    Ok(RunInputs {
        waveforms: read_waveforms(cfg.resolve(&i.waveforms))?,
        plots,
        dem: i.dem.as_ref().map(|p| Grid::read_ascii(cfg.resolve(p))).transpose()?,
        covariates,
        categorical: i.categorical.clone(),
    })
}

/// A map plus its plot validation and carbon total.
#[derive(Debug, Clone)]
pub struct MapOutput {
    pub product: MapProduct,
    /// `None` when no cell held enough validation plots.
    pub validation: Option<Validation>,
    pub carbon: CarbonStock,
}

/// Everything a run computes, before it is written out.
#[derive(Debug, Clone)]
pub struct RunOutputs {
    pub footprints: Vec<FootprintResult>,
    pub kept: Vec<FootprintMetrics>,
    pub train_plots: Vec<PlotRecord>,
    pub validation_plots: Vec<PlotRecord>,
    pub sweep: Vec<CalibrationSweepRow>,
    pub n_calibration_pairs: usize,
    pub glas_model: LinearModel,
    pub footprint_agb: FootprintAgb,
    pub maps: Vec<MapOutput>,
}

/// Runs every stage in memory.
pub fn execute(cfg: &RunConfig, inputs: &RunInputs) -> Result<RunOutputs> {
    cfg.validate()?;
    let footprints = process_waveforms(&inputs.waveforms, inputs.dem.as_ref(), &cfg.waveform);
    let kept = kept_metrics(&footprints);
    log::info!("{} of {} waveforms kept", kept.len(), footprints.len());

    let (tr, va) = split_plots(inputs.plots.len(), cfg.train_fraction, derive(cfg.seed, TAG_SPLIT))?;
    let train_plots: Vec<PlotRecord> = tr.iter().map(|&i| inputs.plots[i].clone()).collect();
    let validation_plots: Vec<PlotRecord> = va.iter().map(|&i| inputs.plots[i].clone()).collect();

    let sweep_seed = derive(cfg.seed, TAG_SWEEP);
    let sweep = cfg
        .sweep_distances
        .iter()
        .map(|&d| match calibration_sweep(&train_plots, &kept, &[d], cfg.cv_folds, sweep_seed) {
            Ok(mut rows) => Ok(rows.remove(0)),
            Err(Error::NoPairs { max_dist }) => {
                log::warn!("no plot-footprint pairs within {max_dist} m");
                Ok(CalibrationSweepRow { max_dist, n_pairs: 0, r2: f64::NAN, rmse: f64::NAN })
            }
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<_>>>()?;

    let pairs = calibration_pairs(&train_plots, &kept, cfg.calibration_distance)?;
    if pairs.is_empty() {
        return Err(Error::NoPairs { max_dist: cfg.calibration_distance });
    }
    let glas_model = fit_glas_agb_model(&pairs)?;
    let footprint_agb = predict_footprints(&glas_model, &kept)?;

    let map_seed = derive(cfg.seed, TAG_MAP);
    let maps = cfg
        .grid_sizes
        .iter()
        .map(|&size| {
            let product = build_map(
                &footprint_agb.samples,
                &inputs.covariates,
                &inputs.categorical,
                size,
                &cfg.map,
                derive(map_seed, size.to_bits()),
            )?;
            let validation = match validate_map(&product.agb, &validation_plots, cfg.min_plots_per_cell) {
                Ok(v) => Some(v),
                Err(Error::NoQualifyingCells { .. }) => {
                    log::warn!("no {size} m cell holds {} validation plots", cfg.min_plots_per_cell);
                    None
                }
                Err(e) => return Err(e),
            };
            let carbon = carbon_stock(&product.agb, cfg.carbon)?;
            Ok(MapOutput { product, validation, carbon })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(RunOutputs {
        footprints,
        kept,
        train_plots,
        validation_plots,
        sweep,
        n_calibration_pairs: pairs.len(),
        glas_model,
        footprint_agb,
        maps,
    })
}

/// File-name label of a grid size: `1000` for whole meters.
pub fn size_label(size: f64) -> String {
    if size.fract() == 0.0 && size.abs() < 1e15 {
        format!("{}", size as i64)
    } else {
        size.to_string().replace('.', "p")
    }
}

pub const MANIFEST: &str = "run_manifest.json";

#[derive(Debug, Clone, Serialize)]
struct MapSummary {
    grid_size: f64,
    n_samples: usize,
    n_clamped: usize,
    fallback: bool,
    covariates: Vec<String>,
    variogram: Option<VariogramModel>,
    rmsep: Option<f64>,
    r2: Option<f64>,
    n_validation_cells: usize,
    total_tc: f64,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes all run products into `dir`, then the manifest with the SHA-256 of
/// the configuration and of every product. Contains no timestamps.
pub fn write_outputs(cfg: &RunConfig, out: &RunOutputs, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut written: Vec<String> = Vec::new();
    let mut file = |name: String| {
        let p = dir.join(&name);
        written.push(name);
        p
    };
    write_filter_csv(file("filter_report.csv".into()), &out.footprints)?;
    write_metrics_csv(file("metrics.csv".into()), &out.kept)?;
    write_sweep_csv(file("sweep.csv".into()), &out.sweep)?;
    Model::Linear(out.glas_model.clone()).save(file("glas_model.txt".into()))?;
    write_footprint_agb_csv(file("agb_glas.csv".into()), &out.footprint_agb)?;
    let mut summaries = Vec::new();
    for m in &out.maps {
        let p = &m.product;
        let s = size_label(p.grid_size);
        p.agb.write_ascii(file(format!("agb_{s}.asc")))?;
        p.trend.write_ascii(file(format!("trend_{s}.asc")))?;
        p.krige_var.write_ascii(file(format!("krigevar_{s}.asc")))?;
        if let Some(ev) = &p.empirical {
            write_variogram_csv(file(format!("variogram_{s}.csv")), ev, p.variogram.as_ref())?;
        }
        write_validation_csv(file(format!("validation_{s}.csv")), p.grid_size, m.validation.as_ref())?;
        write_validation_cells_csv(file(format!("validation_cells_{s}.csv")), m.validation.as_ref())?;
        write_carbon_csv(file(format!("carbon_{s}.csv")), &m.carbon)?;
        summaries.push(MapSummary {
            grid_size: p.grid_size,
            n_samples: p.n_samples,
            n_clamped: p.n_clamped,
            fallback: p.fallback,
            covariates: p.covariates_used.clone(),
            variogram: p.variogram,
            rmsep: m.validation.as_ref().map(|v| v.rmsep),
            r2: m.validation.as_ref().map(|v| v.r2),
            n_validation_cells: m.validation.as_ref().map_or(0, |v| v.n_cells),
            total_tc: m.carbon.total_tc,
        });
    }

    let config = cfg.effective_json()?;
    let mut outputs = BTreeMap::new();
    for name in &written {
        outputs.insert(name.clone(), sha256_hex(&std::fs::read(dir.join(name))?));
    }
    let manifest = serde_json::json!({
        "package": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "seed": cfg.seed,
        "config_sha256": sha256_hex(serde_json::to_string(&config)?.as_bytes()),
        "config": config,
        "waveforms": { "total": out.footprints.len(), "kept": out.kept.len() },
        "calibration": {
            "max_dist": cfg.calibration_distance,
            "n_pairs": out.n_calibration_pairs,
            "selected": out.glas_model.selected_features,
            "n_clamped": out.footprint_agb.n_clamped,
        },
        "maps": summaries,
        "outputs": outputs,
    });
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(dir.join(MANIFEST), text)?;
    Ok(())
}

/// Loads the inputs named by `cfg`, runs every stage and writes the products
/// under the configured output directory.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunOutputs> {
    cfg.validate()?;
    let inputs = load_inputs(cfg)?;
    let out = execute(cfg, &inputs)?;
    write_outputs(cfg, &out, &cfg.output_path())?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trip() {
        let mut c = RunConfig::default();
        c.inputs.covariates = vec!["a.asc".into(), "b.asc".into()];
        c.inputs.dem = Some("dem.asc".into());
        c.map.top_k = Some(3);
        let text = c.to_toml().unwrap();
        let back = RunConfig::from_toml_str(&text, "").unwrap();
        assert_eq!(back, c);
        assert!(RunConfig::from_toml_str("bogus = 1", "").is_err());
        let partial = RunConfig::from_toml_str("seed = 9\n[map]\ntrend = \"lm\"\n", "cfg").unwrap();
        assert_eq!(partial.seed, 9);
        assert_eq!(partial.map.trend, TrendKind::Lm);
        assert_eq!(partial.grid_sizes, DEFAULT_GRID_SIZES.to_vec());
        assert_eq!(partial.output_path(), Path::new("cfg/run"));
    }

    #[test]
    fn labels() {
        assert_eq!(size_label(1000.0), "1000");
        assert_eq!(size_label(62.5), "62p5");
    }

    #[test]
    fn invalid_configs() {
        let bad = [
            RunConfig { grid_sizes: vec![], ..Default::default() },
            RunConfig { cv_folds: 1, ..Default::default() },
            RunConfig { min_plots_per_cell: 0, ..Default::default() },
            RunConfig { sweep_distances: vec![-1.0], ..Default::default() },
        ];
        for c in bad {
            assert!(matches!(c.validate(), Err(Error::Config(_))));
        }
    }
}
