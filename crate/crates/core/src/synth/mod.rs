//! Seeded synthetic scenes with known ground truth.
//!
//! A scene holds smooth covariate rasters, a biomass truth built from a
//! covariate trend plus an exponential residual field, waveforms whose canopy
//! and ground returns encode the local truth, and clustered inventory plots.

mod field;
mod footprint;

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use field::{simulate_exponential, smooth_field};
pub use footprint::{write_footprint_truth, FootprintTruth, WaveformSpec};

use crate::allometry::{write_plots, PlotRecord};
use crate::error::{Error, Result};
use crate::geostat::VariogramModel;
use crate::raster::{dem_derivatives, resample, Aggregation, Grid, GridStack, DEFAULT_NODATA};
use crate::seed::{derive, stream_rng};
use crate::spatial::Point;
use crate::waveform::{write_waveforms, RejectReason, WaveformRecord};

const TAG_COVARIATE: u64 = 1;
const TAG_TERRAIN: u64 = 2;
const TAG_GEOLOGY: u64 = 3;
const TAG_RESIDUAL: u64 = 4;
const TAG_NUGGET: u64 = 5;
const TAG_FOOTPRINT: u64 = 6;
const TAG_VIOLATION: u64 = 7;
const TAG_PLOT: u64 = 8;
const TAG_TRACK: u64 = 9;

/// A smooth covariate and its weight in the biomass trend (per unit sd).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub name: String,
    pub length_scale: f64,
    pub coef: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TerrainSpec {
    pub base: f64,
    /// Standard deviation of the elevation field.
    pub relief: f64,
    pub length_scale: f64,
    /// Trend weight per unit elevation sd.
    pub elevation_coef: f64,
    /// Trend weight per degree of slope.
    pub slope_coef: f64,
}

impl Default for TerrainSpec {
    fn default() -> Self {
        Self { base: 120.0, relief: 60.0, length_scale: 3000.0, elevation_coef: 10.0, slope_coef: 0.0 }
    }
}

/// Class map from quantiles of a smooth field; class `k` adds `offsets[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeologySpec {
    pub length_scale: f64,
    pub offsets: Vec<f64>,
}

impl Default for GeologySpec {
    fn default() -> Self {
        Self { length_scale: 8000.0, offsets: vec![0.0, 30.0, -25.0, 10.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub seed: u64,
    pub origin_x: f64,
    pub origin_y: f64,
    pub extent_x: f64,
    pub extent_y: f64,
    pub cellsize: f64,
    pub n_footprints: usize,
    /// Footprints lie on north-south tracks with this along-track spacing;
    /// 0 scatters them uniformly instead.
    pub track_spacing: f64,
    pub n_plots: usize,
    pub plot_clusters: usize,
    pub plot_cluster_radius: f64,
    pub plot_area_ha: f64,
    pub plot_noise_sd: f64,
    pub intercept: f64,
    /// Truth is floored here to keep biomass strictly positive.
    pub min_agb: f64,
    pub residual: VariogramModel,
    pub covariates: Vec<CovariateSpec>,
    pub terrain: TerrainSpec,
    pub geology: GeologySpec,
    pub waveform: WaveformSpec,
}

impl Default for SceneConfig {
    fn default() -> Self {
        let cov = |name: &str, length_scale, coef| CovariateSpec { name: name.into(), length_scale, coef };
        Self {
            seed: 0,
            origin_x: 250_000.0,
            origin_y: 300_000.0,
            extent_x: 50_000.0,
            extent_y: 50_000.0,
            cellsize: 250.0,
            n_footprints: 3000,
            track_spacing: 172.0,
            n_plots: 200,
            plot_clusters: 20,
            plot_cluster_radius: 300.0,
            plot_area_ha: 1.0,
            plot_noise_sd: 20.0,
            intercept: 320.0,
            min_agb: 20.0,
            residual: VariogramModel { nugget: 400.0, psill: 2500.0, range: 3000.0 },
            covariates: vec![
                cov("evi_mean", 4000.0, 35.0),
                cov("evi_pc1", 6000.0, -20.0),
                cov("evi_pc2", 3000.0, 0.0),
                cov("hv_texture", 2500.0, 15.0),
            ],
            terrain: TerrainSpec::default(),
            geology: GeologySpec::default(),
            waveform: WaveformSpec::default(),
        }
    }
}

impl SceneConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    /// Near-noiseless waveforms and no violations. A tiny background noise is
    /// kept because signal detection needs a nonzero noise spread.
    pub fn noiseless(seed: u64) -> Self {
        let mut c = Self::with_seed(seed);
        c.waveform.noise_sd_frac = 1e-7;
        c.waveform.height_noise_sd = 0.0;
        c.waveform.ground_noise_sd = 0.0;
        c.waveform.srtm_noise_sd = 0.0;
        c.waveform.violation_rate = 0.0;
        c
    }

    pub fn dims(&self) -> (usize, usize) {
        ((self.extent_y / self.cellsize).round() as usize, (self.extent_x / self.cellsize).round() as usize)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.extent_x, self.extent_y, self.cellsize, self.plot_area_ha, self.residual.range];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Config("extent, cellsize, plot area and residual range must be positive".into()));
        }
        let (nr, nc) = self.dims();
        let fits = |e: f64, n: usize| n >= 3 && (e - n as f64 * self.cellsize).abs() <= 1e-6 * e;
        if !fits(self.extent_y, nr) || !fits(self.extent_x, nc) {
            return Err(Error::Config("extent must be a multiple (>= 3) of the cellsize".into()));
        }
        if self.residual.range >= self.extent_x.min(self.extent_y) {
            return Err(Error::Config("residual range must be smaller than the extent".into()));
        }
        if !(self.residual.nugget >= 0.0 && self.residual.psill >= 0.0) || !(self.plot_noise_sd >= 0.0) {
            return Err(Error::Config("variances and noise levels must be >= 0".into()));
        }
        if !(self.track_spacing >= 0.0 && self.track_spacing.is_finite()) {
            return Err(Error::Config("track spacing must be >= 0".into()));
        }
        if self.n_plots > 0 && (self.plot_clusters == 0 || !(self.plot_cluster_radius >= 0.0)) {
            return Err(Error::Config("plots need >= 1 cluster and a radius >= 0".into()));
        }
        if self.covariates.iter().any(|c| !(c.length_scale > 0.0)) || !(self.terrain.length_scale > 0.0) {
            return Err(Error::Config("covariate length scales must be positive".into()));
        }
        if !self.geology.offsets.is_empty() && !(self.geology.length_scale > 0.0) {
            return Err(Error::Config("geology length scale must be positive".into()));
        }
        self.waveform.validate()
    }
}

/// A generated scene and its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub config: SceneConfig,
    pub covariates: GridStack,
    /// Names of class-valued covariate bands.
    pub categorical: Vec<String>,
    pub dem: Grid,
    pub trend: Grid,
    /// Residual field before flooring (correlated part plus nugget).
    pub residual: Grid,
    pub truth_agb: Grid,
    pub waveforms: Vec<WaveformRecord>,
    pub footprint_truth: Vec<FootprintTruth>,
    pub plots: Vec<PlotRecord>,
}

fn gauss(rng: &mut impl Rng, sd: f64) -> f64 {
    if sd > 0.0 {
        Normal::new(0.0, sd).unwrap().sample(rng)
    } else {
        0.0
    }
}

pub fn generate_scene(cfg: &SceneConfig) -> Result<Scene> {
    cfg.validate()?;
    let (nr, nc) = cfg.dims();
    let cs = cfg.cellsize;
    let grid = |values: Vec<f64>| Grid::from_values(nc, nr, cfg.origin_x, cfg.origin_y, cs, DEFAULT_NODATA, values);
    let seed = cfg.seed;

    let mut covariates = GridStack::new();
    let mut trend = vec![cfg.intercept; nr * nc];
    for (k, c) in cfg.covariates.iter().enumerate() {
        let f = smooth_field(nr, nc, cs, c.length_scale, &mut stream_rng(derive(seed, TAG_COVARIATE), k as u64))?;
        trend.iter_mut().zip(&f).for_each(|(t, v)| *t += c.coef * v);
        covariates.push(c.name.clone(), grid(f)?)?;
    }

    let t = &cfg.terrain;
    let f = smooth_field(nr, nc, cs, t.length_scale, &mut stream_rng(derive(seed, TAG_TERRAIN), 0))?;
    trend.iter_mut().zip(&f).for_each(|(tr, v)| *tr += t.elevation_coef * v);
    let dem = grid(f.iter().map(|v| t.base + t.relief * v).collect())?;
    let derived = dem_derivatives(&dem)?;
    trend.iter_mut().zip(derived.slope.values()).for_each(|(tr, s)| *tr += t.slope_coef * s);
    covariates.push("elevation", dem.clone())?;
    covariates.push("slope", derived.slope)?;
    covariates.push("roughness", derived.roughness)?;

    let mut categorical = Vec::new();
    if !cfg.geology.offsets.is_empty() {
        let f = smooth_field(nr, nc, cs, cfg.geology.length_scale, &mut stream_rng(derive(seed, TAG_GEOLOGY), 0))?;
        let mut sorted = f.clone();
        sorted.sort_by(f64::total_cmp);
        let l = cfg.geology.offsets.len();
        let cuts: Vec<f64> = (1..l).map(|k| sorted[k * sorted.len() / l]).collect();
        let classes: Vec<f64> = f.iter().map(|v| cuts.iter().filter(|c| v >= c).count() as f64).collect();
        trend.iter_mut().zip(&classes).for_each(|(tr, c)| *tr += cfg.geology.offsets[*c as usize]);
        covariates.push("geol", grid(classes)?)?;
        categorical.push("geol".to_string());
    }

    let m = &cfg.residual;
    let mut residual =
        simulate_exponential(nr, nc, cs, m.psill, m.range, &mut stream_rng(derive(seed, TAG_RESIDUAL), 0))?;
    let mut nrng = stream_rng(derive(seed, TAG_NUGGET), 0);
    residual.iter_mut().for_each(|v| *v += gauss(&mut nrng, m.nugget.sqrt()));
    let truth: Vec<f64> = trend.iter().zip(&residual).map(|(t, r)| (t + r).max(cfg.min_agb)).collect();
    let (trend, residual, truth_agb) = (grid(trend)?, grid(residual)?, grid(truth)?);

    let n_viol = (cfg.waveform.violation_rate * cfg.n_footprints as f64).round() as usize;
    let mut vrng = stream_rng(derive(seed, TAG_VIOLATION), 0);
    let mut order: Vec<usize> = (0..cfg.n_footprints).collect();
    order.shuffle(&mut vrng);
    let mut violation = vec![None; cfg.n_footprints];
    const KINDS: [RejectReason; 4] =
        [RejectReason::Snr, RejectReason::Cloud, RejectReason::Saturated, RejectReason::ElevationMismatch];
    for &i in &order[..n_viol] {
        violation[i] = Some(KINDS[vrng.random_range(0..KINDS.len())]);
    }
    let locations = footprint_locations(cfg);
    let fseed = derive(seed, TAG_FOOTPRINT);
    let (waveforms, footprint_truth): (Vec<WaveformRecord>, Vec<FootprintTruth>) = (0..cfg.n_footprints)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(fseed, i as u64);
            let p = locations[i];
            let agb = truth_agb.value_at(p).unwrap_or(cfg.min_agb);
            let z = dem.value_at(p).unwrap_or(t.base);
            footprint::synthesize(format!("fp{i:06}"), p, agb, z, &cfg.waveform, violation[i], &mut rng)
        })
        .unzip();

    let plots = generate_plots(cfg, &truth_agb, &locations);
    Ok(Scene {
        config: cfg.clone(),
        covariates,
        categorical,
        dem,
        trend,
        residual,
        truth_agb,
        waveforms,
        footprint_truth,
        plots,
    })
}

/// Footprint centres: evenly filled tracks at stratified random eastings,
/// each starting at a random northing, or uniform points without tracks.
fn footprint_locations(cfg: &SceneConfig) -> Vec<Point> {
    let n = cfg.n_footprints;
    let mut rng = stream_rng(derive(cfg.seed, TAG_TRACK), 0);
    if cfg.track_spacing <= 0.0 {
        return (0..n)
            .map(|_| {
                Point::new(
                    cfg.origin_x + rng.random_range(0.0..cfg.extent_x),
                    cfg.origin_y + rng.random_range(0.0..cfg.extent_y),
                )
            })
            .collect();
    }
    let per_track = ((cfg.extent_y / cfg.track_spacing).floor() as usize).max(1);
    let n_tracks = n.div_ceil(per_track).max(1);
    let mut out = Vec::with_capacity(n);
    for k in 0..n_tracks {
        let count = n / n_tracks + usize::from(k < n % n_tracks);
        let x = cfg.origin_x + (k as f64 + rng.random_range(0.0..1.0)) * cfg.extent_x / n_tracks as f64;
        let span = count.saturating_sub(1) as f64 * cfg.track_spacing;
        let y0 = cfg.origin_y + rng.random_range(0.0..(cfg.extent_y - span).max(f64::MIN_POSITIVE));
        out.extend((0..count).map(|j| Point::new(x, y0 + j as f64 * cfg.track_spacing)));
    }
    out
}

/// Plots come in clusters centred on randomly chosen footprints (or on
/// random points when there are none), drawn uniformly within the cluster
/// radius and kept inside the extent.
fn generate_plots(cfg: &SceneConfig, truth: &Grid, footprints: &[Point]) -> Vec<PlotRecord> {
    if cfg.n_plots == 0 {
        return Vec::new();
    }
    let mut rng = stream_rng(derive(cfg.seed, TAG_PLOT), 0);
    let r = cfg.plot_cluster_radius.min(0.25 * cfg.extent_x.min(cfg.extent_y));
    let (x0, y0) = (cfg.origin_x + r, cfg.origin_y + r);
    let (x1, y1) = (cfg.origin_x + cfg.extent_x - r, cfg.origin_y + cfg.extent_y - r);
    let centers: Vec<Point> = (0..cfg.plot_clusters)
        .map(|_| {
            let p = if footprints.is_empty() {
                Point::new(rng.random_range(x0..=x1), rng.random_range(y0..=y1))
            } else {
                footprints[rng.random_range(0..footprints.len())]
            };
            Point::new(p.x.clamp(x0, x1), p.y.clamp(y0, y1))
        })
        .collect();
    (0..cfg.n_plots)
        .map(|i| {
            let c = centers[i % centers.len()];
            let rho = r * rng.random::<f64>().sqrt();
            let th = rng.random_range(0.0..std::f64::consts::TAU);
            let p = Point::new(c.x + rho * th.cos(), c.y + rho * th.sin());
            let agb = truth.value_at(p).unwrap_or(cfg.min_agb) + gauss(&mut rng, cfg.plot_noise_sd);
            PlotRecord::with_density(format!("plot{i:04}"), p.x, p.y, cfg.plot_area_ha, agb.max(0.0))
        })
        .collect()
}

/// File names used by [`write_scene`], relative to the scene directory.
pub mod files {
    pub const WAVEFORMS: &str = "waveforms.ndjson";
    pub const PLOTS: &str = "plots.csv";
    pub const DEM: &str = "dem.asc";
    pub const TRUTH: &str = "truth_agb.asc";
    pub const FOOTPRINT_TRUTH: &str = "footprint_truth.csv";
    pub const COVARIATE_DIR: &str = "covariates";
    pub const SCENE_CONFIG: &str = "scene.toml";
    pub const RUN_CONFIG: &str = "run.toml";
}

impl Scene {
    /// Truth AGB averaged onto a map grid whose cell size is a whole multiple
    /// of the scene cell size.
    pub fn truth_at(&self, map: &Grid) -> Result<Grid> {
        let ratio = map.cellsize() / self.truth_agb.cellsize();
        let factor = ratio.round() as usize;
        if factor == 0 || (ratio - factor as f64).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("map cell size {} is not a multiple of the scene's", map.cellsize())));
        }
        let t = resample(&self.truth_agb, factor, Aggregation::Mean)?;
        if !t.same_geometry(map) {
            return Err(Error::GeometryMismatch("map does not cover the scene grid".into()));
        }
        Ok(t)
    }

    /// RMSE of a map against the averaged truth over cells valid in both.
    pub fn truth_rmse(&self, map: &Grid) -> Result<f64> {
        let t = self.truth_at(map)?;
        let (mut se, mut n) = (0.0, 0usize);
        for (a, b) in map.values().iter().zip(t.values()) {
            if !map.is_nodata(*a) && !t.is_nodata(*b) {
                se += (a - b).powi(2);
                n += 1;
            }
        }
        if n == 0 {
            return Err(Error::InvalidArgument("map and truth share no valid cell".into()));
        }
        Ok((se / n as f64).sqrt())
    }

    /// Covariate raster paths relative to the scene directory, in band order.
    pub fn covariate_files(&self) -> Vec<PathBuf> {
        self.covariates.names().iter().map(|n| Path::new(files::COVARIATE_DIR).join(format!("{n}.asc"))).collect()
    }

    /// Writes every scene file plus a ready-to-run pipeline configuration.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir.join(files::COVARIATE_DIR))?;
        for ((_, g), rel) in self.covariates.bands().iter().zip(self.covariate_files()) {
            g.write_ascii(dir.join(rel))?;
        }
        self.dem.write_ascii(dir.join(files::DEM))?;
        self.truth_agb.write_ascii(dir.join(files::TRUTH))?;
        write_waveforms(dir.join(files::WAVEFORMS), &self.waveforms)?;
        write_plots(dir.join(files::PLOTS), &self.plots)?;
        write_footprint_truth(dir.join(files::FOOTPRINT_TRUTH), &self.footprint_truth)?;
        let scene_toml = toml::to_string(&self.config).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(dir.join(files::SCENE_CONFIG), scene_toml)?;
        let run = crate::pipeline::RunConfig::for_scene(self);
        std::fs::write(dir.join(files::RUN_CONFIG), run.to_toml()?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SceneConfig {
        SceneConfig {
            extent_x: 10_000.0,
            extent_y: 8_000.0,
            n_footprints: 300,
            n_plots: 40,
            plot_clusters: 4,
            ..SceneConfig::with_seed(seed)
        }
    }

    #[test]
    fn deterministic_and_well_formed() {
        let a = generate_scene(&small(3)).unwrap();
        let b = generate_scene(&small(3)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.truth_agb, generate_scene(&small(4)).unwrap().truth_agb);
        assert_eq!((a.truth_agb.nrows(), a.truth_agb.ncols()), (32, 40));
        assert!(a.truth_agb.values().iter().all(|&v| v >= a.config.min_agb));
        for w in &a.waveforms {
            assert!(a.truth_agb.contains(w.location()));
            w.validate().unwrap();
        }
        let planted = a.footprint_truth.iter().filter(|t| t.violation.is_some()).count();
        assert_eq!(planted, 30);
        assert_eq!(a.plots.len(), 40);
        assert_eq!(a.covariates.len(), 8);
    }

    #[test]
    fn zero_psill_means_pure_trend() {
        let mut c = small(5);
        c.residual = VariogramModel { nugget: 0.0, psill: 0.0, range: 1000.0 };
        let s = generate_scene(&c).unwrap();
        assert!(s.residual.values().iter().all(|&v| v == 0.0));
        for (t, tr) in s.truth_agb.values().iter().zip(s.trend.values()) {
            assert_eq!(*t, tr.max(c.min_agb));
        }
    }

    #[test]
    fn thread_count_independent() {
        let run = |n| {
            rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap().install(|| generate_scene(&small(8)).unwrap())
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn rejects_bad_config() {
        let mut c = small(1);
        c.cellsize = 300.0;
        assert!(matches!(generate_scene(&c), Err(Error::Config(_))));
        let mut c = small(1);
        c.residual.range = 20_000.0;
        assert!(generate_scene(&c).is_err());
    }
}
