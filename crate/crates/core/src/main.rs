use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use agbmap::allometry::{attach_trees, carbon_stock, read_plots, read_trees, write_carbon, write_carbon_csv, CarbonConvention, PlotRecord};
use agbmap::geostat::{default_lags, empirical_variogram, fit_exponential, write_variogram_csv, SampleSet};
use agbmap::pipeline::{
    calibration_pairs, calibration_sweep, fit_glas_agb_model, predict_footprints, run_pipeline, size_label,
    validate_map, write_footprint_agb_csv, write_sweep_csv, write_validation_cells_csv, write_validation_csv,
    RunConfig, TrendKind, DEFAULT_MIN_PLOTS, DEFAULT_SWEEP_DISTANCES,
};
use agbmap::raster::{glcm_textures, Grid, DEFAULT_LEVELS};
use agbmap::regression::{Model, DEFAULT_FOLDS};
use agbmap::synth::{generate_scene, SceneConfig};
use agbmap::waveform::{
    kept_metrics, process_waveforms, read_metrics_csv, read_waveforms, write_filter_csv, write_metrics_csv,
    WaveformConfig,
};
use agbmap::{Error, Result};

/// Aboveground-biomass mapping from waveform LiDAR footprints, field plots
/// and raster covariates.
#[derive(Parser)]
#[command(name = "agbmap", version)]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Master seed; overrides the configuration file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Map cell size in meters; repeat for several maps.
    #[arg(long = "grid-size", global = true)]
    grid_sizes: Vec<f64>,
    /// Log progress and warnings to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene with known truth.
    Simulate(SimulateArgs),
    /// Screen waveforms and write the per-footprint filter report.
    Filter(WaveformArgs),
    /// Write metrics of every waveform passing the filter.
    Metrics(WaveformArgs),
    /// Cross-validate the footprint AGB model over pairing distances.
    Sweep(SweepArgs),
    /// Fit the footprint AGB model and predict AGB at every footprint.
    Calibrate(CalibrateArgs),
    /// Run the whole chain from a run configuration.
    Map(MapArgs),
    /// Score an AGB map against plots.
    Validate(ValidateArgs),
    /// Total carbon stock of an AGB map.
    Carbon(CarbonArgs),
    /// Empirical and fitted exponential semivariogram of point samples.
    Variogram(VariogramArgs),
    /// GLCM texture bands of a raster.
    Textures(TexturesArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Scene configuration (TOML); defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    footprints: Option<usize>,
    #[arg(long)]
    plots: Option<usize>,
}

#[derive(Args)]
struct WaveformArgs {
    /// Waveform records (NDJSON).
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    dem: Option<PathBuf>,
    /// Run configuration whose `waveform` section sets the thresholds.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PlotInputs {
    /// Plot table (CSV).
    #[arg(long)]
    plots: PathBuf,
    /// Optional tree table for plots without a measured density.
    #[arg(long)]
    trees: Option<PathBuf>,
}

impl PlotInputs {
    fn load(&self) -> Result<Vec<PlotRecord>> {
        let mut plots = read_plots(&self.plots)?;
        if let Some(t) = &self.trees {
            attach_trees(&mut plots, read_trees(t)?);
        }
        Ok(plots)
    }
}

#[derive(Args)]
struct SweepArgs {
    /// Footprint metrics written by `metrics`.
    #[arg(long)]
    metrics: PathBuf,
    #[command(flatten)]
    plots: PlotInputs,
    /// Pairing distances in meters.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SWEEP_DISTANCES)]
    distances: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_FOLDS)]
    folds: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    metrics: PathBuf,
    #[command(flatten)]
    plots: PlotInputs,
    #[arg(long, default_value_t = 250.0)]
    max_dist: f64,
    /// Fitted model (text).
    #[arg(long)]
    model_out: PathBuf,
    /// Footprint AGB table (`x,y,agb`).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MapArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trend: Option<TrendKind>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    map: PathBuf,
    #[command(flatten)]
    plots: PlotInputs,
    #[arg(long, default_value_t = DEFAULT_MIN_PLOTS)]
    min_plots: usize,
    #[arg(long)]
    out: PathBuf,
    /// Optional per-cell comparison table.
    #[arg(long)]
    cells_out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Convention {
    CellArea,
    LiteralFactor,
}

#[derive(Args)]
struct CarbonArgs {
    #[arg(long)]
    map: PathBuf,
    #[arg(long, value_enum, default_value_t = Convention::CellArea)]
    convention: Convention,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VariogramArgs {
    /// Samples as `x,y,value` CSV with a header.
    #[arg(long)]
    samples: PathBuf,
    #[arg(long)]
    bin_width: Option<f64>,
    #[arg(long)]
    max_lag: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TexturesArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 3)]
    window: usize,
    #[arg(long, default_value_t = DEFAULT_LEVELS)]
    levels: usize,
    /// Directory receiving `<stem>_<statistic>.asc`.
    #[arg(long)]
    out_dir: PathBuf,
}

fn waveform_config(path: Option<&Path>) -> Result<WaveformConfig> {
    Ok(path.map(RunConfig::load).transpose()?.map(|c| c.waveform).unwrap_or_default())
}

fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Simulate(a) => {
            let mut cfg: SceneConfig = match &a.config {
                Some(p) => toml::from_str(&std::fs::read_to_string(p)?).map_err(|e| Error::Config(e.to_string()))?,
                None => SceneConfig::default(),
            };
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.n_footprints = a.footprints.unwrap_or(cfg.n_footprints);
            cfg.n_plots = a.plots.unwrap_or(cfg.n_plots);
            generate_scene(&cfg)?.write(&a.out)?;
        }
        Command::Filter(a) => {
            let dem = a.dem.as_ref().map(Grid::read_ascii).transpose()?;
            let res = process_waveforms(&read_waveforms(&a.input)?, dem.as_ref(), &waveform_config(a.config.as_deref())?);
            write_filter_csv(&a.out, &res)?;
        }
        Command::Metrics(a) => {
            let dem = a.dem.as_ref().map(Grid::read_ascii).transpose()?;
            let res = process_waveforms(&read_waveforms(&a.input)?, dem.as_ref(), &waveform_config(a.config.as_deref())?);
            write_metrics_csv(&a.out, &kept_metrics(&res))?;
        }
        Command::Sweep(a) => {
            let rows = calibration_sweep(
                &a.plots.load()?,
                &read_metrics_csv(&a.metrics)?,
                &a.distances,
                a.folds,
                seed.unwrap_or(0),
            )?;
            write_sweep_csv(&a.out, &rows)?;
        }
        Command::Calibrate(a) => {
            let fps = read_metrics_csv(&a.metrics)?;
            let pairs = calibration_pairs(&a.plots.load()?, &fps, a.max_dist)?;
            if pairs.is_empty() {
                return Err(Error::NoPairs { max_dist: a.max_dist });
            }
            let model = fit_glas_agb_model(&pairs)?;
            Model::Linear(model.clone()).save(&a.model_out)?;
            write_footprint_agb_csv(&a.out, &predict_footprints(&model, &fps)?)?;
        }
        Command::Map(a) => {
            let mut cfg = RunConfig::load(&a.config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if !cli.grid_sizes.is_empty() {
                cfg.grid_sizes = cli.grid_sizes.clone();
            }
            if let Some(t) = a.trend {
                cfg.map.trend = t;
            }
            if let Some(o) = a.out {
                cfg.output_dir = std::path::absolute(o)?;
            }
            let out = run_pipeline(&cfg)?;
            for m in &out.maps {
                let v = m.validation.as_ref();
                log::info!(
                    "{} m: RMSEP {} R2 {} over {} cells, {:.1} kt C",
                    size_label(m.product.grid_size),
                    v.map_or(f64::NAN, |v| v.rmsep),
                    v.map_or(f64::NAN, |v| v.r2),
                    v.map_or(0, |v| v.n_cells),
                    m.carbon.total_ktc
                );
            }
        }
        Command::Validate(a) => {
            let map = Grid::read_ascii(&a.map)?;
            let v = validate_map(&map, &a.plots.load()?, a.min_plots)?;
            write_validation_csv(&a.out, map.cellsize(), Some(&v))?;
            if let Some(p) = &a.cells_out {
                write_validation_cells_csv(p, Some(&v))?;
            }
        }
        Command::Carbon(a) => {
            let convention = match a.convention {
                Convention::CellArea => CarbonConvention::CellArea,
                Convention::LiteralFactor => CarbonConvention::LiteralFactor,
            };
            let c = carbon_stock(&Grid::read_ascii(&a.map)?, convention)?;
            match &a.out {
                Some(p) => write_carbon_csv(p, &c)?,
                None => write_carbon(std::io::stdout().lock(), &c)?,
            }
        }
        Command::Variogram(a) => {
            let s = SampleSet::read_csv(&a.samples)?;
            let (w, h) = default_lags(&s);
            let ev = empirical_variogram(&s, a.bin_width.unwrap_or(w), a.max_lag.unwrap_or(h))?;
            let m = fit_exponential(&ev)?;
            write_variogram_csv(&a.out, &ev, Some(&m))?;
        }
        Command::Textures(a) => {
            let g = Grid::read_ascii(&a.input)?;
            let stem = a.input.file_stem().and_then(|s| s.to_str()).unwrap_or("band");
            std::fs::create_dir_all(&a.out_dir)?;
            for (name, band) in glcm_textures(&g, a.window, a.levels)?.bands() {
                band.write_ascii(a.out_dir.join(format!("{stem}_{name}.asc")))?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("agbmap: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("agbmap: {e}");
            ExitCode::from(1)
        }
    }
}
