use std::path::PathBuf;

/// Errors raised across the mapping chain.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    // waveform
    #[error("invalid waveform record `{id}`: {reason}")]
    InvalidWaveform { id: String, reason: String },
    #[error("no bin exceeds the noise threshold")]
    NoSignal,
    #[error("background noise has zero spread but the waveform varies")]
    DegenerateNoise,
    #[error("Gaussian decomposition did not converge for any component count")]
    FitFailure,
    #[error("empty component list")]
    NoComponents,

    // allometry
    #[error("invalid tree record: {0}")]
    InvalidTree(String),
    #[error("invalid plot record: {0}")]
    InvalidPlot(String),
    #[error("unit error: {0}")]
    UnitError(String),

    // regression
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("design matrix is empty")]
    EmptyDesign,
    #[error("invalid fold count k={k} for n={n}")]
    BadK { k: usize, n: usize },
    #[error("invalid design: {0}")]
    InvalidDesign(String),

    // geostat
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("variogram fit failed: {0}")]
    VariogramFit(String),
    #[error("kriging system is singular")]
    SingularSystem,
    #[error("kriging neighborhood is empty")]
    EmptyNeighborhood,

    // raster
    #[error("resampling factor must be >= 1, got {0}")]
    BadFactor(usize),
    #[error("raster has no valid value range")]
    DegenerateRange,
    #[error("need at least {needed} bands, got {got}")]
    TooFewBands { needed: usize, got: usize },
    #[error("grid geometry mismatch: {0}")]
    GeometryMismatch(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    // pipeline
    #[error("no plot/footprint pairs within {max_dist} m")]
    NoPairs { max_dist: f64 },
    #[error("need at least {needed} calibration pairs, got {got}")]
    InsufficientPairs { needed: usize, got: usize },
    #[error("no validation cell holds at least {min_count} plots")]
    NoQualifyingCells { min_count: usize },
    #[error("invalid configuration: {0}")]
    Config(String),

    // io
    #[error("parse error in {path}: {msg}")]
    Parse { path: PathBuf, msg: String },
    #[error("model file: {0}")]
    ModelFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn parse(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Parse { path: path.into(), msg: msg.into() }
    }
}
