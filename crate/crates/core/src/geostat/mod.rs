//! Semivariograms, exponential model fitting, ordinary and regression kriging.

mod kriging;
mod samples;
mod variogram;

pub use kriging::{
    ordinary_krige, regression_krige, regression_krige_with, Kriger, KrigingEstimate, DEFAULT_NEIGHBORHOOD,
};
pub use samples::{SampleSet, DUPLICATE_TOL};
pub use variogram::{
    default_lags, empirical_variogram, fit_exponential, write_variogram_csv, EmpiricalVariogram, VariogramBin,
    VariogramModel, DEFAULT_LAG_BINS, MIN_FIT_BINS,
};
