// Negated comparisons are deliberate: NaN must fail the positivity checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod allometry;
pub mod error;
pub mod geostat;
pub mod raster;
pub mod regression;
pub mod pipeline;
pub mod seed;
pub mod spatial;
pub mod synth;
pub mod waveform;

pub use error::{Error, Result};
