//! Georeferenced grids and covariate-engineering kernels.

mod dem;
mod glcm;
mod grid;
mod matching;
mod pca;
mod resample;

pub use dem::{dem_derivatives, plane_slope, DemDerivatives};
pub use glcm::{glcm_textures, quantize, Glcm, TextureStats, DEFAULT_LEVELS, OFFSETS, TEXTURE_NAMES};
pub use grid::{fmt_sig9, Grid, GridStack, DEFAULT_NODATA};
pub use matching::{match_points, match_with_index, PointMatch};
pub use pca::{pca_stack, reconstruct, temporal_composites, PcaResult};
pub use resample::{resample, Aggregation};
