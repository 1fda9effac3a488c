use rayon::prelude::*;

use super::Grid;
use crate::error::Result;

/// Slope (degrees) and roughness (m) rasters derived from a DEM.
#[derive(Debug, Clone)]
pub struct DemDerivatives {
    pub slope: Grid,
    pub roughness: Grid,
}

/// Horn slope over the 3×3 neighbourhood and roughness as the population
/// standard deviation of the valid 3×3 elevations.
///
/// Missing neighbours (edges, nodata) take the centre elevation for the slope.
pub fn dem_derivatives(dem: &Grid) -> Result<DemDerivatives> {
    let cs = dem.cellsize();
    let nd = dem.nodata();
    let cells: Vec<(f64, f64)> = (0..dem.nrows())
        .into_par_iter()
        .flat_map_iter(|row| {
            (0..dem.ncols()).map(move |col| {
                let patch = dem.patch3(row, col);
                match patch[1][1] {
                    None => (nd, nd),
                    Some(z0) => (horn_slope(&patch, z0, cs), patch_std(&patch)),
                }
            })
        })
        .collect();
    let (slope, rough): (Vec<f64>, Vec<f64>) = cells.into_iter().unzip();
    Ok(DemDerivatives { slope: dem.with_values(slope)?, roughness: dem.with_values(rough)? })
}

fn horn_slope(p: &[[Option<f64>; 3]; 3], z0: f64, cs: f64) -> f64 {
    let z = |r: usize, c: usize| p[r][c].unwrap_or(z0);
    let dzdx = ((z(0, 2) + 2.0 * z(1, 2) + z(2, 2)) - (z(0, 0) + 2.0 * z(1, 0) + z(2, 0))) / (8.0 * cs);
    let dzdy = ((z(2, 0) + 2.0 * z(2, 1) + z(2, 2)) - (z(0, 0) + 2.0 * z(0, 1) + z(0, 2))) / (8.0 * cs);
    dzdx.hypot(dzdy).atan().to_degrees()
}

fn patch_std(p: &[[Option<f64>; 3]; 3]) -> f64 {
    let vals: Vec<f64> = p.iter().flatten().flatten().copied().collect();
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Slope (degrees) of the least-squares plane through a 3×3 patch with
/// spacing `cs`. Row 0 is the northern row.
pub fn plane_slope(patch: &[[f64; 3]; 3], cs: f64) -> f64 {
    // x, y ∈ {-cs, 0, cs}; Σx² = 6cs² over the 9 cells.
    let mut sx = 0.0;
    let mut sy = 0.0;
    for (r, line) in patch.iter().enumerate() {
        for (c, &z) in line.iter().enumerate() {
            sx += (c as f64 - 1.0) * cs * z;
            sy += (1.0 - r as f64) * cs * z;
        }
    }
    let denom = 6.0 * cs * cs;
    (sx / denom).hypot(sy / denom).atan().to_degrees()
}
