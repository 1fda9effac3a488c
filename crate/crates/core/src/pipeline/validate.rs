use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::allometry::{plot_agb_density, PlotRecord};
use crate::error::{Error, Result};
use crate::raster::Grid;
use crate::regression::score;

pub const DEFAULT_MIN_PLOTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValidationCell {
    pub row: usize,
    pub col: usize,
    pub n_plots: usize,
    pub plot_mean: f64,
    pub map_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Validation {
    pub rmsep: f64,
    pub r2: f64,
    pub n_cells: usize,
    pub cells: Vec<ValidationCell>,
}

/// Compares each map cell holding at least `min_count` plots with the mean
/// plot AGB in it. Cells are visited in row-major order.
pub fn validate_map(map: &Grid, plots: &[PlotRecord], min_count: usize) -> Result<Validation> {
    if min_count == 0 {
        return Err(Error::InvalidArgument("min_count must be >= 1".into()));
    }
    let mut by_cell: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for p in plots {
        if let Some(rc) = map.cell_of(p.location()) {
            by_cell.entry(rc).or_default().push(plot_agb_density(p)?);
        }
    }
    let cells: Vec<ValidationCell> = by_cell
        .into_iter()
        .filter(|(_, v)| v.len() >= min_count)
        .filter_map(|((row, col), v)| {
            let map_value = map.get(row, col)?;
            let plot_mean = v.iter().sum::<f64>() / v.len() as f64;
            Some(ValidationCell { row, col, n_plots: v.len(), plot_mean, map_value })
        })
        .collect();
    if cells.is_empty() {
        return Err(Error::NoQualifyingCells { min_count });
    }
    let obs: Vec<f64> = cells.iter().map(|c| c.plot_mean).collect();
    let pred: Vec<f64> = cells.iter().map(|c| c.map_value).collect();
    let (r2, rmsep) = score(&obs, &pred);
    Ok(Validation { rmsep, r2, n_cells: cells.len(), cells })
}

/// Seeded random split of `0..n` into sorted (train, validation) indices,
/// with `round(n · train_fraction)` training items.
pub fn split_plots(n: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(Error::Config(format!("train_fraction {train_fraction} outside [0, 1]")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let k = (n as f64 * train_fraction).round() as usize;
    let (mut a, mut b) = (order[..k].to_vec(), order[k..].to_vec());
    a.sort_unstable();
    b.sort_unstable();
    Ok((a, b))
}

/// One summary row; scores are left empty when no cell qualified.
pub fn write_validation_csv(path: impl AsRef<Path>, grid_size: f64, v: Option<&Validation>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["grid_size", "rmsep", "r2", "n_cells"])?;
    let (rmsep, r2, n) = v.map_or((String::new(), String::new(), 0), |v| (v.rmsep.to_string(), v.r2.to_string(), v.n_cells));
    w.write_record([grid_size.to_string(), rmsep, r2, n.to_string()])?;
    w.flush()?;
    Ok(())
}

pub fn write_validation_cells_csv(path: impl AsRef<Path>, v: Option<&Validation>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["row", "col", "n_plots", "plot_mean", "map_value"])?;
    for c in v.map_or(&[][..], |v| &v.cells) {
        w.serialize(c)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid {
        Grid::from_values(3, 2, 0.0, 0.0, 100.0, -9999.0, vec![10.0, 20.0, 30.0, 40.0, 50.0, -9999.0]).unwrap()
    }

    fn plots_in(map: &Grid, per_cell: usize, f: impl Fn(f64) -> f64) -> Vec<PlotRecord> {
        let mut out = Vec::new();
        for r in 0..map.nrows() {
            for c in 0..map.ncols() {
                let p = map.cell_center(r, c);
                let v = map.get(r, c).unwrap_or(1.0);
                for k in 0..per_cell {
                    out.push(PlotRecord::with_density(format!("{r}{c}{k}"), p.x + k as f64, p.y, 1.0, f(v)));
                }
            }
        }
        out
    }

    #[test]
    fn perfect_map() {
        let g = grid();
        let v = validate_map(&g, &plots_in(&g, 4, |v| v), 4).unwrap();
        assert_eq!(v.n_cells, 5);
        assert_eq!(v.rmsep, 0.0);
        assert_eq!(v.r2, 1.0);
    }

    #[test]
    fn too_few_plots() {
        let g = grid();
        let r = validate_map(&g, &plots_in(&g, 3, |v| v), 4);
        assert!(matches!(r, Err(Error::NoQualifyingCells { min_count: 4 })));
        assert!(validate_map(&g, &[], 0).is_err());
    }

    #[test]
    fn offset_map() {
        let g = grid();
        let v = validate_map(&g, &plots_in(&g, 5, |v| v + 3.0), 2).unwrap();
        assert!((v.rmsep - 3.0).abs() < 1e-12);
    }

    #[test]
    fn split_is_seeded_partition() {
        let (a, b) = split_plots(11, 0.5, 3).unwrap();
        assert_eq!(a.len(), 6);
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..11).collect::<Vec<_>>());
        assert_eq!(split_plots(11, 0.5, 3).unwrap(), (a, b));
        assert!(split_plots(4, 1.5, 0).is_err());
    }
}
