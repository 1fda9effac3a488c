use rayon::prelude::*;

use super::Grid;
use crate::error::{Error, Result};

/// Block aggregation scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    Mean,
    Median,
    /// Most frequent value, smallest on ties; for class maps.
    Mode,
}

/// Aggregates `factor`×`factor` blocks into one cell, ignoring nodata.
///
/// The output is anchored at the north-west corner. When the dimensions are
/// not multiples of `factor`, the last row/column of blocks is partial.
pub fn resample(g: &Grid, factor: usize, scheme: Aggregation) -> Result<Grid> {
    if factor == 0 {
        return Err(Error::BadFactor(factor));
    }
    if factor == 1 {
        return Ok(g.clone());
    }
    let ncols = g.ncols().div_ceil(factor);
    let nrows = g.nrows().div_ceil(factor);
    let cs = g.cellsize() * factor as f64;
    let top = g.yll() + g.height();
    let yll = top - nrows as f64 * cs;

    let values: Vec<f64> = (0..nrows)
        .into_par_iter()
        .flat_map_iter(|orow| {
            let mut buf = Vec::with_capacity(factor * factor);
            (0..ncols)
                .map(|ocol| {
                    buf.clear();
                    for r in orow * factor..((orow + 1) * factor).min(g.nrows()) {
                        for c in ocol * factor..((ocol + 1) * factor).min(g.ncols()) {
                            if let Some(v) = g.get(r, c) {
                                buf.push(v);
                            }
                        }
                    }
                    aggregate(&mut buf, scheme).unwrap_or(g.nodata())
                })
                .collect::<Vec<_>>()
        })
        .collect();
    Grid::from_values(ncols, nrows, g.xll(), yll, cs, g.nodata(), values)
}

fn aggregate(buf: &mut [f64], scheme: Aggregation) -> Option<f64> {
    if buf.is_empty() {
        return None;
    }
    Some(match scheme {
        Aggregation::Mean => buf.iter().sum::<f64>() / buf.len() as f64,
        Aggregation::Median => median(buf),
        Aggregation::Mode => mode(buf),
    })
}

fn mode(buf: &mut [f64]) -> f64 {
    buf.sort_by(f64::total_cmp);
    let (mut best, mut best_n) = (buf[0], 0);
    let mut i = 0;
    while i < buf.len() {
        let j = buf[i..].iter().position(|v| *v != buf[i]).map_or(buf.len(), |k| i + k);
        if j - i > best_n {
            best = buf[i];
            best_n = j - i;
        }
        i = j;
    }
    best
}

fn median(buf: &mut [f64]) -> f64 {
    buf.sort_by(f64::total_cmp);
    let n = buf.len();
    if n % 2 == 1 {
        buf[n / 2]
    } else {
        0.5 * (buf[n / 2 - 1] + buf[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn g2(vals: [f64; 4]) -> Grid {
        Grid::from_values(2, 2, 0.0, 0.0, 25.0, -9999.0, vals.to_vec()).unwrap()
    }

    #[test]
    fn block_mean_and_median() {
        let g = g2([1.0, 2.0, 3.0, 4.0]);
        assert_eq!(resample(&g, 2, Aggregation::Mean).unwrap().values(), &[2.5]);
        assert_eq!(resample(&g, 2, Aggregation::Median).unwrap().values(), &[2.5]);
        let g = g2([1.0, 2.0, 3.0, 100.0]);
        assert_eq!(resample(&g, 2, Aggregation::Mean).unwrap().values(), &[26.5]);
        assert_eq!(resample(&g, 2, Aggregation::Median).unwrap().values(), &[2.5]);
        let classes = Grid::from_values(2, 2, 0.0, 0.0, 25.0, -9999.0, vec![3.0, 1.0, 3.0, 1.0]).unwrap();
        assert_eq!(resample(&classes, 2, Aggregation::Mode).unwrap().values(), &[1.0]);
        let out = resample(&g, 2, Aggregation::Mean).unwrap();
        assert_eq!(out.cellsize(), 50.0);
    }

    #[test]
    fn nodata_handling() {
        let g = g2([-9999.0, 2.0, 4.0, -9999.0]);
        assert_eq!(resample(&g, 2, Aggregation::Mean).unwrap().values(), &[3.0]);
        let g = g2([-9999.0; 4]);
        assert_eq!(resample(&g, 2, Aggregation::Median).unwrap().values(), &[-9999.0]);
        assert!(matches!(resample(&g, 0, Aggregation::Mean), Err(Error::BadFactor(0))));
    }

    #[test]
    fn partial_blocks_keep_north_west_anchor() {
        let g = Grid::from_values(3, 3, 0.0, 0.0, 1.0, -1.0, (0..9).map(f64::from).collect()).unwrap();
        let out = resample(&g, 2, Aggregation::Mean).unwrap();
        assert_eq!((out.ncols(), out.nrows()), (2, 2));
        assert_eq!(out.yll() + out.height(), 3.0);
        assert_eq!(out.values(), &[2.0, 3.5, 6.5, 8.0]);
    }

    proptest! {
        #[test]
        fn constant_grid_is_invariant(c in -1e3f64..1e3, f in 1usize..5) {
            let g = Grid::from_values(8, 8, 0.0, 0.0, 10.0, -9999.0, vec![c; 64]).unwrap();
            let out = resample(&g, f, Aggregation::Median).unwrap();
            prop_assert!(out.values().iter().all(|v| *v == c));
        }

        #[test]
        fn mean_conserves_global_mean(vals in proptest::collection::vec(0.0f64..500.0, 144), f in prop::sample::select(vec![1usize, 2, 3, 4, 6])) {
            let g = Grid::from_values(12, 12, 0.0, 0.0, 10.0, -9999.0, vals).unwrap();
            let out = resample(&g, f, Aggregation::Mean).unwrap();
            prop_assert!((out.mean().unwrap() - g.mean().unwrap()).abs() < 1e-9);
        }
    }
}
