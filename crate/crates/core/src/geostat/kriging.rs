use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{SampleSet, VariogramModel};
use crate::error::{Error, Result};
use crate::raster::Grid;
use crate::spatial::{KdTree, Point};

pub const DEFAULT_NEIGHBORHOOD: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct KrigingEstimate {
    pub estimate: f64,
    /// Ordinary-kriging variance, clamped at 0.
    pub variance: f64,
    /// `(sample index, weight)` for each neighbour used.
    pub weights: Vec<(usize, f64)>,
}

/// Ordinary kriging over a fixed sample set with a prebuilt spatial index.
#[derive(Debug, Clone)]
pub struct Kriger<'a> {
    samples: &'a SampleSet,
    model: VariogramModel,
    tree: KdTree,
    neighborhood: usize,
}

impl<'a> Kriger<'a> {
    pub fn new(samples: &'a SampleSet, model: VariogramModel, neighborhood: usize) -> Result<Self> {
        if neighborhood == 0 {
            return Err(Error::InvalidArgument("kriging neighbourhood must be >= 1".into()));
        }
        Ok(Self { samples, model, tree: KdTree::new(samples.points()), neighborhood })
    }

    /// Estimate at `target` from its nearest `neighborhood` samples.
    ///
    /// The system is scaled by the sill before solving; the weights sum to 1
    /// through the Lagrange row.
    pub fn krige(&self, target: Point) -> Result<KrigingEstimate> {
        let nb = self.tree.k_nearest(target, self.neighborhood);
        let k = nb.len();
        if k == 0 {
            return Err(Error::EmptyNeighborhood);
        }
        let pts = self.samples.points();
        let vals = self.samples.values();
        if k == 1 {
            let i = nb[0].index;
            let variance = 2.0 * self.model.gamma(nb[0].dist);
            return Ok(KrigingEstimate { estimate: vals[i], variance, weights: vec![(i, 1.0)] });
        }
        let scale = self.model.sill();
        if !(scale > 0.0) {
            return Err(Error::SingularSystem);
        }
        let g = |h: f64| self.model.gamma(h) / scale;
        let mut a = DMatrix::<f64>::zeros(k + 1, k + 1);
        let mut b = DVector::<f64>::zeros(k + 1);
        for r in 0..k {
            let pr = pts[nb[r].index];
            for c in r + 1..k {
                let v = g(pr.dist(&pts[nb[c].index]));
                a[(r, c)] = v;
                a[(c, r)] = v;
            }
            a[(r, k)] = 1.0;
            a[(k, r)] = 1.0;
            b[r] = g(nb[r].dist);
        }
        b[k] = 1.0;
        let x = a.lu().solve(&b).ok_or(Error::SingularSystem)?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularSystem);
        }
        let estimate = (0..k).map(|r| x[r] * vals[nb[r].index]).sum();
        let variance = scale * (0..k).map(|r| x[r] * b[r]).sum::<f64>() + scale * x[k];
        Ok(KrigingEstimate {
            estimate,
            variance: variance.max(0.0),
            weights: (0..k).map(|r| (nb[r].index, x[r])).collect(),
        })
    }
}

/// Single-target convenience wrapper around [`Kriger`].
pub fn ordinary_krige(s: &SampleSet, m: &VariogramModel, target: Point, neighborhood: usize) -> Result<KrigingEstimate> {
    Kriger::new(s, *m, neighborhood)?.krige(target)
}

/// Trend plus kriged residual at every valid trend cell centre, with the
/// [`DEFAULT_NEIGHBORHOOD`]. Returns `(final, kriging variance)`.
pub fn regression_krige(trend: &Grid, residuals: &SampleSet, m: &VariogramModel) -> Result<(Grid, Grid)> {
    regression_krige_with(trend, residuals, m, DEFAULT_NEIGHBORHOOD)
}

pub fn regression_krige_with(
    trend: &Grid,
    residuals: &SampleSet,
    m: &VariogramModel,
    neighborhood: usize,
) -> Result<(Grid, Grid)> {
    let kr = Kriger::new(residuals, *m, neighborhood)?;
    let nc = trend.ncols();
    let rows: Vec<Vec<(f64, f64)>> = (0..trend.nrows())
        .into_par_iter()
        .map(|r| {
            (0..nc)
                .map(|c| match trend.get(r, c) {
                    None => Ok((trend.nodata(), trend.nodata())),
                    Some(t) => {
                        let e = kr.krige(trend.cell_center(r, c))?;
                        Ok((t + e.estimate, e.variance))
                    }
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let (fin, var): (Vec<f64>, Vec<f64>) = rows.into_iter().flatten().unzip();
    Ok((trend.with_values(fin)?, trend.with_values(var)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_set(n: usize, seed: u64) -> SampleSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = (0..n).map(|_| Point::new(rng.random_range(0.0..5000.0), rng.random_range(0.0..5000.0))).collect();
        let vals = (0..n).map(|_| rng.random_range(-50.0..50.0)).collect();
        SampleSet::new(pts, vals).unwrap()
    }

    #[test]
    fn single_sample() {
        let s = SampleSet::new(vec![Point::new(1.0, 1.0)], vec![7.5]).unwrap();
        let m = VariogramModel::new(1.0, 2.0, 100.0).unwrap();
        let e = ordinary_krige(&s, &m, Point::new(50.0, 50.0), 32).unwrap();
        assert_eq!(e.estimate, 7.5);
        assert_eq!(e.weights, vec![(0, 1.0)]);
    }

    #[test]
    fn exact_at_samples_without_nugget() {
        let s = random_set(40, 2);
        let m = VariogramModel::new(0.0, 100.0, 1500.0).unwrap();
        let kr = Kriger::new(&s, m, 16).unwrap();
        for (p, v) in s.points().iter().zip(s.values()) {
            let e = kr.krige(*p).unwrap();
            assert!((e.estimate - v).abs() < 1e-8);
            assert!(e.variance < 1e-8);
            let sw: f64 = e.weights.iter().map(|w| w.1).sum();
            assert!((sw - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn local_converges_to_global() {
        let s = random_set(120, 5);
        let m = VariogramModel::new(5.0, 20.0, 2000.0).unwrap();
        let global = Kriger::new(&s, m, s.len()).unwrap();
        let wide = Kriger::new(&s, m, 10_000).unwrap();
        let t = Point::new(2500.0, 1200.0);
        let (a, b) = (global.krige(t).unwrap(), wide.krige(t).unwrap());
        assert!((a.estimate - b.estimate).abs() < 1e-12);
        assert!(a.variance >= 0.0);
    }

    #[test]
    fn errors() {
        let s = random_set(5, 1);
        let m = VariogramModel::new(0.0, 1.0, 10.0).unwrap();
        assert!(Kriger::new(&s, m, 0).is_err());
        let empty = SampleSet::new(vec![], vec![]).unwrap();
        assert!(matches!(ordinary_krige(&empty, &m, Point::new(0.0, 0.0), 4), Err(Error::EmptyNeighborhood)));
        let zero = VariogramModel { nugget: 0.0, psill: 0.0, range: 1.0 };
        assert!(matches!(ordinary_krige(&s, &zero, Point::new(0.0, 0.0), 4), Err(Error::SingularSystem)));
    }

    #[test]
    fn regression_krige_identities() {
        let trend = Grid::from_values(4, 3, 0.0, 0.0, 100.0, -9999.0, (0..12).map(|v| v as f64).collect()).unwrap();
        let mut t2 = trend.clone();
        t2.set(0, 0, -9999.0);
        let zeros = SampleSet::new(
            vec![Point::new(50.0, 50.0), Point::new(250.0, 150.0), Point::new(350.0, 250.0)],
            vec![0.0; 3],
        )
        .unwrap();
        let m = VariogramModel::new(0.0, 10.0, 300.0).unwrap();
        let (f, v) = regression_krige(&t2, &zeros, &m).unwrap();
        assert!(f.get(0, 0).is_none() && v.get(0, 0).is_none());
        for r in 0..3 {
            for c in 0..4 {
                if (r, c) != (0, 0) {
                    assert_eq!(f.get(r, c), t2.get(r, c));
                }
            }
        }
        let res = SampleSet::new(vec![Point::new(150.0, 250.0), Point::new(350.0, 50.0)], vec![4.0, -2.0]).unwrap();
        let (f, v) = regression_krige(&trend, &res, &m).unwrap();
        // (150, 250) is the centre of row 0, col 1
        assert!((f.get(0, 1).unwrap() - (trend.get(0, 1).unwrap() + 4.0)).abs() < 1e-9);
        assert!(v.get(0, 1).unwrap() < 1e-9);
    }
}
