use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_random_forest_oob, DesignMatrix, ForestFit, ForestParams};
use crate::error::{Error, Result};
use crate::seed::{derive, stream_rng};

pub const DEFAULT_REPETITIONS: usize = 50;

/// Permutation importance of one predictor over repeated forests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Importance {
    pub feature: String,
    /// Mean %IncMSE over repetitions.
    pub mean: f64,
    /// Sample standard deviation over repetitions (0 for one repetition).
    pub sd: f64,
    /// Per-repetition values.
    pub values: Vec<f64>,
}

/// %IncMSE of every predictor for one fitted forest.
///
/// For each tree the predictor's out-of-bag values are permuted and the tree's
/// OOB MSE recomputed; the score is `100 · mean_t(ΔMSE_t) / mean_t(MSE_t)`.
pub fn permutation_importance(d: &DesignMatrix, fit: &ForestFit, seed: u64) -> Vec<f64> {
    let p = d.p();
    let y = d.target();
    let rows: Vec<Vec<f64>> = (0..d.n()).map(|i| d.row(i)).collect();
    let per_tree: Vec<Option<(f64, Vec<f64>)>> = fit
        .forest
        .trees
        .par_iter()
        .zip(&fit.oob_sets)
        .enumerate()
        .map(|(t, (tree, oob))| {
            if oob.is_empty() {
                return None;
            }
            let m = oob.len() as f64;
            let base = oob.iter().map(|&i| (tree.predict(&rows[i]) - y[i]).powi(2)).sum::<f64>() / m;
            let used = tree.split_features();
            let deltas = (0..p)
                .map(|j| {
                    if used.binary_search(&j).is_err() {
                        return 0.0;
                    }
                    let mut perm: Vec<usize> = oob.clone();
                    perm.shuffle(&mut stream_rng(seed, (t * p + j) as u64));
                    let mut row = Vec::with_capacity(p);
                    let mse = oob
                        .iter()
                        .zip(&perm)
                        .map(|(&i, &k)| {
                            row.clear();
                            row.extend_from_slice(&rows[i]);
                            row[j] = rows[k][j];
                            (tree.predict(&row) - y[i]).powi(2)
                        })
                        .sum::<f64>()
                        / m;
                    mse - base
                })
                .collect();
            Some((base, deltas))
        })
        .collect();

    let mut base_sum = 0.0;
    let mut delta_sum = vec![0.0; p];
    let mut nt = 0usize;
    for (base, deltas) in per_tree.into_iter().flatten() {
        base_sum += base;
        for (s, d) in delta_sum.iter_mut().zip(deltas) {
            *s += d;
        }
        nt += 1;
    }
    if nt == 0 || base_sum <= 0.0 {
        return vec![0.0; p];
    }
    delta_sum.iter().map(|s| 100.0 * s / base_sum).collect()
}

/// %IncMSE mean and spread over `repetitions` forests with derived seeds.
pub fn rf_importance(d: &DesignMatrix, params: &ForestParams, repetitions: usize, seed: u64) -> Result<Vec<Importance>> {
    if repetitions == 0 {
        return Err(Error::InvalidArgument("repetitions must be >= 1".into()));
    }
    let mut values = vec![Vec::with_capacity(repetitions); d.p()];
    for r in 0..repetitions {
        let rs = derive(seed, r as u64);
        let fit = fit_random_forest_oob(d, params, rs)?;
        for (v, s) in values.iter_mut().zip(permutation_importance(d, &fit, derive(rs, u64::MAX))) {
            v.push(s);
        }
    }
    Ok(d.names()
        .into_iter()
        .zip(values)
        .map(|(name, v)| {
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let sd = if v.len() > 1 { (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
            Importance { feature: name.to_string(), mean, sd, values: v }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn signal_beats_noise_and_unused_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 200;
        let x1: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
        let x2: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
        let mut d = DesignMatrix::new(x1.clone()).unwrap();
        d.push_numeric("x1", x1.clone()).unwrap();
        d.push_numeric("dup", x1).unwrap();
        d.push_numeric("noise", x2).unwrap();
        d.push_numeric("flat", vec![1.0; n]).unwrap();
        let params = ForestParams { n_trees: 60, ..Default::default() };
        let imp = rf_importance(&d, &params, 5, 2).unwrap();
        for r in 0..5 {
            assert!(imp[0].values[r] > imp[2].values[r]);
            assert!(imp[1].values[r] > imp[2].values[r]);
        }
        assert_eq!(imp[3].mean, 0.0);
        assert!(imp[0].sd >= 0.0);
    }
}
