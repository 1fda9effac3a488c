use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DesignMatrix, Regressor};
use crate::error::{Error, Result};

pub const DEFAULT_FOLDS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct CvScore {
    pub r2: f64,
    pub rmse: f64,
    /// Out-of-fold prediction for every sample.
    pub predictions: Vec<f64>,
}

/// `(R², RMSE)` of predictions against observations, with
/// R² = 1 − SS_res / SS_tot. A constant reference scores R² = 1 only when it
/// is reproduced exactly.
pub fn score(obs: &[f64], pred: &[f64]) -> (f64, f64) {
    let n = obs.len() as f64;
    let mean = obs.iter().sum::<f64>() / n;
    let ss_res: f64 = obs.iter().zip(pred).map(|(o, p)| (o - p) * (o - p)).sum();
    let ss_tot: f64 = obs.iter().map(|o| (o - mean) * (o - mean)).sum();
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res == 0.0 {
        1.0
    } else {
        f64::NEG_INFINITY
    };
    (r2, (ss_res / n).sqrt())
}

/// Fold index per sample: a seeded shuffle dealt round-robin into `k` folds.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % k;
    }
    fold
}

/// k-fold cross-validation; out-of-fold predictions are pooled and scored.
pub fn kfold_cv<M, F>(d: &DesignMatrix, fitter: F, k: usize, seed: u64) -> Result<CvScore>
where
    M: Regressor,
    F: Fn(&DesignMatrix) -> Result<M>,
{
    let n = d.n();
    if k < 2 || k > n {
        return Err(Error::BadK { k, n });
    }
    let fold = fold_assignment(n, k, seed);
    let mut predictions = vec![0.0; n];
    for f in 0..k {
        let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| fold[i] == f);
        let model = fitter(&d.subset_rows(&train))?;
        let pred = model.predict(&d.subset_rows(&test))?;
        for (i, p) in test.into_iter().zip(pred) {
            predictions[i] = p;
        }
    }
    let (r2, rmse) = score(d.target(), &predictions);
    Ok(CvScore { r2, rmse, predictions })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regression::fit_ols;
    use rand::Rng;

    fn line_design(n: usize, noise: impl Fn(usize) -> f64) -> DesignMatrix {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64, ((i * 37) % 11) as f64]).collect();
        let y = (0..n).map(|i| 2.0 * i as f64 - 1.0 + noise(i)).collect();
        DesignMatrix::from_rows(&["a", "b"], &rows, y).unwrap()
    }

    #[test]
    fn exact_data_is_perfect() {
        let d = line_design(30, |_| 0.0);
        let s = kfold_cv(&d, fit_ols, 5, 1).unwrap();
        assert!(s.rmse < 1e-9);
        assert!((s.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bad_k() {
        let d = line_design(5, |_| 0.0);
        assert!(matches!(kfold_cv(&d, fit_ols, 1, 0), Err(Error::BadK { .. })));
        assert!(matches!(kfold_cv(&d, fit_ols, 6, 0), Err(Error::BadK { .. })));
    }

    #[test]
    fn folds_are_disjoint_and_balanced() {
        let f = fold_assignment(23, 5, 4);
        let counts: Vec<usize> = (0..5).map(|k| f.iter().filter(|&&x| x == k).count()).collect();
        assert!(counts.iter().all(|&c| c == 4 || c == 5));
        assert_eq!(counts.iter().sum::<usize>(), 23);
    }

    #[test]
    fn k_equals_n_is_leave_one_out() {
        let d = line_design(10, |i| ((i * 7919) % 13) as f64 - 6.0);
        let s = kfold_cv(&d, fit_ols, 10, 99).unwrap();
        for i in 0..10 {
            let keep: Vec<usize> = (0..10).filter(|&j| j != i).collect();
            let m = fit_ols(&d.subset_rows(&keep)).unwrap();
            let row = d.row(i);
            let p = m.predict_with(|name| Some(row[if name == "a" { 0 } else { 1 }])).unwrap();
            assert!((p - s.predictions[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn independent_target_scores_low() {
        let mut r2s: Vec<f64> = (0..100)
            .map(|seed| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let rows: Vec<Vec<f64>> = (0..40).map(|_| vec![rng.random(), rng.random()]).collect();
                let y = (0..40).map(|_| rng.random()).collect();
                let d = DesignMatrix::from_rows(&["a", "b"], &rows, y).unwrap();
                kfold_cv(&d, fit_ols, DEFAULT_FOLDS, seed).unwrap().r2
            })
            .collect();
        r2s.sort_by(f64::total_cmp);
        assert!(r2s[50] <= 0.1, "median {}", r2s[50]);
    }
}
