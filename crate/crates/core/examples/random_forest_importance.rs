//! Random forest with a categorical predictor and repeated permutation
//! importance.
//!
//! cargo run --release --example random_forest_importance

use agbmap::regression::{fit_random_forest_oob, rf_importance, score, DesignMatrix, ForestParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> agbmap::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 400;
    let signal: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
    let weak: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
    let noise: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
    let class: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
    let offsets = [0.0, 8.0, -6.0, 3.0];
    let y: Vec<f64> = (0..n)
        .map(|i| 5.0 * signal[i] + 1.0 * weak[i] + offsets[class[i]] + rng.random_range(-2.0..2.0))
        .collect();

    let mut d = DesignMatrix::new(y)?;
    d.push_numeric("signal", signal)?;
    d.push_numeric("weak", weak)?;
    d.push_numeric("noise", noise)?;
    d.push_categorical("class", &class, 4)?;

    let params = ForestParams { n_trees: 200, ..Default::default() };
    let fit = fit_random_forest_oob(&d, &params, 1)?;
    let (obs, pred): (Vec<f64>, Vec<f64>) =
        d.target().iter().zip(&fit.oob_predictions).filter(|(_, p)| !p.is_nan()).map(|(o, p)| (*o, *p)).unzip();
    let (r2, rmse) = score(&obs, &pred);
    println!("OOB R2 {r2:.3}, RMSE {rmse:.3}");

    let mut imp = rf_importance(&d, &params, 10, 2)?;
    imp.sort_by(|a, b| b.mean.total_cmp(&a.mean));
    println!("{:<8} {:>9} {:>7}", "feature", "%IncMSE", "sd");
    for i in &imp {
        println!("{:<8} {:>9.2} {:>7.2}", i.feature, i.mean, i.sd);
    }
    Ok(())
}
