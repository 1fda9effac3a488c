//! Stepwise BIC selection on a design with two planted predictors, scored by
//! 10-fold cross-validation.
//!
//! cargo run --release --example stepwise_selection

use agbmap::regression::{fit_ols, kfold_cv, stepwise_bic, DesignMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> agbmap::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let n = 120;
    let cols: Vec<Vec<f64>> = (0..6).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let y: Vec<f64> = (0..n).map(|i| 2.0 + 3.0 * cols[0][i] - 1.5 * cols[3][i] + 0.3 * noise.sample(&mut rng)).collect();

    let mut d = DesignMatrix::new(y)?;
    for (j, c) in cols.into_iter().enumerate() {
        d.push_numeric(format!("x{j}"), c)?;
    }

    let full = fit_ols(&d)?;
    let model = stepwise_bic(&d)?;
    println!("full model BIC     {:.2}", full.bic);
    println!("selected model BIC {:.2}", model.bic);
    println!("selected: {:?}", model.selected_features);
    for (name, coef) in model.coefficients() {
        println!("  {name:<10} {coef:>8.4}");
    }
    let cv = kfold_cv(&d, stepwise_bic, 10, 7)?;
    println!("10-fold CV: R2 {:.3}, RMSE {:.3}", cv.r2, cv.rmse);
    Ok(())
}
