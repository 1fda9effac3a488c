//! Simulates an exponential random field, recovers its semivariogram from
//! scattered samples and predicts held-out points by ordinary kriging.
//!
//! cargo run --release --example variogram_kriging

use agbmap::geostat::{default_lags, empirical_variogram, fit_exponential, Kriger, SampleSet};
use agbmap::spatial::Point;
use agbmap::synth::simulate_exponential;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> agbmap::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (n, cs) = (200, 50.0);
    let (psill, range) = (900.0, 3000.0);
    let field = simulate_exponential(n, n, cs, psill, range, &mut rng)?;
    let at = |i: usize| Point::new((i % n) as f64 * cs, (i / n) as f64 * cs);

    let mut cells: Vec<usize> = (0..n * n).collect();
    for i in 0..1200 {
        let j = rng.random_range(i..cells.len());
        cells.swap(i, j);
    }
    let (train, test) = cells[..1200].split_at(1000);

    let samples = SampleSet::new(train.iter().map(|&i| at(i)).collect(), train.iter().map(|&i| field[i]).collect())?;
    let (w, max_lag) = default_lags(&samples);
    let ev = empirical_variogram(&samples, w, max_lag)?;
    let m = fit_exponential(&ev)?;
    println!("planted: nugget 0, psill {psill}, range {range}");
    println!("fitted:  nugget {:.1}, psill {:.1}, range {:.0}", m.nugget, m.psill, m.range);
    for b in ev.bins.iter().take(8) {
        println!("  lag {:>7.0}  gamma {:>8.1}  model {:>8.1}  pairs {}", b.lag, b.gamma, m.gamma(b.lag), b.pairs);
    }

    let kr = Kriger::new(&samples, m, 32)?;
    let (mut se, mut wsum_err) = (0.0, 0.0f64);
    for &i in test {
        let e = kr.krige(at(i))?;
        se += (e.estimate - field[i]).powi(2);
        let wsum: f64 = e.weights.iter().map(|(_, w)| w).sum();
        wsum_err = wsum_err.max((wsum - 1.0).abs());
    }
    println!("held-out RMSE {:.2} (field sd {:.2})", (se / test.len() as f64).sqrt(), psill.sqrt());
    println!("max |sum of weights - 1| = {wsum_err:.2e}");
    Ok(())
}
