//! Gaussian random fields on regular grids.

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// In-place 2-D FFT of a row-major `m1 × m2` array.
fn fft2(data: &mut [Complex64], m1: usize, m2: usize, inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let (row_fft, col_fft) = if inverse {
        (planner.plan_fft_inverse(m2), planner.plan_fft_inverse(m1))
    } else {
        (planner.plan_fft_forward(m2), planner.plan_fft_forward(m1))
    };
    for row in data.chunks_exact_mut(m2) {
        row_fft.process(row);
    }
    let mut col = vec![Complex64::new(0.0, 0.0); m1];
    for j in 0..m2 {
        for i in 0..m1 {
            col[i] = data[i * m2 + j];
        }
        col_fft.process(&mut col);
        for i in 0..m1 {
            data[i * m2 + j] = col[i];
        }
    }
}

fn normal_complex(rng: &mut impl Rng) -> Complex64 {
    Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// Zero-mean stationary field with covariance `psill·exp(−3h/range)` at the
/// nodes of an `nrows × ncols` grid, by circulant embedding on a doubled
/// torus. Slightly negative embedding eigenvalues are truncated at zero.
pub fn simulate_exponential(
    nrows: usize,
    ncols: usize,
    cellsize: f64,
    psill: f64,
    range: f64,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    if nrows == 0 || ncols == 0 || !(cellsize > 0.0) || !(psill >= 0.0) || !(range > 0.0) {
        return Err(Error::InvalidArgument("field size, cellsize and range must be positive".into()));
    }
    if psill == 0.0 {
        return Ok(vec![0.0; nrows * ncols]);
    }
    let (m1, m2) = (2 * nrows, 2 * ncols);
    let mut c = vec![Complex64::new(0.0, 0.0); m1 * m2];
    for i in 0..m1 {
        let di = i.min(m1 - i) as f64;
        for j in 0..m2 {
            let dj = j.min(m2 - j) as f64;
            let h = cellsize * di.hypot(dj);
            c[i * m2 + j] = Complex64::new(psill * (-3.0 * h / range).exp(), 0.0);
        }
    }
    fft2(&mut c, m1, m2, false);
    let n = (m1 * m2) as f64;
    let min_eig = c.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
    if min_eig < -1e-6 * psill * n {
        log::warn!("circulant embedding has negative eigenvalue {min_eig:.3e}; truncated");
    }
    let mut w: Vec<Complex64> =
        c.iter().map(|lam| normal_complex(rng) * (lam.re.max(0.0) / n).sqrt()).collect();
    fft2(&mut w, m1, m2, false);
    let mut out = Vec::with_capacity(nrows * ncols);
    for i in 0..nrows {
        out.extend(w[i * m2..i * m2 + ncols].iter().map(|z| z.re));
    }
    Ok(out)
}

/// Smooth field: white noise convolved with a Gaussian kernel of standard
/// deviation `length_scale`, rescaled to zero mean and unit variance over the
/// grid.
pub fn smooth_field(nrows: usize, ncols: usize, cellsize: f64, length_scale: f64, rng: &mut impl Rng) -> Result<Vec<f64>> {
    if nrows == 0 || ncols == 0 || !(cellsize > 0.0) || !(length_scale > 0.0) {
        return Err(Error::InvalidArgument("field size, cellsize and length scale must be positive".into()));
    }
    let pad = (3.0 * length_scale / cellsize).ceil() as usize;
    let (m1, m2) = (nrows + 2 * pad, ncols + 2 * pad);
    let mut w: Vec<Complex64> = (0..m1 * m2).map(|_| Complex64::new(rng.sample(StandardNormal), 0.0)).collect();
    fft2(&mut w, m1, m2, false);
    let s = length_scale / cellsize;
    for i in 0..m1 {
        let fi = i.min(m1 - i) as f64 / m1 as f64;
        for j in 0..m2 {
            let fj = j.min(m2 - j) as f64 / m2 as f64;
            let k2 = fi * fi + fj * fj;
            w[i * m2 + j] *= (-2.0 * std::f64::consts::PI.powi(2) * s * s * k2).exp();
        }
    }
    fft2(&mut w, m1, m2, true);
    let mut out = Vec::with_capacity(nrows * ncols);
    for i in pad..pad + nrows {
        out.extend(w[i * m2 + pad..i * m2 + pad + ncols].iter().map(|z| z.re));
    }
    let n = out.len() as f64;
    let mean = out.iter().sum::<f64>() / n;
    let sd = (out.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let sd = if sd > 0.0 { sd } else { 1.0 };
    out.iter_mut().for_each(|v| *v = (*v - mean) / sd);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exponential_field_moments() {
        // average the lag-1 covariance over many small realisations
        let (nr, nc, cs, psill, range) = (32, 32, 10.0, 4.0, 60.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (mut var, mut c1, mut cnt) = (0.0, 0.0, 0.0);
        for _ in 0..200 {
            let f = simulate_exponential(nr, nc, cs, psill, range, &mut rng).unwrap();
            for r in 0..nr {
                for c in 0..nc - 1 {
                    var += f[r * nc + c].powi(2);
                    c1 += f[r * nc + c] * f[r * nc + c + 1];
                    cnt += 1.0;
                }
            }
        }
        let (var, c1) = (var / cnt, c1 / cnt);
        assert!((var / psill - 1.0).abs() < 0.05, "var {var}");
        let expect = psill * (-3.0 * cs / range).exp();
        assert!((c1 / expect - 1.0).abs() < 0.08, "cov {c1} vs {expect}");
    }

    #[test]
    fn smooth_field_is_standardised_and_smooth() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = smooth_field(60, 80, 100.0, 800.0, &mut rng).unwrap();
        let n = f.len() as f64;
        let mean = f.iter().sum::<f64>() / n;
        let var = f.iter().map(|v| v * v).sum::<f64>() / n;
        assert!(mean.abs() < 1e-9 && (var - 1.0).abs() < 1e-9);
        let lag1: f64 = (0..60).flat_map(|r| (0..79).map(move |c| (r, c))).map(|(r, c)| f[r * 80 + c] * f[r * 80 + c + 1]).sum::<f64>()
            / (60.0 * 79.0);
        assert!(lag1 > 0.9);
        assert_eq!(simulate_exponential(3, 3, 1.0, 0.0, 1.0, &mut rng).unwrap(), vec![0.0; 9]);
    }
}
