//! Sum-of-Gaussians decomposition of the noise-subtracted waveform.
//!
//! Each candidate component count is fitted by Levenberg–Marquardt on
//! `(ln amplitude, centre, ln sigma)`; the count with the smallest BIC wins.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{SignalBounds, WaveformRecord};
use crate::error::{Error, Result};

pub const DEFAULT_MAX_COMPONENTS: usize = 6;
pub const MAX_COMPONENTS_LIMIT: usize = 6;

/// Bins added on both sides of the detected signal for fitting.
const FIT_PAD_BINS: usize = 3;
/// RSS floor relative to the signal energy; exact fits tie here so the BIC
/// penalty decides.
const RSS_REL_FLOOR: f64 = 1e-12;
const MAX_LM_ITERATIONS: usize = 300;
const LM_REL_TOL: f64 = 1e-8;
/// Components must peak above the signal-detection threshold.
const MIN_AMPLITUDE_SD: f64 = super::DEFAULT_THRESHOLD_K;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub amplitude: f64,
    pub center_elev: f64,
    pub sigma: f64,
}

impl GaussianComponent {
    #[inline]
    pub fn eval(&self, elev: f64) -> f64 {
        let u = (elev - self.center_elev) / self.sigma;
        self.amplitude * (-0.5 * u * u).exp()
    }
}

/// Result of a decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    /// Ordered by centre elevation, highest first.
    pub components: Vec<GaussianComponent>,
    /// Root mean square residual over the fitted bins.
    pub rms: f64,
    /// `(component count, BIC)` of every converged fit.
    pub bic: Vec<(usize, f64)>,
}

#[derive(Debug, Clone)]
struct Fit {
    params: Vec<f64>,
    rss: f64,
    converged: bool,
}

fn model(params: &[f64], x: f64) -> f64 {
    params
        .chunks_exact(3)
        .map(|p| {
            let u = (x - p[1]) / p[2].exp();
            p[0].exp() * (-0.5 * u * u).exp()
        })
        .sum()
}

fn rss_of(params: &[f64], xs: &[f64], ys: &[f64]) -> f64 {
    xs.iter().zip(ys).map(|(x, y)| (y - model(params, *x)).powi(2)).sum()
}

/// Accumulates `JᵀJ` (upper triangle), `Jᵀr` and the residual sum of squares
/// for the log-parameterised model.
fn normal_equations(p: &[f64], xs: &[f64], ys: &[f64], jtj: &mut [f64], jtr: &mut [f64], grad: &mut [f64]) -> f64 {
    let np = p.len();
    jtj.iter_mut().for_each(|v| *v = 0.0);
    jtr.iter_mut().for_each(|v| *v = 0.0);
    let comps: Vec<(f64, f64, f64)> = p.chunks_exact(3).map(|c| (c[0].exp(), c[1], c[2].exp())).collect();
    let mut rss = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        let mut f = 0.0;
        for (j, &(a, mu, s)) in comps.iter().enumerate() {
            let u = (x - mu) / s;
            let g = a * (-0.5 * u * u).exp();
            f += g;
            grad[3 * j] = g;
            grad[3 * j + 1] = g * u / s;
            grad[3 * j + 2] = g * u * u;
        }
        let r = y - f;
        rss += r * r;
        for i in 0..np {
            let gi = grad[i];
            jtr[i] += gi * r;
            let row = &mut jtj[i * np..(i + 1) * np];
            for k in i..np {
                row[k] += gi * grad[k];
            }
        }
    }
    rss
}

/// Levenberg–Marquardt from `init`. Stops early, unconverged, once the
/// iterate leaves the `viable` region.
fn levenberg_marquardt(init: Vec<f64>, xs: &[f64], ys: &[f64], viable: impl Fn(&[f64]) -> bool) -> Fit {
    let np = init.len();
    let mut p = init;
    let mut jtj = vec![0.0; np * np];
    let mut jtr = vec![0.0; np];
    let mut grad = vec![0.0; np];
    let mut rss = normal_equations(&p, xs, ys, &mut jtj, &mut jtr, &mut grad);
    let mut lambda = 1e-3;
    let mut converged = false;

    for _ in 0..MAX_LM_ITERATIONS {
        let mut improved = false;
        for _ in 0..30 {
            let a = DMatrix::from_fn(np, np, |i, k| {
                let v = if i <= k { jtj[i * np + k] } else { jtj[k * np + i] };
                if i == k {
                    v + lambda * v.max(1e-12)
                } else {
                    v
                }
            });
            let Some(step) = a.cholesky().map(|c| c.solve(&DVector::from_column_slice(&jtr))) else {
                lambda *= 10.0;
                continue;
            };
            let cand: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            if cand.iter().any(|v| !v.is_finite()) {
                lambda *= 10.0;
                continue;
            }
            let cand_rss = rss_of(&cand, xs, ys);
            if cand_rss < rss {
                let rel = (rss - cand_rss) / rss.max(f64::MIN_POSITIVE);
                let step_small = step.iter().zip(&cand).all(|(d, v)| d.abs() <= 1e-10 * (1.0 + v.abs()));
                p = cand;
                lambda = (lambda * 0.3).max(1e-12);
                improved = true;
                if rel < LM_REL_TOL || step_small {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
        }
        if converged || !improved {
            // no downhill step left means a stationary point at working precision
            converged = true;
            rss = rss_of(&p, xs, ys);
            break;
        }
        if !viable(&p) {
            return Fit { params: p, rss, converged: false };
        }
        rss = normal_equations(&p, xs, ys, &mut jtj, &mut jtr, &mut grad);
    }
    Fit { params: p, rss, converged }
}

fn smooth(ys: &[f64]) -> Vec<f64> {
    let w = [1.0, 4.0, 6.0, 4.0, 1.0];
    let n = ys.len() as isize;
    (0..n)
        .map(|i| {
            let (mut s, mut t) = (0.0, 0.0);
            for (k, wk) in w.iter().enumerate() {
                let j = i + k as isize - 2;
                if (0..n).contains(&j) {
                    s += wk * ys[j as usize];
                    t += wk;
                }
            }
            s / t
        })
        .collect()
}

/// Local maxima of `ys`, strongest first, each as an initial component.
fn peak_guesses(xs: &[f64], ys: &[f64], bin: f64) -> Vec<[f64; 3]> {
    let sm = smooth(ys);
    let n = sm.len();
    let mut peaks: Vec<(usize, f64)> = (0..n)
        .filter(|&i| {
            sm[i] > 0.0 && (i == 0 || sm[i] > sm[i - 1]) && (i + 1 == n || sm[i] >= sm[i + 1])
        })
        .map(|i| (i, sm[i]))
        .collect();
    peaks.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    peaks.into_iter().map(|(i, h)| guess_at(xs, &sm, i, h, bin)).collect()
}

fn guess_at(xs: &[f64], ys: &[f64], i: usize, h: f64, bin: f64) -> [f64; 3] {
    let half = h / 2.0;
    let mut l = i;
    while l > 0 && ys[l] > half {
        l -= 1;
    }
    let mut r = i;
    while r + 1 < ys.len() && ys[r] > half {
        r += 1;
    }
    let hw = ((r - l) as f64 * bin / 2.0).max(bin);
    let sigma = (hw / 1.1774).max(0.5 * bin);
    [h.max(1e-9).ln(), xs[i], sigma.ln()]
}

/// Components must lie inside the fitted window, be at least one bin wide
/// and peak above the noise threshold.
fn fit_is_admissible(params: &[f64], lo: f64, hi: f64, min_amp: f64, min_sigma: f64) -> bool {
    params.chunks_exact(3).all(|c| {
        let a = c[0].exp();
        let s = c[2].exp();
        a.is_finite() && a >= min_amp && s.is_finite() && s >= min_sigma && c[1] >= lo && c[1] <= hi
    })
}

/// Decomposes the noise-subtracted signal into 1..=`max_components`
/// Gaussians and keeps the count with the smallest BIC.
pub fn decompose_gaussians(
    w: &WaveformRecord,
    bounds: &SignalBounds,
    max_components: usize,
) -> Result<Decomposition> {
    if !(1..=MAX_COMPONENTS_LIMIT).contains(&max_components) {
        return Err(Error::InvalidArgument(format!(
            "max_components must be in 1..={MAX_COMPONENTS_LIMIT}, got {max_components}"
        )));
    }
    let first = bounds.begin_bin.saturating_sub(FIT_PAD_BINS);
    let last = (bounds.end_bin + FIT_PAD_BINS).min(w.len() - 1);
    let xs: Vec<f64> = (first..=last).map(|i| w.elev(i)).collect();
    let ys: Vec<f64> = (first..=last).map(|i| w.intensities[i] - bounds.noise.mean).collect();
    let n = xs.len();
    let energy: f64 = ys.iter().map(|y| y * y).sum();
    let scale = ys.iter().copied().fold(0.0, f64::max);
    if scale <= 0.0 {
        return Err(Error::NoSignal);
    }
    let floor = (RSS_REL_FLOOR * energy).max(f64::MIN_POSITIVE);
    let (lo, hi) = (xs[n - 1], xs[0]);
    let min_amp = (MIN_AMPLITUDE_SD * bounds.noise.sd).max(1e-9 * scale);

    let peaks = peak_guesses(&xs, &ys, w.bin_size);
    let mut best: Option<(f64, Fit)> = None;
    let mut bics = Vec::new();
    let mut prev: Option<Fit> = None;

    for m in 1..=max_components {
        if 3 * m >= n {
            break;
        }
        let mut inits: Vec<Vec<f64>> = Vec::new();
        if peaks.len() >= m {
            inits.push(peaks[..m].iter().flatten().copied().collect());
        }
        if let Some(pf) = &prev {
            // grow the previous solution at its largest residual
            let resid: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| y - model(&pf.params, *x)).collect();
            let (imax, rmax) = resid
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (i, r)| if *r > acc.1 { (i, *r) } else { acc });
            let mut p = pf.params.clone();
            p.extend_from_slice(&guess_at(&xs, &resid, imax, rmax.max(1e-6 * scale), w.bin_size));
            inits.push(p);
        }
        // far outside the admissible set: a vanishing or needle component
        let viable = |p: &[f64]| {
            let pad = (hi - lo).max(w.bin_size);
            fit_is_admissible(p, lo - pad, hi + pad, 0.01 * min_amp, 0.05 * w.bin_size)
        };
        let fit = inits
            .into_iter()
            .map(|p| levenberg_marquardt(p, &xs, &ys, viable))
            .filter(|f| f.converged && fit_is_admissible(&f.params, lo, hi, min_amp, w.bin_size))
            .min_by(|a, b| a.rss.total_cmp(&b.rss));
        let Some(fit) = fit else { continue };
        let bic = n as f64 * (fit.rss.max(floor) / n as f64).ln() + (3 * m) as f64 * (n as f64).ln();
        bics.push((m, bic));
        if best.as_ref().is_none_or(|(b, _)| bic < *b) {
            best = Some((bic, fit.clone()));
        }
        prev = Some(fit);
    }

    let (_, fit) = best.ok_or(Error::FitFailure)?;
    let mut components: Vec<GaussianComponent> = fit
        .params
        .chunks_exact(3)
        .map(|c| GaussianComponent { amplitude: c[0].exp(), center_elev: c[1], sigma: c[2].exp() })
        .collect();
    components.sort_by(|a, b| b.center_elev.total_cmp(&a.center_elev));
    Ok(Decomposition { components, rms: (fit.rss / n as f64).sqrt(), bic: bics })
}
