use serde::{Deserialize, Serialize};

use super::WaveformRecord;
use crate::error::{Error, Result};

/// Default noise-threshold multiplier.
pub const DEFAULT_THRESHOLD_K: f64 = 4.5;

/// Background noise statistics of one waveform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseStats {
    pub mean: f64,
    pub sd: f64,
    /// (peak − mean) / sd.
    pub snr: f64,
}

/// Detected signal extent and the noise it was detected against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalBounds {
    pub noise: NoiseStats,
    pub begin_bin: usize,
    pub end_bin: usize,
    pub begin_elev: f64,
    pub end_elev: f64,
}

impl SignalBounds {
    /// Bounds spanning the full record against an explicit noise level.
    pub fn whole(w: &WaveformRecord, noise_mean: f64) -> Self {
        let end = w.len() - 1;
        Self {
            noise: NoiseStats { mean: noise_mean, sd: 0.0, snr: f64::INFINITY },
            begin_bin: 0,
            end_bin: end,
            begin_elev: w.elev(0),
            end_elev: w.elev(end),
        }
    }

    pub fn wext(&self) -> f64 {
        self.begin_elev - self.end_elev
    }
}

fn mean_sd<'a>(vals: impl Iterator<Item = &'a f64>) -> (f64, f64, usize) {
    let v: Vec<f64> = vals.copied().collect();
    let n = v.len();
    if n == 0 {
        return (0.0, 0.0, 0);
    }
    let mean = v.iter().sum::<f64>() / n as f64;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
    (mean, var.sqrt(), n)
}

fn crossing(intens: &[f64], thr: f64) -> Option<(usize, usize)> {
    let first = intens.iter().position(|&v| v > thr)?;
    let last = intens.iter().rposition(|&v| v > thr)?;
    Some((first, last))
}

const MAX_NOISE_PASSES: usize = 20;

/// Signal begin/end: first and last bins above `mean + k·sd` of the noise.
///
/// Noise comes from the first and last 10% of bins. While the detected signal
/// reaches into those windows the statistics are re-estimated from the window
/// bins outside the signal.
pub fn detect_signal_bounds(w: &WaveformRecord, k: f64) -> Result<SignalBounds> {
    w.validate()?;
    if !(k.is_finite() && k > 0.0) {
        return Err(Error::InvalidArgument(format!("threshold multiplier must be > 0, got {k}")));
    }
    let y = &w.intensities;
    let n = y.len();
    let nw = (n / 10).max(1);
    let in_window = |i: usize| i < nw || i >= n - nw;

    let (mut mean, mut sd, _) = mean_sd(y.iter().enumerate().filter(|(i, _)| in_window(*i)).map(|(_, v)| v));
    if sd == 0.0 {
        return if y.iter().any(|&v| v != mean) { Err(Error::DegenerateNoise) } else { Err(Error::NoSignal) };
    }
    let (mut b, mut e) = crossing(y, mean + k * sd).ok_or(Error::NoSignal)?;

    // Re-estimate from the window bins outside the detected signal until the
    // bounds settle; a sub-threshold signal tail otherwise inflates the sd.
    for _ in 0..MAX_NOISE_PASSES {
        if !(0..n).any(|i| in_window(i) && i >= b && i <= e) {
            break;
        }
        let (m2, s2, cnt) = mean_sd(
            y.iter()
                .enumerate()
                .filter(|(i, _)| in_window(*i) && (*i < b || *i > e))
                .map(|(_, v)| v),
        );
        if cnt < 2 || s2 <= 0.0 {
            break;
        }
        let Some((b2, e2)) = crossing(y, m2 + k * s2) else { break };
        let settled = (b2, e2) == (b, e);
        (mean, sd, b, e) = (m2, s2, b2, e2);
        if settled {
            break;
        }
    }
    let peak = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(SignalBounds {
        noise: NoiseStats { mean, sd, snr: (peak - mean) / sd },
        begin_bin: b,
        end_bin: e,
        begin_elev: w.elev(b),
        end_elev: w.elev(e),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wf(intensities: Vec<f64>) -> WaveformRecord {
        WaveformRecord {
            id: "t".into(),
            lon: 0.0,
            lat: 0.0,
            bin_top_elev: 200.0,
            bin_size: 1.0,
            intensities,
            sat_ndx: 0,
            cloud_flag: 15,
            srtm_elev: 100.0,
            acquired_at: None,
        }
    }

    #[test]
    fn flat_noise_edges() {
        let mut y = vec![0.0; 100];
        assert!(matches!(detect_signal_bounds(&wf(y.clone()), 4.5), Err(Error::NoSignal)));
        y[50] = 30.0;
        assert!(matches!(detect_signal_bounds(&wf(y), 4.5), Err(Error::DegenerateNoise)));
    }

    #[test]
    fn alternating_noise_with_spike() {
        // noise ±1 around 10 → sd 1, threshold 14.5
        let mut y: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 9.0 } else { 11.0 }).collect();
        y[40] = 14.0;
        assert!(matches!(detect_signal_bounds(&wf(y.clone()), 4.5), Err(Error::NoSignal)));
        y[40] = 20.0;
        y[60] = 16.0;
        let b = detect_signal_bounds(&wf(y), 4.5).unwrap();
        assert_eq!((b.begin_bin, b.end_bin), (40, 60));
        assert_eq!((b.begin_elev, b.end_elev), (160.0, 140.0));
        assert!((b.noise.sd - 1.0).abs() < 1e-12);
        assert!((b.noise.snr - 10.0).abs() < 1e-12);
    }

    #[test]
    fn affine_scaling_invariance() {
        let y: Vec<f64> = (0..120)
            .map(|i| {
                let x = i as f64;
                10.0 + ((i * 7919) % 13) as f64 * 0.3 + 80.0 * (-(x - 50.0).powi(2) / 18.0).exp()
            })
            .collect();
        let a = detect_signal_bounds(&wf(y.clone()), 4.5).unwrap();
        let scaled: Vec<f64> = y.iter().map(|v| 2.0 * v + 3.0).collect();
        let b = detect_signal_bounds(&wf(scaled), 4.5).unwrap();
        assert_eq!((a.begin_bin, a.end_bin), (b.begin_bin, b.end_bin));
        assert!(matches!(detect_signal_bounds(&wf(y), 0.0), Err(Error::InvalidArgument(_))));
    }
}
