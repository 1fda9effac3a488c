use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::SampleSet;
use crate::error::{Error, Result};

pub const DEFAULT_LAG_BINS: usize = 30;
/// Fewest non-empty bins accepted by [`fit_exponential`].
pub const MIN_FIT_BINS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariogramBin {
    /// Mean separation of the pairs in the bin.
    pub lag: f64,
    pub gamma: f64,
    pub pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalVariogram {
    /// Non-empty bins in increasing lag order.
    pub bins: Vec<VariogramBin>,
    pub bin_width: f64,
    pub max_lag: f64,
}

/// Exponential semivariogram `γ(h) = nugget + psill·(1 − exp(−3h/range))`
/// for `h > 0` and `γ(0) = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariogramModel {
    pub nugget: f64,
    pub psill: f64,
    pub range: f64,
}

impl VariogramModel {
    pub fn new(nugget: f64, psill: f64, range: f64) -> Result<Self> {
        let m = Self { nugget, psill, range };
        if !(nugget >= 0.0 && psill >= 0.0 && range > 0.0 && nugget.is_finite() && psill.is_finite() && range.is_finite()) {
            return Err(Error::InvalidArgument(format!("invalid variogram parameters {m:?}")));
        }
        Ok(m)
    }

    pub fn sill(&self) -> f64 {
        self.nugget + self.psill
    }

    /// Correlation shape `1 − exp(−3h/range)`.
    #[inline]
    pub fn shape(&self, h: f64) -> f64 {
        1.0 - (-3.0 * h / self.range).exp()
    }

    #[inline]
    pub fn gamma(&self, h: f64) -> f64 {
        if h <= 0.0 {
            0.0
        } else {
            self.nugget + self.psill * self.shape(h)
        }
    }

    /// Covariance `sill − γ(h)`.
    #[inline]
    pub fn covariance(&self, h: f64) -> f64 {
        self.sill() - self.gamma(h)
    }
}

/// Default `(bin_width, max_lag)`: [`DEFAULT_LAG_BINS`] bins up to half the
/// bounding-box diagonal.
pub fn default_lags(s: &SampleSet) -> (f64, f64) {
    let max_lag = s.half_diagonal();
    (max_lag / DEFAULT_LAG_BINS as f64, max_lag)
}

/// Method-of-moments semivariogram. Pair separation `d < max_lag` falls into
/// bin `⌊d / bin_width⌋`; empty bins are omitted.
pub fn empirical_variogram(s: &SampleSet, bin_width: f64, max_lag: f64) -> Result<EmpiricalVariogram> {
    if s.len() < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: s.len() });
    }
    if !(bin_width > 0.0 && bin_width.is_finite()) || !(max_lag > 0.0 && max_lag.is_finite()) {
        return Err(Error::InvalidArgument(format!("bin width {bin_width} and max lag {max_lag} must be > 0")));
    }
    let nb = (max_lag / bin_width).ceil() as usize;
    let pts = s.points();
    let vals = s.values();
    // per-row partial sums, reduced in row order for thread-count independence
    let rows: Vec<Vec<(f64, f64, usize)>> = (0..pts.len())
        .into_par_iter()
        .map(|i| {
            let mut acc = vec![(0.0, 0.0, 0usize); nb];
            for j in i + 1..pts.len() {
                let d = pts[i].dist(&pts[j]);
                if d < max_lag {
                    let b = ((d / bin_width) as usize).min(nb - 1);
                    let dv = vals[i] - vals[j];
                    acc[b].0 += d;
                    acc[b].1 += dv * dv;
                    acc[b].2 += 1;
                }
            }
            acc
        })
        .collect();
    let mut tot = vec![(0.0, 0.0, 0usize); nb];
    for row in rows {
        for (t, r) in tot.iter_mut().zip(row) {
            t.0 += r.0;
            t.1 += r.1;
            t.2 += r.2;
        }
    }
    let bins = tot
        .into_iter()
        .filter(|t| t.2 > 0)
        .map(|(sd, sq, n)| VariogramBin { lag: sd / n as f64, gamma: sq / (2.0 * n as f64), pairs: n })
        .collect();
    Ok(EmpiricalVariogram { bins, bin_width, max_lag })
}

/// Weighted SSE and optimal nonnegative `(nugget, psill)` for a fixed range.
fn fit_linear(ev: &EmpiricalVariogram, range: f64) -> (f64, f64, f64) {
    let (mut sw, mut swf, mut swff, mut swg, mut swfg) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for b in &ev.bins {
        let w = b.pairs as f64;
        let f = 1.0 - (-3.0 * b.lag / range).exp();
        sw += w;
        swf += w * f;
        swff += w * f * f;
        swg += w * b.gamma;
        swfg += w * f * b.gamma;
    }
    let sse = |c0: f64, c1: f64| {
        ev.bins
            .iter()
            .map(|b| {
                let r = b.gamma - c0 - c1 * (1.0 - (-3.0 * b.lag / range).exp());
                b.pairs as f64 * r * r
            })
            .sum::<f64>()
    };
    let mut cands = Vec::with_capacity(4);
    let det = sw * swff - swf * swf;
    if det.abs() > 1e-12 * sw * swff {
        let c0 = (swg * swff - swf * swfg) / det;
        let c1 = (sw * swfg - swf * swg) / det;
        if c0 >= 0.0 && c1 >= 0.0 {
            cands.push((c0, c1));
        }
    }
    cands.push(((swg / sw).max(0.0), 0.0));
    if swff > 0.0 {
        cands.push((0.0, (swfg / swff).max(0.0)));
    }
    cands
        .into_iter()
        .map(|(c0, c1)| (sse(c0, c1), c0, c1))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .unwrap_or((f64::INFINITY, 0.0, 0.0))
}

/// Weighted least-squares exponential fit with pair counts as weights.
///
/// For a fixed range the nugget and partial sill solve a nonnegative linear
/// problem exactly; the range is searched over `(0, 3·max_lag]` by a
/// log-spaced scan refined with golden sections.
pub fn fit_exponential(ev: &EmpiricalVariogram) -> Result<VariogramModel> {
    if ev.bins.len() < MIN_FIT_BINS {
        return Err(Error::VariogramFit(format!(
            "need at least {MIN_FIT_BINS} non-empty lag bins, got {}",
            ev.bins.len()
        )));
    }
    if ev.bins.iter().any(|b| !(b.gamma.is_finite() && b.lag.is_finite())) {
        return Err(Error::VariogramFit("non-finite semivariance".into()));
    }
    let hi = 3.0 * ev.max_lag;
    let lo = hi * 1e-4;
    let n = 240;
    let at = |k: f64| lo * (hi / lo).powf(k / n as f64);
    let obj = |r: f64| fit_linear(ev, r).0;
    let scan: Vec<f64> = (0..=n).map(|k| obj(at(k as f64))).collect();
    let kbest = (0..=n).min_by(|&a, &b| scan[a].total_cmp(&scan[b]).then(a.cmp(&b))).unwrap_or(n);

    // golden-section refinement in log-range between the scan neighbours
    let (mut a, mut b) = ((kbest.max(1) - 1) as f64, (kbest + 1).min(n) as f64);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (obj(at(c)), obj(at(d)));
    for _ in 0..60 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = obj(at(c));
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = obj(at(d));
        }
    }
    let mut range = at(0.5 * (a + b));
    if scan[kbest] < obj(range) {
        range = at(kbest as f64);
    }
    let (sse, nugget, psill) = fit_linear(ev, range);
    if !sse.is_finite() {
        return Err(Error::VariogramFit("objective is not finite".into()));
    }
    VariogramModel::new(nugget, psill, range)
}

/// Variogram report: one row per bin plus the fitted parameters (blank when
/// no model is given) repeated on every row.
pub fn write_variogram_csv(path: impl AsRef<Path>, ev: &EmpiricalVariogram, m: Option<&VariogramModel>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["lag", "gamma", "pairs", "model_gamma", "nugget", "psill", "range"])?;
    for b in &ev.bins {
        let (mg, ng, ps, rg) = match m {
            Some(m) => (m.gamma(b.lag).to_string(), m.nugget.to_string(), m.psill.to_string(), m.range.to_string()),
            None => Default::default(),
        };
        w.write_record([b.lag.to_string(), b.gamma.to_string(), b.pairs.to_string(), mg, ng, ps, rg])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spatial::Point;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn three_collinear_points() {
        let s = SampleSet::new(vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(2.0, 0.0)], vec![1.0, 3.0, 5.0])
            .unwrap();
        let ev = empirical_variogram(&s, 1.0, 3.0).unwrap();
        assert_eq!(ev.bins.len(), 2);
        assert_eq!((ev.bins[0].lag, ev.bins[0].gamma, ev.bins[0].pairs), (1.0, 2.0, 2));
        assert_eq!((ev.bins[1].lag, ev.bins[1].gamma, ev.bins[1].pairs), (2.0, 8.0, 1));
    }

    #[test]
    fn constant_field_and_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<Point> = (0..50).map(|_| Point::new(rng.random_range(0.0..100.0), rng.random_range(0.0..100.0))).collect();
        let s = SampleSet::new(pts, vec![4.0; 50]).unwrap();
        let ev = empirical_variogram(&s, 10.0, 70.0).unwrap();
        assert!(ev.bins.iter().all(|b| b.gamma == 0.0));
        let one = SampleSet::new(vec![Point::new(0.0, 0.0)], vec![1.0]).unwrap();
        assert!(matches!(empirical_variogram(&one, 1.0, 2.0), Err(Error::TooFewSamples { .. })));
        assert!(empirical_variogram(&s, 0.0, 2.0).is_err());
    }

    fn synthetic_bins(m: &VariogramModel) -> EmpiricalVariogram {
        let bins = (0..30)
            .map(|k| {
                let lag = 250.0 * (k as f64 + 0.5);
                VariogramBin { lag, gamma: m.gamma(lag), pairs: 100 + 37 * k }
            })
            .collect();
        EmpiricalVariogram { bins, bin_width: 250.0, max_lag: 7500.0 }
    }

    #[test]
    fn recovers_exact_model() {
        let truth = VariogramModel::new(9700.0, 5500.0, 3123.0).unwrap();
        let m = fit_exponential(&synthetic_bins(&truth)).unwrap();
        assert!((m.nugget / truth.nugget - 1.0).abs() < 0.01, "{m:?}");
        assert!((m.psill / truth.psill - 1.0).abs() < 0.01, "{m:?}");
        assert!((m.range / truth.range - 1.0).abs() < 0.01, "{m:?}");
    }

    #[test]
    fn flat_variogram_is_pure_nugget() {
        let mut ev = synthetic_bins(&VariogramModel::new(1.0, 0.0, 10.0).unwrap());
        ev.bins.iter_mut().for_each(|b| b.gamma = 42.0);
        let m = fit_exponential(&ev).unwrap();
        assert!((m.sill() - 42.0).abs() < 1e-6);
        assert!(m.psill < 1e-6 * 42.0 || m.range <= 1.0, "{m:?}");
        ev.bins.truncate(3);
        assert!(matches!(fit_exponential(&ev), Err(Error::VariogramFit(_))));
    }

    #[test]
    fn gamma_monotone() {
        let m = VariogramModel::new(2.0, 3.0, 100.0).unwrap();
        assert_eq!(m.gamma(0.0), 0.0);
        let mut prev = 0.0;
        for k in 1..500 {
            let g = m.gamma(k as f64);
            assert!(g >= prev);
            prev = g;
        }
        assert!((m.gamma(100.0) - (2.0 + 0.95 * 3.0)).abs() < 0.01);
        assert!(VariogramModel::new(-1.0, 1.0, 1.0).is_err());
    }
}
