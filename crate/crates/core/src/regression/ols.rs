use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{DesignMatrix, FeatureKind, Regressor};
use crate::error::{Error, Result};

/// Relative RSS floor inside the BIC logarithm; keeps exact fits finite.
pub const RSS_REL_FLOOR: f64 = 1e-12;
const RANK_TOL: f64 = 1e-9;

/// One fitted coefficient. Categorical predictors contribute one term per
/// non-reference class (`level`), the first class being the reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearTerm {
    pub feature: String,
    pub level: Option<usize>,
    pub coef: f64,
}

impl LinearTerm {
    pub fn label(&self) -> String {
        match self.level {
            None => self.feature.clone(),
            Some(l) => format!("{}[{l}]", self.feature),
        }
    }

    fn column_value(&self, raw: f64) -> f64 {
        match self.level {
            None => raw,
            Some(l) => f64::from(u8::from(raw == l as f64)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub intercept: f64,
    pub terms: Vec<LinearTerm>,
    pub selected_features: Vec<String>,
    pub rss: f64,
    pub bic: f64,
    pub n_obs: usize,
}

impl LinearModel {
    pub fn coefficients(&self) -> Vec<(String, f64)> {
        self.terms.iter().map(|t| (t.label(), t.coef)).collect()
    }

    /// Estimated parameters excluding the intercept.
    pub fn n_params(&self) -> usize {
        self.terms.len()
    }

    /// Prediction from a name → raw value lookup.
    pub fn predict_with(&self, value: impl Fn(&str) -> Option<f64>) -> Result<f64> {
        let mut y = self.intercept;
        for t in &self.terms {
            let v = value(&t.feature).ok_or_else(|| Error::InvalidDesign(format!("missing feature `{}`", t.feature)))?;
            y += t.coef * t.column_value(v);
        }
        Ok(y)
    }
}

impl Regressor for LinearModel {
    fn predict(&self, d: &DesignMatrix) -> Result<Vec<f64>> {
        let cols: Vec<&[f64]> = self
            .terms
            .iter()
            .map(|t| {
                d.feature(&t.feature)
                    .map(|f| f.values.as_slice())
                    .ok_or_else(|| Error::InvalidDesign(format!("missing feature `{}`", t.feature)))
            })
            .collect::<Result<_>>()?;
        Ok((0..d.n())
            .map(|i| self.intercept + self.terms.iter().zip(&cols).map(|(t, c)| t.coef * t.column_value(c[i])).sum::<f64>())
            .collect())
    }
}

/// `n·ln(RSS/n) + (p+1)·ln n`, with RSS floored at `RSS_REL_FLOOR·TSS`.
pub fn bic(n: usize, rss: f64, tss: f64, p: usize) -> f64 {
    let nf = n as f64;
    let floor = (RSS_REL_FLOOR * tss).max(f64::MIN_POSITIVE);
    nf * (rss.max(floor) / nf).ln() + (p as f64 + 1.0) * nf.ln()
}

fn total_ss(y: &[f64]) -> f64 {
    let m = y.iter().sum::<f64>() / y.len() as f64;
    y.iter().map(|v| (v - m) * (v - m)).sum()
}

/// Expanded model columns: numeric columns as-is, categorical ones one-hot
/// without the reference class. Constant columns are dropped.
fn expand(d: &DesignMatrix) -> Vec<(String, Option<usize>, Vec<f64>)> {
    let mut out = Vec::new();
    for f in d.features() {
        match f.kind {
            FeatureKind::Numeric => out.push((f.name.clone(), None, f.values.clone())),
            FeatureKind::Categorical { levels } => {
                for l in 1..levels {
                    let col = f.values.iter().map(|&v| f64::from(u8::from(v == l as f64))).collect();
                    out.push((f.name.clone(), Some(l), col));
                }
            }
        }
    }
    out.retain(|(_, _, c)| c.iter().any(|&v| v != c[0]));
    out
}

/// Ordinary least squares with an intercept, via QR of the centred and
/// unit-scaled design.
pub fn fit_ols(d: &DesignMatrix) -> Result<LinearModel> {
    let n = d.n();
    if n == 0 {
        return Err(Error::EmptyDesign);
    }
    let cols = expand(d);
    let p = cols.len();
    if n < p + 1 {
        return Err(Error::RankDeficient);
    }
    let y = d.target();
    let ym = y.iter().sum::<f64>() / n as f64;
    let tss = total_ss(y);

    let mut coefs = vec![0.0; p];
    let mut means = vec![0.0; p];
    if p > 0 {
        let mut x = DMatrix::<f64>::zeros(n, p);
        let mut scales = vec![0.0; p];
        for (j, (_, _, c)) in cols.iter().enumerate() {
            let m = c.iter().sum::<f64>() / n as f64;
            let norm = c.iter().map(|v| (v - m) * (v - m)).sum::<f64>().sqrt();
            if !(norm > 0.0) {
                return Err(Error::RankDeficient);
            }
            for i in 0..n {
                x[(i, j)] = (c[i] - m) / norm;
            }
            means[j] = m;
            scales[j] = norm;
        }
        let yc = DVector::from_iterator(n, y.iter().map(|v| v - ym));
        let qr = x.qr();
        let r = qr.r();
        if (0..p).any(|j| !(r[(j, j)].abs() > RANK_TOL)) {
            return Err(Error::RankDeficient);
        }
        let qty = qr.q().transpose() * yc;
        let b = r.solve_upper_triangular(&qty).ok_or(Error::RankDeficient)?;
        for j in 0..p {
            coefs[j] = b[j] / scales[j];
        }
    }
    let intercept = ym - coefs.iter().zip(&means).map(|(b, m)| b * m).sum::<f64>();
    let rss: f64 = (0..n)
        .map(|i| {
            let fit = intercept + cols.iter().zip(&coefs).map(|((_, _, c), b)| b * c[i]).sum::<f64>();
            (y[i] - fit).powi(2)
        })
        .sum();

    let mut selected_features: Vec<String> = Vec::new();
    for (name, _, _) in &cols {
        if !selected_features.contains(name) {
            selected_features.push(name.clone());
        }
    }
    let terms = cols
        .into_iter()
        .zip(coefs)
        .map(|((feature, level, _), coef)| LinearTerm { feature, level, coef })
        .collect();
    Ok(LinearModel { intercept, terms, selected_features, rss, bic: bic(n, rss, tss, p), n_obs: n })
}
