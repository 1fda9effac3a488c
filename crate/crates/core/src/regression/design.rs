use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a predictor column is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureKind {
    Numeric,
    /// Integer class codes `0..levels`, stored as `f64`.
    Categorical { levels: usize },
}

/// Largest supported number of classes of a categorical predictor.
pub const MAX_LEVELS: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct Feature {
    pub name: String,
    pub kind: FeatureKind,
    pub values: Vec<f64>,
}

/// Named predictors plus a response, all complete and finite.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    features: Vec<Feature>,
    target: Vec<f64>,
}

fn check_name(name: &str) -> Result<()> {
    if name.is_empty() || name.chars().any(|c| c.is_whitespace() || c == ',') {
        return Err(Error::InvalidDesign(format!("bad feature name `{name}`")));
    }
    Ok(())
}

impl DesignMatrix {
    pub fn new(target: Vec<f64>) -> Result<Self> {
        if let Some(i) = target.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidDesign(format!("target value {i} is not finite")));
        }
        Ok(Self { features: Vec::new(), target })
    }

    pub fn push_numeric(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<()> {
        self.push(Feature { name: name.into(), kind: FeatureKind::Numeric, values })
    }

    pub fn push_categorical(&mut self, name: impl Into<String>, codes: &[usize], levels: usize) -> Result<()> {
        let values = codes.iter().map(|&c| c as f64).collect();
        self.push(Feature { name: name.into(), kind: FeatureKind::Categorical { levels }, values })
    }

    pub fn push(&mut self, f: Feature) -> Result<()> {
        check_name(&f.name)?;
        if self.features.iter().any(|g| g.name == f.name) {
            return Err(Error::InvalidDesign(format!("duplicate feature `{}`", f.name)));
        }
        if f.values.len() != self.target.len() {
            return Err(Error::InvalidDesign(format!(
                "feature `{}` has {} values, target has {}",
                f.name,
                f.values.len(),
                self.target.len()
            )));
        }
        if f.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDesign(format!("feature `{}` has missing values", f.name)));
        }
        if let FeatureKind::Categorical { levels } = f.kind {
            if !(1..=MAX_LEVELS).contains(&levels) {
                return Err(Error::InvalidDesign(format!("`{}`: levels must be in 1..={MAX_LEVELS}", f.name)));
            }
            if f.values.iter().any(|&v| v < 0.0 || v.fract() != 0.0 || v >= levels as f64) {
                return Err(Error::InvalidDesign(format!("`{}`: class codes outside 0..{levels}", f.name)));
            }
        }
        self.features.push(f);
        Ok(())
    }

    /// Builds a numeric design from row-major predictor rows.
    pub fn from_rows(names: &[&str], rows: &[Vec<f64>], target: Vec<f64>) -> Result<Self> {
        let mut d = Self::new(target)?;
        for (j, name) in names.iter().enumerate() {
            let col = rows
                .iter()
                .map(|r| r.get(j).copied().ok_or_else(|| Error::InvalidDesign("ragged rows".into())))
                .collect::<Result<Vec<_>>>()?;
            d.push_numeric(*name, col)?;
        }
        Ok(d)
    }

    pub fn n(&self) -> usize {
        self.target.len()
    }

    pub fn p(&self) -> usize {
        self.features.len()
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn feature(&self, name: &str) -> Option<&Feature> {
        self.features.iter().find(|f| f.name == name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.features.iter().map(|f| f.name.as_str()).collect()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.features.iter().map(|f| f.values[i]).collect()
    }

    /// Rows `idx` (in that order, repeats allowed).
    pub fn subset_rows(&self, idx: &[usize]) -> Self {
        Self {
            features: self
                .features
                .iter()
                .map(|f| Feature { values: idx.iter().map(|&i| f.values[i]).collect(), ..f.clone() })
                .collect(),
            target: idx.iter().map(|&i| self.target[i]).collect(),
        }
    }

    /// Features at positions `cols`, same rows.
    pub fn select(&self, cols: &[usize]) -> Self {
        Self { features: cols.iter().map(|&j| self.features[j].clone()).collect(), target: self.target.clone() }
    }

    pub fn select_names(&self, names: &[&str]) -> Result<Self> {
        let cols = names
            .iter()
            .map(|n| {
                self.features
                    .iter()
                    .position(|f| f.name == *n)
                    .ok_or_else(|| Error::InvalidDesign(format!("unknown feature `{n}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.select(&cols))
    }

    pub fn with_target(&self, target: Vec<f64>) -> Result<Self> {
        if target.len() != self.n() {
            return Err(Error::InvalidDesign("target length mismatch".into()));
        }
        let mut d = Self::new(target)?;
        d.features = self.features.clone();
        Ok(d)
    }
}

/// Anything that predicts the response from a design's predictors.
pub trait Regressor {
    fn predict(&self, d: &DesignMatrix) -> Result<Vec<f64>>;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        let mut d = DesignMatrix::new(vec![1.0, 2.0, 3.0]).unwrap();
        d.push_numeric("a", vec![1.0, 2.0, 3.0]).unwrap();
        assert!(d.push_numeric("a", vec![1.0, 2.0, 3.0]).is_err());
        assert!(d.push_numeric("b", vec![1.0, 2.0]).is_err());
        assert!(d.push_numeric("c", vec![1.0, f64::NAN, 2.0]).is_err());
        assert!(d.push_numeric("has space", vec![1.0, 2.0, 3.0]).is_err());
        assert!(d.push_categorical("g", &[0, 1, 3], 3).is_err());
        d.push_categorical("g", &[0, 1, 2], 3).unwrap();
        assert_eq!(d.names(), ["a", "g"]);
        let s = d.subset_rows(&[2, 2, 0]);
        assert_eq!(s.target(), [3.0, 3.0, 1.0]);
        assert_eq!(s.row(0), vec![3.0, 2.0]);
        assert_eq!(d.select_names(&["g"]).unwrap().p(), 1);
    }
}
