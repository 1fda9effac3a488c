use std::path::Path;

use crate::error::{Error, Result};
use crate::spatial::{KdTree, Point};

/// Locations closer than this are treated as one sample.
pub const DUPLICATE_TOL: f64 = 1e-6;

/// Point values in projected metres, free of coincident locations.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    points: Vec<Point>,
    values: Vec<f64>,
}

impl SampleSet {
    /// Builds a sample set; samples within [`DUPLICATE_TOL`] of an earlier one
    /// are merged into it and their values averaged.
    pub fn new(points: Vec<Point>, values: Vec<f64>) -> Result<Self> {
        if points.len() != values.len() {
            return Err(Error::InvalidArgument(format!(
                "{} locations but {} values",
                points.len(),
                values.len()
            )));
        }
        if points.iter().any(|p| !(p.x.is_finite() && p.y.is_finite())) || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("sample coordinates and values must be finite".into()));
        }
        let tree = KdTree::new(&points);
        let mut owner = vec![usize::MAX; points.len()];
        let mut out_p = Vec::with_capacity(points.len());
        let mut out_v = Vec::with_capacity(points.len());
        for i in 0..points.len() {
            if owner[i] != usize::MAX {
                continue;
            }
            let (mut sum, mut cnt) = (0.0, 0usize);
            for nb in tree.within(points[i], DUPLICATE_TOL) {
                if owner[nb.index] == usize::MAX {
                    owner[nb.index] = out_p.len();
                    sum += values[nb.index];
                    cnt += 1;
                }
            }
            out_p.push(points[i]);
            out_v.push(sum / cnt as f64);
        }
        Ok(Self { points: out_p, values: out_v })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Half the diagonal of the bounding box.
    pub fn half_diagonal(&self) -> f64 {
        let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &self.points {
            x0 = x0.min(p.x);
            y0 = y0.min(p.y);
            x1 = x1.max(p.x);
            y1 = y1.max(p.y);
        }
        if self.points.is_empty() {
            return 0.0;
        }
        0.5 * (x1 - x0).hypot(y1 - y0)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["x", "y", "value"])?;
        for (p, v) in self.points.iter().zip(&self.values) {
            w.write_record([p.x.to_string(), p.y.to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut r = csv::Reader::from_path(path)?;
        let (mut pts, mut vals) = (Vec::new(), Vec::new());
        for rec in r.records() {
            let rec = rec?;
            let num = |i: usize| {
                rec.get(i)
                    .and_then(|s| s.trim().parse::<f64>().ok())
                    .ok_or_else(|| Error::parse(path, format!("bad number in column {i}")))
            };
            pts.push(Point::new(num(0)?, num(1)?));
            vals.push(num(2)?);
        }
        Self::new(pts, vals)
    }
}
