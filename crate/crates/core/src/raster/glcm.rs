//! Gray-level co-occurrence textures over a sliding window.
//!
//! Each window builds one symmetric, normalised GLCM per offset (0°, 45°, 90°,
//! 135° at distance 1) and averages the four matrices. Gray levels come from a
//! linear quantisation of the global valid min–max range.

use rayon::prelude::*;

use super::{Grid, GridStack};
use crate::error::{Error, Result};

/// Band names, in output order.
pub const TEXTURE_NAMES: [&str; 8] = [
    "mean",
    "variance",
    "homogeneity",
    "contrast",
    "dissimilarity",
    "entropy",
    "second_moment",
    "correlation",
];

/// (row, col) steps for the four directions.
pub const OFFSETS: [(isize, isize); 4] = [(0, 1), (-1, 1), (-1, 0), (-1, -1)];

pub const DEFAULT_LEVELS: usize = 32;

/// The eight Haralick statistics of one co-occurrence matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TextureStats {
    pub mean: f64,
    pub variance: f64,
    pub homogeneity: f64,
    pub contrast: f64,
    pub dissimilarity: f64,
    pub entropy: f64,
    pub second_moment: f64,
    pub correlation: f64,
}

impl TextureStats {
    pub fn as_array(&self) -> [f64; 8] {
        [
            self.mean,
            self.variance,
            self.homogeneity,
            self.contrast,
            self.dissimilarity,
            self.entropy,
            self.second_moment,
            self.correlation,
        ]
    }
}

/// Row-major `levels × levels` probability matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Glcm {
    levels: usize,
    p: Vec<f64>,
}

impl Glcm {
    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn prob(&self, i: usize, j: usize) -> f64 {
        self.p[i * self.levels + j]
    }

    pub fn total(&self) -> f64 {
        self.p.iter().sum()
    }

    /// Averaged symmetric GLCM of a window of quantised levels (`None` = nodata).
    /// Returns `None` when the window holds no valid pair.
    pub fn from_window(window: &[Vec<Option<usize>>], levels: usize) -> Option<Glcm> {
        Self::from_window_offsets(window, levels, &OFFSETS)
    }

    /// Same as [`Glcm::from_window`] over an explicit offset set.
    pub fn from_window_offsets(
        window: &[Vec<Option<usize>>],
        levels: usize,
        offsets: &[(isize, isize)],
    ) -> Option<Glcm> {
        let rows = window.len();
        let mut acc = vec![0.0; levels * levels];
        let mut used = 0usize;
        let mut counts = vec![0u32; levels * levels];
        for &(dr, dc) in offsets {
            counts.iter_mut().for_each(|c| *c = 0);
            let mut total = 0u32;
            for r in 0..rows {
                let cols = window[r].len();
                for c in 0..cols {
                    let (r2, c2) = (r as isize + dr, c as isize + dc);
                    if r2 < 0 || c2 < 0 || r2 as usize >= rows || c2 as usize >= window[r2 as usize].len() {
                        continue;
                    }
                    let (Some(a), Some(b)) = (window[r][c], window[r2 as usize][c2 as usize]) else {
                        continue;
                    };
                    counts[a * levels + b] += 1;
                    counts[b * levels + a] += 1;
                    total += 2;
                }
            }
            if total == 0 {
                continue;
            }
            used += 1;
            let t = f64::from(total);
            for (a, &c) in acc.iter_mut().zip(&counts) {
                *a += f64::from(c) / t;
            }
        }
        if used == 0 {
            return None;
        }
        let u = used as f64;
        acc.iter_mut().for_each(|v| *v /= u);
        Some(Glcm { levels, p: acc })
    }

    pub fn stats(&self) -> TextureStats {
        let l = self.levels;
        let mut mean = 0.0;
        for i in 0..l {
            for j in 0..l {
                mean += i as f64 * self.prob(i, j);
            }
        }
        let (mut variance, mut homogeneity, mut contrast, mut dissimilarity) = (0.0, 0.0, 0.0, 0.0);
        let (mut entropy, mut asm, mut cov) = (0.0, 0.0, 0.0);
        for i in 0..l {
            for j in 0..l {
                let p = self.prob(i, j);
                if p == 0.0 {
                    continue;
                }
                let d = i as f64 - j as f64;
                variance += p * (i as f64 - mean).powi(2);
                homogeneity += p / (1.0 + d * d);
                contrast += p * d * d;
                dissimilarity += p * d.abs();
                entropy -= p * p.ln();
                asm += p * p;
                cov += p * (i as f64 - mean) * (j as f64 - mean);
            }
        }
        // A single gray level has no spread; treat it as perfectly correlated.
        let correlation = if variance > 0.0 { cov / variance } else { 1.0 };
        TextureStats {
            mean,
            variance,
            homogeneity,
            contrast,
            dissimilarity,
            entropy: entropy.max(0.0),
            second_moment: asm,
            correlation,
        }
    }
}

/// Quantises `v` into `0..levels` over `[lo, hi]` (rounding to nearest level).
pub fn quantize(v: f64, lo: f64, hi: f64, levels: usize) -> usize {
    if hi <= lo {
        return 0;
    }
    let q = ((v - lo) / (hi - lo) * (levels - 1) as f64 + 0.5).floor();
    q.clamp(0.0, (levels - 1) as f64) as usize
}

/// Eight Haralick texture bands over an odd `window`.
pub fn glcm_textures(g: &Grid, window: usize, levels: usize) -> Result<GridStack> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("GLCM window must be odd, got {window}")));
    }
    if levels < 2 {
        return Err(Error::InvalidArgument(format!("GLCM levels must be >= 2, got {levels}")));
    }
    let (lo, hi) = g.min_max().ok_or(Error::DegenerateRange)?;
    let q: Vec<Option<usize>> = g
        .values()
        .iter()
        .map(|&v| (!g.is_nodata(v)).then(|| quantize(v, lo, hi, levels)))
        .collect();
    let half = (window / 2) as isize;
    let (nr, nc) = (g.nrows() as isize, g.ncols() as isize);

    let per_cell: Vec<Option<[f64; 8]>> = (0..g.nrows())
        .into_par_iter()
        .flat_map_iter(|row| {
            let q = &q;
            (0..g.ncols()).map(move |col| {
                q[row * g.ncols() + col]?;
                let r0 = (row as isize - half).max(0);
                let r1 = (row as isize + half).min(nr - 1);
                let c0 = (col as isize - half).max(0);
                let c1 = (col as isize + half).min(nc - 1);
                let win: Vec<Vec<Option<usize>>> = (r0..=r1)
                    .map(|r| (c0..=c1).map(|c| q[(r * nc + c) as usize]).collect())
                    .collect();
                Glcm::from_window(&win, levels).map(|m| m.stats().as_array())
            })
        })
        .collect();

    let mut stack = GridStack::new();
    for (k, name) in TEXTURE_NAMES.iter().enumerate() {
        let vals = per_cell.iter().map(|c| c.map_or(g.nodata(), |s| s[k])).collect();
        stack.push(*name, g.with_values(vals)?)?;
    }
    Ok(stack)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(vals: &[f64], n: usize) -> Grid {
        Grid::from_values(n, vals.len() / n, 0.0, 0.0, 1.0, -9999.0, vals.to_vec()).unwrap()
    }

    fn center(stack: &GridStack, name: &str, g: &Grid) -> f64 {
        let b = stack.get(name).unwrap();
        b.get(g.nrows() / 2, g.ncols() / 2).unwrap()
    }

    #[test]
    fn constant_grid_has_degenerate_texture() {
        let g = grid(&[7.0; 25], 5);
        let s = glcm_textures(&g, 3, 32).unwrap();
        assert_eq!(center(&s, "contrast", &g), 0.0);
        assert_eq!(center(&s, "dissimilarity", &g), 0.0);
        assert_eq!(center(&s, "homogeneity", &g), 1.0);
        assert_eq!(center(&s, "entropy", &g), 0.0);
        assert_eq!(center(&s, "second_moment", &g), 1.0);
    }

    #[test]
    fn checkerboard_unit_offsets_have_unit_contrast() {
        // Horizontal and vertical neighbours always differ by one level.
        let vals: Vec<f64> = (0..9).map(|i| ((i / 3 + i % 3) % 2) as f64).collect();
        let g = grid(&vals, 3);
        let win: Vec<Vec<Option<usize>>> =
            (0..3).map(|r| (0..3).map(|c| Some((r + c) % 2)).collect()).collect();
        for &(dr, dc) in &[(0isize, 1isize), (-1, 0)] {
            let mut n = 0;
            let mut diff = 0;
            for r in 0..3isize {
                for c in 0..3isize {
                    let (r2, c2) = (r + dr, c + dc);
                    if (0..3).contains(&r2) && (0..3).contains(&c2) {
                        n += 1;
                        diff += (win[r as usize][c as usize].unwrap() as isize
                            - win[r2 as usize][c2 as usize].unwrap() as isize)
                            .abs();
                    }
                }
            }
            assert_eq!(diff, n);
        }
        for off in [(0isize, 1isize), (-1, 0)] {
            let m = Glcm::from_window_offsets(&win, 2, &[off]).unwrap();
            assert_eq!(m.stats().contrast, 1.0);
        }
        // Diagonals pair equal levels, so the 4-offset average is 0.5.
        let s = glcm_textures(&g, 3, 2).unwrap();
        assert!((center(&s, "contrast", &g) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let win: Vec<Vec<Option<usize>>> = vec![
            vec![Some(0), Some(3), Some(1)],
            vec![None, Some(2), Some(2)],
            vec![Some(1), Some(0), Some(3)],
        ];
        let m = Glcm::from_window(&win, 4).unwrap();
        assert!((m.total() - 1.0).abs() < 1e-12);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(m.prob(i, j), m.prob(j, i));
            }
        }
        let s = m.stats();
        assert!(s.second_moment > 0.0 && s.second_moment <= 1.0);
        assert!(s.homogeneity > 0.0 && s.homogeneity <= 1.0);
        assert!(s.entropy >= 0.0);
    }

    #[test]
    fn errors() {
        let g = grid(&[-9999.0; 9], 3);
        assert!(matches!(glcm_textures(&g, 3, 8), Err(Error::DegenerateRange)));
        let g = grid(&[1.0, 2.0, 3.0, 4.0], 2);
        assert!(glcm_textures(&g, 2, 8).is_err());
        assert!(glcm_textures(&g, 3, 1).is_err());
    }

    #[test]
    fn quantization_maps_integer_levels_identically() {
        for v in 0..8 {
            assert_eq!(quantize(v as f64, 0.0, 7.0, 8), v);
        }
        assert_eq!(quantize(5.0, 5.0, 5.0, 8), 0);
    }
}
