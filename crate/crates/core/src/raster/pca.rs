use nalgebra::{DMatrix, SymmetricEigen};

use super::{Grid, GridStack};
use crate::error::{Error, Result};

/// Principal components of a band stack.
#[derive(Debug, Clone)]
pub struct PcaResult {
    /// Score bands `PC1..PCn`, nodata where any input band is nodata.
    pub components: GridStack,
    /// Eigenvalues in descending order (all bands, not only the retained ones).
    pub eigenvalues: Vec<f64>,
    /// Column `k` is the unit loading vector of component `k`.
    pub loadings: DMatrix<f64>,
    /// Per-band means used for centring.
    pub means: Vec<f64>,
}

/// PCA over the band covariance of cells valid in every band.
///
/// Each loading vector is signed so its largest-magnitude entry is positive.
pub fn pca_stack(s: &GridStack, n_components: usize) -> Result<PcaResult> {
    let nb = s.len();
    if nb < n_components.max(1) {
        return Err(Error::TooFewBands { needed: n_components.max(1), got: nb });
    }
    let tmpl = s.template().expect("non-empty stack");
    let n_cells = tmpl.len();
    let valid: Vec<usize> = (0..n_cells)
        .filter(|&i| s.grids().all(|g| !g.is_nodata(g.values()[i])))
        .collect();
    if valid.len() < 2 {
        return Err(Error::InvalidArgument("PCA needs at least two fully valid cells".into()));
    }
    let n = valid.len() as f64;
    let means: Vec<f64> = s
        .grids()
        .map(|g| valid.iter().map(|&i| g.values()[i]).sum::<f64>() / n)
        .collect();
    let mut cov = DMatrix::<f64>::zeros(nb, nb);
    let bands: Vec<&[f64]> = s.grids().map(|g| g.values()).collect();
    for a in 0..nb {
        for b in a..nb {
            let c = valid
                .iter()
                .map(|&i| (bands[a][i] - means[a]) * (bands[b][i] - means[b]))
                .sum::<f64>()
                / (n - 1.0);
            cov[(a, b)] = c;
            cov[(b, a)] = c;
        }
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..nb).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));

    let mut loadings = DMatrix::<f64>::zeros(nb, nb);
    let mut eigenvalues = Vec::with_capacity(nb);
    for (k, &src) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(src).into_owned();
        let pivot = (0..nb)
            .max_by(|&i, &j| v[i].abs().total_cmp(&v[j].abs()).then(j.cmp(&i)))
            .unwrap_or(0);
        if v[pivot] < 0.0 {
            v.neg_mut();
        }
        loadings.set_column(k, &v);
        eigenvalues.push(eig.eigenvalues[src].max(0.0));
    }

    let mut components = GridStack::new();
    for k in 0..n_components {
        let mut vals = vec![tmpl.nodata(); n_cells];
        for &i in &valid {
            vals[i] = (0..nb).map(|b| (bands[b][i] - means[b]) * loadings[(b, k)]).sum();
        }
        components.push(format!("PC{}", k + 1), tmpl.with_values(vals)?)?;
    }
    Ok(PcaResult { components, eigenvalues, loadings, means })
}

/// Per-cell min, mean and max across bands, skipping nodata.
pub fn temporal_composites(s: &GridStack) -> Result<GridStack> {
    let tmpl = s.template().ok_or(Error::TooFewBands { needed: 1, got: 0 })?;
    let n = tmpl.len();
    let nd = tmpl.nodata();
    let (mut mn, mut me, mut mx) = (vec![nd; n], vec![nd; n], vec![nd; n]);
    for i in 0..n {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut sum = 0.0;
        let mut cnt = 0usize;
        for g in s.grids() {
            let v = g.values()[i];
            if g.is_nodata(v) {
                continue;
            }
            lo = lo.min(v);
            hi = hi.max(v);
            sum += v;
            cnt += 1;
        }
        if cnt > 0 {
            mn[i] = lo;
            me[i] = sum / cnt as f64;
            mx[i] = hi;
        }
    }
    GridStack::from_bands(vec![
        ("min".into(), tmpl.with_values(mn)?),
        ("mean".into(), tmpl.with_values(me)?),
        ("max".into(), tmpl.with_values(mx)?),
    ])
}

/// Cell-wise reconstruction of centred data from all score bands.
pub fn reconstruct(p: &PcaResult, i: usize) -> Option<Vec<f64>> {
    let nb = p.loadings.nrows();
    let scores: Option<Vec<f64>> = p.components.grids().map(|g: &Grid| {
        let v = g.values()[i];
        (!g.is_nodata(v)).then_some(v)
    }).collect();
    let scores = scores?;
    Some(
        (0..nb)
            .map(|b| scores.iter().enumerate().map(|(k, s)| s * p.loadings[(b, k)]).sum())
            .collect(),
    )
}
