use super::{fit_ols, DesignMatrix, FeatureKind, LinearModel};
use crate::error::{Error, Result};

fn width(d: &DesignMatrix, j: usize) -> usize {
    match d.features()[j].kind {
        FeatureKind::Numeric => 1,
        FeatureKind::Categorical { levels } => levels - 1,
    }
}

fn fit_subset(d: &DesignMatrix, set: &[usize]) -> Result<LinearModel> {
    let max_params = d.n().saturating_sub(2);
    if set.iter().map(|&j| width(d, j)).sum::<usize>() > max_params {
        return Err(Error::RankDeficient);
    }
    fit_ols(&d.select(set))
}

/// Starting set for the stepwise search: features are taken in design order
/// and kept when the fit stays full rank with at least one residual degree of
/// freedom. Exactly aliased features (e.g. a sum of earlier ones) are skipped.
pub fn full_model_set(d: &DesignMatrix) -> Vec<usize> {
    let mut set = Vec::new();
    for j in 0..d.p() {
        set.push(j);
        if fit_subset(d, &set).is_err() {
            set.pop();
        }
    }
    set
}

pub fn full_model(d: &DesignMatrix) -> Result<LinearModel> {
    fit_subset(d, &full_model_set(d)).or_else(|_| fit_ols(&d.select(&[])))
}

/// Bidirectional stepwise selection by BIC, starting from the full model.
///
/// Each step takes the lowest-BIC single-feature removal or addition while it
/// strictly improves. When none does, two-feature moves (two removals, two
/// additions or an exchange) are tried before stopping, which lets the search
/// leave a full model that only loses BIC one feature at a time. Categorical
/// predictors enter and leave as a whole.
pub fn stepwise_bic(d: &DesignMatrix) -> Result<LinearModel> {
    if d.n() == 0 {
        return Err(Error::EmptyDesign);
    }
    if d.p() < 2 {
        return Err(Error::InvalidDesign(format!("stepwise selection needs at least 2 candidates, got {}", d.p())));
    }
    let mut set = full_model_set(d);
    let mut current = fit_subset(d, &set).or_else(|_| fit_ols(&d.select(&[])))?;
    loop {
        let step = best_move(d, &single_moves(d, &set)).filter(|(_, m)| m.bic < current.bic);
        let step = step.or_else(|| best_move(d, &pair_moves(d, &set)).filter(|(_, m)| m.bic < current.bic));
        match step {
            Some((cand, m)) => {
                set = cand;
                current = m;
            }
            None => return Ok(current),
        }
    }
}

/// Lowest-BIC fit among `cands`; the first wins ties.
fn best_move(d: &DesignMatrix, cands: &[Vec<usize>]) -> Option<(Vec<usize>, LinearModel)> {
    let mut best: Option<(Vec<usize>, LinearModel)> = None;
    for cand in cands {
        if let Ok(m) = fit_subset(d, cand) {
            if best.as_ref().is_none_or(|(_, b)| m.bic < b.bic) {
                best = Some((cand.clone(), m));
            }
        }
    }
    best
}

fn with(set: &[usize], drop: &[usize], add: &[usize]) -> Vec<usize> {
    let mut s: Vec<usize> = set.iter().copied().filter(|j| !drop.contains(j)).chain(add.iter().copied()).collect();
    s.sort_unstable();
    s
}

/// Every single removal, then every single addition.
fn single_moves(d: &DesignMatrix, set: &[usize]) -> Vec<Vec<usize>> {
    let out: Vec<usize> = (0..d.p()).filter(|j| !set.contains(j)).collect();
    let drops = set.iter().map(|&a| with(set, &[a], &[]));
    let adds = out.iter().map(|&b| with(set, &[], &[b]));
    drops.chain(adds).collect()
}

/// Two removals, two additions, or one of each.
fn pair_moves(d: &DesignMatrix, set: &[usize]) -> Vec<Vec<usize>> {
    let out: Vec<usize> = (0..d.p()).filter(|j| !set.contains(j)).collect();
    let mut moves = Vec::new();
    for (i, &a) in set.iter().enumerate() {
        for &b in &set[i + 1..] {
            moves.push(with(set, &[a, b], &[]));
        }
    }
    for (i, &a) in out.iter().enumerate() {
        for &b in &out[i + 1..] {
            moves.push(with(set, &[], &[a, b]));
        }
    }
    for &a in set {
        for &b in &out {
            moves.push(with(set, &[a], &[b]));
        }
    }
    moves
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn all_subsets_best(d: &DesignMatrix) -> (Vec<String>, f64) {
        let p = d.p();
        let mut best = (Vec::new(), f64::INFINITY);
        for mask in 0u32..(1 << p) {
            let set: Vec<usize> = (0..p).filter(|j| mask & (1 << j) != 0).collect();
            if let Ok(m) = fit_subset(d, &set) {
                if m.bic < best.1 {
                    best = (m.selected_features.clone(), m.bic);
                }
            }
        }
        best
    }

    fn normal(rng: &mut ChaCha8Rng) -> f64 {
        StandardNormal.sample(rng)
    }

    #[test]
    fn signal_vs_noise() {
        let mut hits = 0;
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rows: Vec<Vec<f64>> = (0..60).map(|_| vec![normal(&mut rng), normal(&mut rng)]).collect();
            let y: Vec<f64> = rows.iter().map(|r| 2.0 * r[0] + normal(&mut rng)).collect();
            let d = DesignMatrix::from_rows(&["x1", "x2"], &rows, y).unwrap();
            let m = stepwise_bic(&d).unwrap();
            let (oracle, _) = all_subsets_best(&d);
            assert_eq!(m.selected_features, oracle);
            hits += usize::from(m.selected_features == ["x1"]);
        }
        assert!(hits >= 95, "{hits}");
    }

    #[test]
    fn agrees_with_exhaustive_p3() {
        for seed in 0..30 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let rows: Vec<Vec<f64>> = (0..40).map(|_| (0..3).map(|_| normal(&mut rng)).collect()).collect();
            let y: Vec<f64> = rows.iter().map(|r| r[0] - 0.3 * r[2] + normal(&mut rng)).collect();
            let d = DesignMatrix::from_rows(&["a", "b", "c"], &rows, y).unwrap();
            let full = full_model(&d).unwrap();
            let m = stepwise_bic(&d).unwrap();
            let (oracle, obic) = all_subsets_best(&d);
            assert_eq!(m.selected_features, oracle);
            assert!((m.bic - obic).abs() < 1e-9);
            assert!(m.bic <= full.bic);
        }
    }

    #[test]
    fn aliased_feature_skipped() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|_| {
                let (a, b) = (normal(&mut rng), normal(&mut rng));
                vec![a, b, a + b]
            })
            .collect();
        let y: Vec<f64> = rows.iter().map(|r| r[2] + 0.1 * normal(&mut rng)).collect();
        let d = DesignMatrix::from_rows(&["a", "b", "s"], &rows, y).unwrap();
        assert_eq!(full_model_set(&d), [0, 1]);
        let m = stepwise_bic(&d).unwrap();
        assert!(m.bic <= full_model(&d).unwrap().bic);
        assert!(m.rss < 1.0);
    }
}
