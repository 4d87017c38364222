use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::{FeatureMatrix, Forest};
use crate::error::{Error, Result};
use crate::metrics::r2;
use crate::quantum::Rng;
use crate::seed::{derive_seed, stage};

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureImportance {
    pub index: usize,
    pub name: String,
    /// Mean of `R²(baseline) − R²(column permuted)` over the repeats.
    pub mean_drop: f64,
    /// Sample standard deviation of the drops; zero for a single repeat.
    pub std_drop: f64,
}

/// Permutation importance of every column of `x`, ranked by decreasing
/// `mean_drop` (ties broken by column index).
pub fn permutation_importance(
    forest: &Forest,
    x: &FeatureMatrix,
    y: &[f64],
    repeats: usize,
    seed: u64,
) -> Result<Vec<FeatureImportance>> {
    if repeats == 0 {
        return Err(Error::Config("importance repeats must be >= 1".into()));
    }
    if y.len() != x.n_rows() {
        return Err(Error::Dimension(format!(
            "{} rows but {} labels",
            x.n_rows(),
            y.len()
        )));
    }
    let base_pred = forest.predict(x)?;
    let baseline = r2(y, &base_pred)?
        .ok_or_else(|| Error::Numerical("baseline R² undefined: labels are constant".into()))?;

    let mut ranked = (0..x.n_features())
        .into_par_iter()
        .map(|f| {
            let mut rng = Rng::from_seed(derive_seed(seed, &[stage::IMPORTANCE, f as u64]));
            let mut col = x.column(f).to_vec();
            let mut drops = Vec::with_capacity(repeats);
            for _ in 0..repeats {
                col.shuffle(&mut rng);
                let pred: Vec<f64> = (0..x.n_rows())
                    .map(|i| forest.predict_with(|j| if j == f { col[i] } else { x.value(i, j) }))
                    .collect();
                // Permuted labels are never constant here since `y` is not.
                drops.push(baseline - r2(y, &pred)?.unwrap_or(f64::NAN));
            }
            let n = drops.len() as f64;
            let mean = drops.iter().sum::<f64>() / n;
            let std = if drops.len() > 1 {
                (drops.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            Ok(FeatureImportance {
                index: f,
                name: x.names()[f].clone(),
                mean_drop: mean,
                std_drop: std,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    ranked.sort_by(|a, b| {
        b.mean_drop
            .total_cmp(&a.mean_drop)
            .then(a.index.cmp(&b.index))
    });
    Ok(ranked)
}

/// Column indices of the `k` highest-ranked features, in ascending order.
pub fn select_top_features(ranked: &[FeatureImportance], k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > ranked.len() {
        return Err(Error::Config(format!(
            "top-k = {k} must be in 1..={}",
            ranked.len()
        )));
    }
    let mut idx: Vec<usize> = ranked[..k].iter().map(|f| f.index).collect();
    idx.sort_unstable();
    Ok(idx)
}
