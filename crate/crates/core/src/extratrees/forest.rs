use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{RandomSampler, SplitSampler, Tree, TreeParams};
use super::FeatureMatrix;
use crate::error::{Error, Result};
use crate::metrics::r2;
use crate::quantum::Rng;
use crate::seed::{derive_seed, stage};

/// Bumped whenever the serialized model layout changes.
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    /// Every feature is a candidate at every node.
    All,
    /// A fresh random subset of this size at every node.
    Count(usize),
    /// One random subset of this size per tree; all of it is tried at each
    /// node of that tree.
    PerTree(usize),
}

impl MaxFeatures {
    pub fn resolve(self, n_features: usize) -> Result<usize> {
        match self {
            MaxFeatures::All => Ok(n_features),
            MaxFeatures::Count(k) | MaxFeatures::PerTree(k) if k >= 1 && k <= n_features => Ok(k),
            MaxFeatures::Count(k) | MaxFeatures::PerTree(k) => Err(Error::Config(format!(
                "max_features = {k} must be in 1..={n_features}"
            ))),
        }
    }
}

/// Restricts a tree to a fixed feature subset drawn once per tree.
struct TreeSubset<'a> {
    features: Vec<usize>,
    inner: RandomSampler<'a>,
}

impl SplitSampler for TreeSubset<'_> {
    fn candidate_features(&mut self, _n_features: usize, _k: usize) -> Vec<usize> {
        self.features.clone()
    }

    fn threshold(&mut self, feature: usize, lo: f64, hi: f64) -> f64 {
        self.inner.threshold(feature, lo, hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_features: MaxFeatures,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub max_depth: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    /// 80 trees; every other value follows the usual ExtraTrees regression
    /// defaults except `bootstrap`, which is on so out-of-bag scores exist.
    fn default() -> Self {
        Self {
            n_trees: 80,
            max_features: MaxFeatures::All,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_depth: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestConfig {
    fn tree_params(&self, n_features: usize) -> Result<TreeParams> {
        if self.n_trees == 0 {
            return Err(Error::Config("n_trees must be >= 1".into()));
        }
        if self.min_samples_split < 2 {
            return Err(Error::Config("min_samples_split must be >= 2".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::Config("min_samples_leaf must be >= 1".into()));
        }
        Ok(TreeParams {
            max_features: self.max_features.resolve(n_features)?,
            min_samples_split: self.min_samples_split,
            min_samples_leaf: self.min_samples_leaf,
            max_depth: self.max_depth,
        })
    }
}

/// Out-of-bag evaluation of the training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct OobReport {
    /// `None` when fewer than two covered rows or zero label variance.
    pub r2: Option<f64>,
    /// Mean over the trees whose bootstrap excluded the row.
    pub predictions: Vec<Option<f64>>,
    pub covered: usize,
}

impl OobReport {
    pub fn coverage(&self) -> f64 {
        self.covered as f64 / self.predictions.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    format_version: u32,
    config: ForestConfig,
    schema: Vec<String>,
    n_train_rows: usize,
    trees: Vec<Tree>,
    /// Sorted bootstrap row indices per tree; empty without bootstrap.
    in_bag: Vec<Vec<u32>>,
}

impl Forest {
    /// Fits `cfg.n_trees` trees in parallel on the ambient rayon pool. Each
    /// tree draws from its own seed derived from `cfg.seed`, so the result
    /// does not depend on the pool size.
    pub fn fit(x: &FeatureMatrix, y: &[f64], cfg: &ForestConfig) -> Result<Forest> {
        let m = x.n_rows();
        if m == 0 {
            return Err(Error::Empty("training set has no rows".into()));
        }
        if y.len() != m {
            return Err(Error::Dimension(format!("{m} rows but {} labels", y.len())));
        }
        if m > u32::MAX as usize {
            return Err(Error::Config("training set too large".into()));
        }
        let params = cfg.tree_params(x.n_features())?;

        let grown: Vec<(Tree, Vec<u32>)> = (0..cfg.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = Rng::from_seed(derive_seed(cfg.seed, &[stage::TREE, t as u64]));
                let rows: Vec<u32> = if cfg.bootstrap {
                    (0..m).map(|_| rng.below(m) as u32).collect()
                } else {
                    (0..m as u32).collect()
                };
                let mut bag = if cfg.bootstrap {
                    rows.clone()
                } else {
                    Vec::new()
                };
                bag.sort_unstable();
                let tree = match cfg.max_features {
                    MaxFeatures::PerTree(k) => {
                        let features =
                            rand::seq::index::sample(&mut rng, x.n_features(), k).into_vec();
                        let mut sampler = TreeSubset {
                            features,
                            inner: RandomSampler(&mut rng),
                        };
                        Tree::grow(x, y, rows, &params, &mut sampler)
                    }
                    _ => Tree::grow(x, y, rows, &params, &mut RandomSampler(&mut rng)),
                };
                (tree, bag)
            })
            .collect();
        let (trees, in_bag) = grown.into_iter().unzip();

        Ok(Forest {
            format_version: MODEL_FORMAT_VERSION,
            config: *cfg,
            schema: x.names().to_vec(),
            n_train_rows: m,
            trees,
            in_bag,
        })
    }

    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    pub fn schema(&self) -> &[String] {
        &self.schema
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    /// Bootstrap multiset of tree `t` as sorted row indices.
    pub fn in_bag(&self, t: usize) -> &[u32] {
        &self.in_bag[t]
    }

    #[inline]
    pub fn predict_with(&self, value: impl Fn(usize) -> f64 + Copy) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict_with(value)).sum();
        sum / self.trees.len() as f64
    }

    pub fn predict_row(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.schema.len() {
            return Err(Error::Schema(format!(
                "row has {} features, model expects {}",
                row.len(),
                self.schema.len()
            )));
        }
        Ok(self.predict_with(|j| row[j]))
    }

    pub(crate) fn check_schema(&self, x: &FeatureMatrix) -> Result<()> {
        if x.names() != self.schema.as_slice() {
            return Err(Error::Schema(format!(
                "input columns do not match the model's {} training columns",
                self.schema.len()
            )));
        }
        Ok(())
    }

    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        self.check_schema(x)?;
        Ok((0..x.n_rows())
            .into_par_iter()
            .map(|i| self.predict_with(|j| x.value(i, j)))
            .collect())
    }

    /// Scores each training row using only the trees that did not draw it.
    /// `x`, `y` must be the training data the forest was fitted on.
    pub fn oob_score(&self, x: &FeatureMatrix, y: &[f64]) -> Result<OobReport> {
        if !self.config.bootstrap {
            return Err(Error::OobUndefined);
        }
        self.check_schema(x)?;
        if x.n_rows() != self.n_train_rows || y.len() != self.n_train_rows {
            return Err(Error::Dimension(format!(
                "out-of-bag scoring needs the {} training rows, got {}",
                self.n_train_rows,
                x.n_rows()
            )));
        }
        let m = self.n_train_rows;
        let mut sums = vec![0.0; m];
        let mut counts = vec![0usize; m];
        let mut drawn = vec![false; m];
        for (tree, bag) in self.trees.iter().zip(&self.in_bag) {
            drawn.fill(false);
            for &r in bag {
                drawn[r as usize] = true;
            }
            for i in (0..m).filter(|&i| !drawn[i]) {
                sums[i] += tree.predict_with(|j| x.value(i, j));
                counts[i] += 1;
            }
        }
        let predictions: Vec<Option<f64>> = sums
            .iter()
            .zip(&counts)
            .map(|(&s, &c)| (c > 0).then(|| s / c as f64))
            .collect();
        let (ys, ps): (Vec<f64>, Vec<f64>) = y
            .iter()
            .zip(&predictions)
            .filter_map(|(&t, p)| p.map(|p| (t, p)))
            .unzip();
        let covered = ys.len();
        let r2 = if covered == 0 { None } else { r2(&ys, &ps)? };
        Ok(OobReport {
            r2,
            predictions,
            covered,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Numerical(format!("model encoding: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Forest> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let forest: Forest = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        if forest.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Schema(format!(
                "model format version {} is not supported (expected {MODEL_FORMAT_VERSION})",
                forest.format_version
            )));
        }
        if forest.trees.iter().any(|t| !t.is_well_formed()) {
            return Err(Error::Schema(format!(
                "{} contains a malformed tree",
                path.display()
            )));
        }
        Ok(forest)
    }
}
