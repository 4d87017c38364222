use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::datagen::GridSpec;
use crate::error::{Error, Result};
use crate::extratrees::{ForestConfig, MaxFeatures};
use crate::process::N_FEATURES;

/// Flat experiment configuration. Command-line flags mirror keys of the same
/// name and take precedence over the file.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub workers: Option<usize>,

    pub k1: Vec<usize>,
    pub k2: Vec<usize>,
    pub phi: Vec<f64>,
    pub per_cell: usize,
    pub ood_per_cell: usize,

    pub split: [f64; 3],
    pub stratified: bool,

    pub trees: usize,
    pub max_features: Option<usize>,
    /// Draw the `max_features` subset once per tree instead of per node.
    pub max_features_per_tree: bool,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub max_depth: Option<usize>,
    pub bootstrap: bool,

    pub include_k1: bool,
    pub include_phi: bool,
    /// Probability columns to train on (0-based into the 192); all if unset.
    pub feature_subset: Option<Vec<usize>>,

    pub repeats: usize,
    pub top_k: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let grid = GridSpec::training_grid(256, 0);
        let forest = ForestConfig::default();
        Self {
            seed: 0,
            out: PathBuf::from("out"),
            workers: None,
            k1: grid.k1_values,
            k2: grid.k2_values,
            phi: grid.phi_values,
            per_cell: grid.examples_per_cell,
            ood_per_cell: 256,
            split: [0.7, 0.2, 0.1],
            stratified: false,
            trees: forest.n_trees,
            max_features: None,
            max_features_per_tree: false,
            min_samples_split: forest.min_samples_split,
            min_samples_leaf: forest.min_samples_leaf,
            max_depth: forest.max_depth,
            bootstrap: forest.bootstrap,
            include_k1: true,
            include_phi: true,
            feature_subset: None,
            repeats: 5,
            top_k: 41,
        }
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, col)
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
            Error::Parse {
                path: path.to_path_buf(),
                line,
                column,
                message: e.message().to_string(),
            }
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path)
    }

    pub fn grid(&self) -> GridSpec {
        GridSpec {
            k1_values: self.k1.clone(),
            k2_values: self.k2.clone(),
            phi_values: self.phi.clone(),
            examples_per_cell: self.per_cell,
            master_seed: self.seed,
        }
    }

    pub fn forest(&self, seed: u64) -> ForestConfig {
        ForestConfig {
            n_trees: self.trees,
            max_features: match (self.max_features, self.max_features_per_tree) {
                (None, _) => MaxFeatures::All,
                (Some(k), false) => MaxFeatures::Count(k),
                (Some(k), true) => MaxFeatures::PerTree(k),
            },
            min_samples_split: self.min_samples_split,
            min_samples_leaf: self.min_samples_leaf,
            max_depth: self.max_depth,
            bootstrap: self.bootstrap,
            seed,
        }
    }

    pub fn fractions(&self) -> (f64, f64, f64) {
        (self.split[0], self.split[1], self.split[2])
    }

    /// Training columns: selected probabilities, then the side features.
    pub fn training_columns(&self) -> Result<Vec<String>> {
        let names = crate::datagen::feature_names();
        let mut cols: Vec<String> = match &self.feature_subset {
            None => names,
            Some(idx) => {
                let mut idx = idx.clone();
                idx.sort_unstable();
                idx.dedup();
                if idx.is_empty() {
                    return Err(Error::Config("feature_subset is empty".into()));
                }
                if let Some(&j) = idx.iter().find(|&&j| j >= N_FEATURES) {
                    return Err(Error::Config(format!(
                        "feature_subset index {j} out of range 0..{N_FEATURES}"
                    )));
                }
                idx.into_iter().map(|j| names[j].clone()).collect()
            }
        };
        if self.include_k1 {
            cols.push(crate::datagen::K1_COLUMN.to_string());
        }
        if self.include_phi {
            cols.push(crate::datagen::PHI_COLUMN.to_string());
        }
        Ok(cols)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid().validate()?;
        if self.ood_per_cell == 0 {
            return Err(Error::Config("ood_per_cell must be >= 1".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be >= 1".into()));
        }
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be >= 1".into()));
        }
        if self.top_k == 0 {
            return Err(Error::Config("top_k must be >= 1".into()));
        }
        crate::datagen::split_sizes(1000, self.fractions())?;
        self.training_columns()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_desk_protocol() {
        let c = ExperimentConfig::default();
        assert_eq!(c.grid().total_examples(), 12288);
        assert_eq!(c.trees, 80);
        assert_eq!(c.training_columns().unwrap().len(), 194);
        c.validate().unwrap();
    }

    #[test]
    fn parses_partial_file() {
        let c = ExperimentConfig::from_toml(
            "seed = 7\nper_cell = 3\nk2 = [1, 2]\ninclude_phi = false\n",
            Path::new("x.toml"),
        )
        .unwrap();
        assert_eq!((c.seed, c.per_cell), (7, 3));
        assert_eq!(c.k2, vec![1, 2]);
        assert_eq!(c.training_columns().unwrap().last().unwrap(), "k1");
    }

    #[test]
    fn unknown_key_reports_position() {
        let err =
            ExperimentConfig::from_toml("seed = 1\nbogus = 2\n", Path::new("x.toml")).unwrap_err();
        match err {
            Error::Parse { line, column, .. } => assert_eq!((line, column), (2, 1)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn subset_columns() {
        let c = ExperimentConfig {
            feature_subset: Some(vec![3, 0, 3]),
            include_k1: false,
            include_phi: false,
            ..Default::default()
        };
        assert_eq!(c.training_columns().unwrap(), vec!["p_0001", "p_0011"]);
        let bad = ExperimentConfig {
            feature_subset: Some(vec![192]),
            ..Default::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }
}
