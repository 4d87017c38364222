//! Extremely randomized trees for regression.

mod forest;
mod importance;
mod tree;

pub use forest::{Forest, ForestConfig, MaxFeatures, OobReport, MODEL_FORMAT_VERSION};
pub use importance::{permutation_importance, select_top_features, FeatureImportance};
pub use tree::{Node, RandomSampler, SplitSampler, Tree, TreeParams};

use crate::error::{Error, Result};

/// Named real-valued columns of equal length.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    names: Vec<String>,
    n_rows: usize,
    columns: Vec<Vec<f64>>,
}

impl FeatureMatrix {
    pub fn from_columns(names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::Empty(
                "feature matrix needs at least one column".into(),
            ));
        }
        if names.len() != columns.len() {
            return Err(Error::Dimension(format!(
                "{} names for {} columns",
                names.len(),
                columns.len()
            )));
        }
        let n_rows = columns[0].len();
        if let Some(j) = columns.iter().position(|c| c.len() != n_rows) {
            return Err(Error::Dimension(format!(
                "column {:?} has {} rows, expected {n_rows}",
                names[j],
                columns[j].len()
            )));
        }
        Ok(Self {
            names,
            n_rows,
            columns,
        })
    }

    pub fn from_rows(names: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let width = names.len();
        if let Some(i) = rows.iter().position(|r| r.len() != width) {
            return Err(Error::Dimension(format!(
                "row {i} has {} values, expected {width}",
                rows[i].len()
            )));
        }
        let columns = (0..width)
            .map(|j| rows.iter().map(|r| r[j]).collect())
            .collect();
        Self::from_columns(names, columns)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    #[inline]
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.columns[j][i]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    /// Keeps the listed columns, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&j) = indices.iter().find(|&&j| j >= self.n_features()) {
            return Err(Error::Dimension(format!(
                "column {j} out of range for {} features",
                self.n_features()
            )));
        }
        Self::from_columns(
            indices.iter().map(|&j| self.names[j].clone()).collect(),
            indices.iter().map(|&j| self.columns[j].clone()).collect(),
        )
    }
}
