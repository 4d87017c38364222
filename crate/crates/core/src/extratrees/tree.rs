//! A single extremely randomized regression tree.

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::FeatureMatrix;
use crate::quantum::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        value: f64,
    },
}

/// Growth limits for one tree. `max_features` is already resolved to a count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub max_features: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub max_depth: Option<usize>,
}

/// Source of the two random choices made at every node.
pub trait SplitSampler {
    /// `k` distinct features from `0..n_features`, in draw order. Ties in
    /// split score go to the earlier draw.
    fn candidate_features(&mut self, n_features: usize, k: usize) -> Vec<usize>;

    /// A threshold for `feature`, nominally in the open interval `(lo, hi)`.
    fn threshold(&mut self, feature: usize, lo: f64, hi: f64) -> f64;
}

/// Uniform features without replacement, uniform thresholds.
pub struct RandomSampler<'a>(pub &'a mut Rng);

impl SplitSampler for RandomSampler<'_> {
    fn candidate_features(&mut self, n_features: usize, k: usize) -> Vec<usize> {
        index::sample(self.0, n_features, k).into_vec()
    }

    fn threshold(&mut self, _feature: usize, lo: f64, hi: f64) -> f64 {
        let u: f64 = self.0.random();
        lo + u * (hi - lo)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

struct Frame {
    node: usize,
    start: usize,
    end: usize,
    depth: usize,
}

struct Candidate {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl Tree {
    /// Grows a tree on the (multi)set of row indices `rows`.
    pub fn grow(
        x: &FeatureMatrix,
        y: &[f64],
        mut rows: Vec<u32>,
        params: &TreeParams,
        sampler: &mut impl SplitSampler,
    ) -> Tree {
        assert!(!rows.is_empty(), "cannot grow a tree on zero rows");
        let mut nodes = vec![Node::Leaf { value: 0.0 }];
        let mut stack = vec![Frame {
            node: 0,
            start: 0,
            end: rows.len(),
            depth: 0,
        }];
        let mut ys = Vec::new();

        while let Some(f) = stack.pop() {
            let idx = &mut rows[f.start..f.end];
            ys.clear();
            ys.extend(idx.iter().map(|&r| y[r as usize]));
            let n = ys.len();
            let mean = ys.iter().sum::<f64>() / n as f64;
            let constant = ys.iter().all(|&v| v == ys[0]);
            let depth_capped = params.max_depth.is_some_and(|d| f.depth >= d);
            if n < params.min_samples_split || depth_capped || constant {
                nodes[f.node] = Node::Leaf { value: mean };
                continue;
            }

            let Some(best) = best_split(x, idx, &ys, mean, params, sampler) else {
                nodes[f.node] = Node::Leaf { value: mean };
                continue;
            };

            // Partition in place: left block holds x <= threshold.
            let col = x.column(best.feature);
            let mut mid = 0;
            for i in 0..idx.len() {
                if col[idx[i] as usize] <= best.threshold {
                    idx.swap(i, mid);
                    mid += 1;
                }
            }
            let left = nodes.len();
            nodes.push(Node::Leaf { value: 0.0 });
            nodes.push(Node::Leaf { value: 0.0 });
            nodes[f.node] = Node::Split {
                feature: best.feature as u32,
                threshold: best.threshold,
                left: left as u32,
                right: left as u32 + 1,
            };
            stack.push(Frame {
                node: left + 1,
                start: f.start + mid,
                end: f.end,
                depth: f.depth + 1,
            });
            stack.push(Frame {
                node: left,
                start: f.start,
                end: f.start + mid,
                depth: f.depth + 1,
            });
        }
        Tree { nodes }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => {
                    1 + walk(nodes, left as usize).max(walk(nodes, right as usize))
                }
            }
        }
        walk(&self.nodes, 0)
    }

    /// Index of the leaf reached by a row whose feature `j` is `value(j)`.
    #[inline]
    pub fn leaf_index_with(&self, value: impl Fn(usize) -> f64) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if value(feature as usize) <= threshold {
                        left as usize
                    } else {
                        right as usize
                    };
                }
            }
        }
    }

    #[inline]
    pub fn predict_with(&self, value: impl Fn(usize) -> f64) -> f64 {
        match self.nodes[self.leaf_index_with(value)] {
            Node::Leaf { value } => value,
            Node::Split { .. } => unreachable!("routing ends at a leaf"),
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.predict_with(|j| row[j])
    }

    /// Structural check: child links point forward and every node is reached
    /// exactly once from the root.
    pub(crate) fn is_well_formed(&self) -> bool {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            if i >= self.nodes.len() || seen[i] {
                return false;
            }
            seen[i] = true;
            if let Node::Split {
                left,
                right,
                threshold,
                ..
            } = self.nodes[i]
            {
                if left as usize <= i || right as usize <= i || !threshold.is_finite() {
                    return false;
                }
                stack.push(left as usize);
                stack.push(right as usize);
            }
        }
        seen.iter().all(|&s| s)
    }
}

fn best_split(
    x: &FeatureMatrix,
    idx: &[u32],
    ys: &[f64],
    mean: f64,
    params: &TreeParams,
    sampler: &mut impl SplitSampler,
) -> Option<Candidate> {
    let n = ys.len() as f64;
    let total_sum: f64 = ys.iter().sum();
    let total_sq: f64 = ys.iter().map(|v| v * v).sum();
    let parent_var = ys.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;

    let mut best: Option<Candidate> = None;
    for feature in sampler.candidate_features(x.n_features(), params.max_features) {
        let col = x.column(feature);
        let (lo, hi) = idx
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
                let v = col[r as usize];
                (lo.min(v), hi.max(v))
            });
        if lo >= hi {
            continue;
        }
        let mut threshold = sampler.threshold(feature, lo, hi);
        if !(lo < threshold && threshold < hi) {
            threshold = lo + 0.5 * (hi - lo);
            if !(lo < threshold && threshold < hi) {
                continue;
            }
        }

        let (mut nl, mut sl, mut ql) = (0usize, 0.0, 0.0);
        for (&r, &v) in idx.iter().zip(ys) {
            if col[r as usize] <= threshold {
                nl += 1;
                sl += v;
                ql += v * v;
            }
        }
        let nr = ys.len() - nl;
        if nl < params.min_samples_leaf || nr < params.min_samples_leaf {
            continue;
        }
        let (nlf, nrf) = (nl as f64, nr as f64);
        let (sr, qr) = (total_sum - sl, total_sq - ql);
        let var_l = (ql / nlf - (sl / nlf).powi(2)).max(0.0);
        let var_r = (qr / nrf - (sr / nrf).powi(2)).max(0.0);
        let score = parent_var - (nlf / n) * var_l - (nrf / n) * var_r;
        if best.as_ref().is_none_or(|b| score > b.score) {
            best = Some(Candidate {
                feature,
                threshold,
                score,
            });
        }
    }
    best
}
