//! Single binary decision trees: weighted-impurity splits with gini or
//! entropy, midpoint thresholds, per-split feature subsampling.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::util::rng_from_seed;

#[derive(Debug, Error)]
pub enum CartError {
    #[error("empty input")]
    EmptyInput,
    #[error("class counts are all zero")]
    AllZeroCounts,
    #[error("non-finite feature value at index {0}")]
    NonFiniteFeature(usize),
    #[error("invalid params: {0}")]
    BadParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Gini,
    Entropy,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub criterion: Criterion,
    /// Features sampled per split.
    pub max_features: usize,
    pub min_samples_leaf: usize,
    pub seed: u64,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: 10,
            criterion: Criterion::Gini,
            max_features: 5,
            min_samples_leaf: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    /// Weighted child impurity (n_l H_l + n_r H_r) / N.
    pub weighted_impurity: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum TreeNode {
    Internal {
        split: SplitCandidate,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        counts: [u64; 2],
    },
}

/// Gini = 1 - sum p^2; entropy = -sum p log2 p with 0 log 0 = 0.
pub fn impurity(counts: [u64; 2], criterion: Criterion) -> Result<f64, CartError> {
    let total = counts[0] + counts[1];
    if total == 0 {
        return Err(CartError::AllZeroCounts);
    }
    Ok(impurity_raw(counts[0] as f64, counts[1] as f64, criterion))
}

fn impurity_raw(c0: f64, c1: f64, criterion: Criterion) -> f64 {
    let n = c0 + c1;
    let p0 = c0 / n;
    let p1 = c1 / n;
    match criterion {
        Criterion::Gini => 1.0 - p0 * p0 - p1 * p1,
        Criterion::Entropy => {
            let term = |p: f64| if p > 0.0 { -p * p.log2() } else { 0.0 };
            term(p0) + term(p1)
        }
    }
}

struct TreeBuilder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [u8],
    params: &'a TreeParams,
    n_features: usize,
    rng: ChaCha8Rng,
    feature_ids: Vec<usize>,
    scratch: Vec<(f64, u8)>,
}

impl<'a> TreeBuilder<'a> {
    fn counts(&self, indices: &[usize]) -> [u64; 2] {
        let ones: u64 = indices.iter().map(|&i| u64::from(self.y[i])).sum();
        [indices.len() as u64 - ones, ones]
    }

    /// Argmin of the weighted child impurity over sampled features and
    /// midpoint thresholds; ties break toward (lower feature, lower
    /// threshold). None when no candidate strictly reduces impurity.
    fn best_split(&mut self, indices: &[usize]) -> Option<SplitCandidate> {
        let counts = self.counts(indices);
        if counts[0] == 0 || counts[1] == 0 || indices.len() < 2 {
            return None;
        }
        let parent = impurity_raw(counts[0] as f64, counts[1] as f64, self.params.criterion);
        let k = self.params.max_features.min(self.n_features).max(1);
        // partial Fisher-Yates draw of k distinct features
        for j in 0..k {
            let swap = j + (rand::Rng::gen_range(&mut self.rng, 0..self.n_features - j));
            self.feature_ids.swap(j, swap);
        }
        let n = indices.len() as f64;
        let total1 = counts[1] as f64;
        let mut best: Option<SplitCandidate> = None;
        for fi in 0..k {
            let feature = self.feature_ids[fi];
            self.scratch.clear();
            self.scratch
                .extend(indices.iter().map(|&i| (self.x[i][feature], self.y[i])));
            self.scratch
                .sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            let mut left_n = 0.0;
            let mut left_1 = 0.0;
            let min_leaf = self.params.min_samples_leaf as f64;
            for w in 0..self.scratch.len() - 1 {
                let (value, label) = self.scratch[w];
                left_n += 1.0;
                left_1 += f64::from(label);
                let next = self.scratch[w + 1].0;
                if next <= value {
                    continue;
                }
                let right_n = n - left_n;
                if left_n < min_leaf || right_n < min_leaf {
                    continue;
                }
                let right_1 = total1 - left_1;
                let h_l = impurity_raw(left_n - left_1, left_1, self.params.criterion);
                let h_r = impurity_raw(right_n - right_1, right_1, self.params.criterion);
                let weighted = (left_n * h_l + right_n * h_r) / n;
                let threshold = value + (next - value) / 2.0;
                let better = match &best {
                    None => weighted < parent,
                    Some(b) => {
                        weighted < b.weighted_impurity
                            || (weighted == b.weighted_impurity
                                && (feature, threshold) < (b.feature, b.threshold))
                    }
                };
                if better {
                    best = Some(SplitCandidate {
                        feature,
                        threshold,
                        weighted_impurity: weighted,
                    });
                }
            }
        }
        best
    }

    fn grow(&mut self, indices: &mut Vec<usize>, depth: usize) -> TreeNode {
        let counts = self.counts(indices);
        if depth >= self.params.max_depth || counts[0] == 0 || counts[1] == 0 {
            return TreeNode::Leaf { counts };
        }
        let Some(split) = self.best_split(indices) else {
            return TreeNode::Leaf { counts };
        };
        let mut left_idx = Vec::new();
        let mut right_idx = Vec::new();
        for &i in indices.iter() {
            if self.x[i][split.feature] <= split.threshold {
                left_idx.push(i);
            } else {
                right_idx.push(i);
            }
        }
        indices.clear();
        indices.shrink_to_fit();
        let left = Box::new(self.grow(&mut left_idx, depth + 1));
        let right = Box::new(self.grow(&mut right_idx, depth + 1));
        TreeNode::Internal { split, left, right }
    }
}

/// Best split over the full row set (entry point for single-tree use; the
/// forest drives [`fit_tree_on_indices`] with bootstrap index sets).
pub fn best_split(
    x: &[Vec<f64>],
    y: &[u8],
    params: &TreeParams,
) -> Result<Option<SplitCandidate>, CartError> {
    validate(x, y, params)?;
    let mut builder = make_builder(x, y, params);
    let indices: Vec<usize> = (0..x.len()).collect();
    Ok(builder.best_split(&indices))
}

fn validate(x: &[Vec<f64>], y: &[u8], params: &TreeParams) -> Result<(), CartError> {
    if x.is_empty() {
        return Err(CartError::EmptyInput);
    }
    if x.len() != y.len() {
        return Err(CartError::BadParams("x/y length mismatch".into()));
    }
    if params.max_features < 1 {
        return Err(CartError::BadParams("max_features must be >= 1".into()));
    }
    Ok(())
}

fn make_builder<'a>(x: &'a [Vec<f64>], y: &'a [u8], params: &'a TreeParams) -> TreeBuilder<'a> {
    let n_features = x[0].len();
    TreeBuilder {
        x,
        y,
        params,
        n_features,
        rng: rng_from_seed(params.seed),
        feature_ids: (0..n_features).collect(),
        scratch: Vec::new(),
    }
}

pub fn fit_tree(x: &[Vec<f64>], y: &[u8], params: &TreeParams) -> Result<TreeNode, CartError> {
    let indices: Vec<usize> = (0..x.len()).collect();
    fit_tree_on_indices(x, y, indices, params)
}

/// Fit on an explicit row index multiset (bootstrap resamples may repeat
/// indices).
pub fn fit_tree_on_indices(
    x: &[Vec<f64>],
    y: &[u8],
    mut indices: Vec<usize>,
    params: &TreeParams,
) -> Result<TreeNode, CartError> {
    validate(x, y, params)?;
    if indices.is_empty() {
        return Err(CartError::EmptyInput);
    }
    let mut builder = make_builder(x, y, params);
    Ok(builder.grow(&mut indices, 0))
}

/// Route a row to its leaf and normalize the class counts.
pub fn predict_proba_tree(tree: &TreeNode, row: &[f64]) -> Result<[f64; 2], CartError> {
    if let Some(bad) = row.iter().position(|v| !v.is_finite()) {
        return Err(CartError::NonFiniteFeature(bad));
    }
    let mut node = tree;
    loop {
        match node {
            TreeNode::Internal { split, left, right } => {
                node = if row[split.feature] <= split.threshold {
                    left
                } else {
                    right
                };
            }
            TreeNode::Leaf { counts } => {
                let total = (counts[0] + counts[1]) as f64;
                if total == 0.0 {
                    return Err(CartError::AllZeroCounts);
                }
                return Ok([counts[0] as f64 / total, counts[1] as f64 / total]);
            }
        }
    }
}

pub fn tree_depth(tree: &TreeNode) -> usize {
    match tree {
        TreeNode::Leaf { .. } => 0,
        TreeNode::Internal { left, right, .. } => 1 + tree_depth(left).max(tree_depth(right)),
    }
}
