//! Bagged random forest over the CART core: bootstrap resamples, per-split
//! feature subsampling, probability averaging across trees.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cart::{self, CartError, TreeNode, TreeParams};
use crate::util::{derive_seed, rng_from_seed};

#[derive(Debug, Error)]
pub enum ForestError {
    #[error("n_trees must be in 1..=500, got {0}")]
    BadTreeCount(usize),
    #[error("training data must contain both classes")]
    SingleClass,
    #[error(transparent)]
    Cart(#[from] CartError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub tree: TreeParams,
    pub seed: u64,
    /// Test hook: false trains every tree on the full row set.
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            tree: TreeParams::default(),
            seed: 0,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<TreeNode>,
    pub params: ForestParams,
}

/// Each tree trains on a bootstrap resample (n draws with replacement).
/// Per-tree seeds derive from the master seed by a counter, so growing
/// n_trees never reshuffles earlier trees.
pub fn fit_forest(x: &[Vec<f64>], y: &[u8], params: &ForestParams) -> Result<Forest, ForestError> {
    if params.n_trees < 1 || params.n_trees > 500 {
        return Err(ForestError::BadTreeCount(params.n_trees));
    }
    if x.is_empty() {
        return Err(ForestError::Cart(CartError::EmptyInput));
    }
    let pos = y.iter().filter(|&&l| l == 1).count();
    if pos == 0 || pos == y.len() {
        return Err(ForestError::SingleClass);
    }
    let n = x.len();
    let mut trees = Vec::with_capacity(params.n_trees);
    for t in 0..params.n_trees {
        let tree_seed = derive_seed(params.seed, t as u64);
        let indices: Vec<usize> = if params.bootstrap {
            let mut rng = rng_from_seed(derive_seed(tree_seed, u64::MAX));
            (0..n).map(|_| rng.gen_range(0..n)).collect()
        } else {
            (0..n).collect()
        };
        let tree_params = TreeParams {
            seed: tree_seed,
            ..params.tree.clone()
        };
        trees.push(cart::fit_tree_on_indices(x, y, indices, &tree_params)?);
    }
    Ok(Forest {
        trees,
        params: params.clone(),
    })
}

impl Forest {
    /// Arithmetic mean of the member trees' probability vectors.
    pub fn predict_proba(&self, row: &[f64]) -> Result<[f64; 2], ForestError> {
        let mut acc = [0.0, 0.0];
        for tree in &self.trees {
            let p = cart::predict_proba_tree(tree, row)?;
            acc[0] += p[0];
            acc[1] += p[1];
        }
        let m = self.trees.len() as f64;
        Ok([acc[0] / m, acc[1] / m])
    }
}
