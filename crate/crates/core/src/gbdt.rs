//! Second-order gradient boosting with binary logistic loss. One engine
//! serves both the depth-wise/subsampled configuration and the
//! leaf-wise/GOSS configuration.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::util::{derive_seed, rng_from_seed, sigmoid};

#[derive(Debug, Error)]
pub enum GbdtError {
    #[error("training data must contain both classes")]
    SingleClass,
    #[error("invalid params: {0}")]
    BadParams(String),
    #[error("leaf weight denominator H + lambda must be positive")]
    ZeroDenominator,
    #[error("non-finite training loss at iteration {0}")]
    NonFiniteLoss(usize),
    #[error("non-finite feature value at index {0}")]
    NonFiniteFeature(usize),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GossParams {
    /// Top-gradient keep rate.
    pub a: f64,
    /// Sample rate over the remaining small-gradient rows.
    pub b: f64,
}

impl Default for GossParams {
    fn default() -> Self {
        GossParams { a: 0.2, b: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Growth {
    DepthWise { max_depth: usize },
    LeafWise { max_leaves: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoostParams {
    pub n_trees: usize,
    pub learning_rate: f64,
    pub growth: Growth,
    /// Leaf L2 penalty (lambda in the per-leaf quadratic).
    pub lambda: f64,
    /// Per-leaf complexity penalty subtracted from every split gain.
    pub gamma: f64,
    /// Plain stochastic row sampling; 1.0 disables it.
    pub subsample: f64,
    pub goss: Option<GossParams>,
    pub seed: u64,
}

impl Default for BoostParams {
    fn default() -> Self {
        BoostParams {
            n_trees: 100,
            learning_rate: 0.1,
            growth: Growth::DepthWise { max_depth: 6 },
            lambda: 1.0,
            gamma: 0.0,
            subsample: 1.0,
            goss: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradHess {
    pub g: f64,
    pub h: f64,
}

/// First- and second-order statistics of the logistic loss at the current
/// raw score: g = p - y, h = p(1 - p).
pub fn grad_hess(y: u8, raw_score: f64) -> GradHess {
    let p = sigmoid(raw_score);
    GradHess {
        g: p - f64::from(y),
        h: p * (1.0 - p),
    }
}

/// Minimizer of the per-leaf quadratic: w* = -G / (H + lambda).
pub fn leaf_weight(g_sum: f64, h_sum: f64, lambda: f64) -> Result<f64, GbdtError> {
    let denom = h_sum + lambda;
    if denom <= 0.0 {
        return Err(GbdtError::ZeroDenominator);
    }
    Ok(-g_sum / denom)
}

/// Gain of splitting a node with child statistics (G_l, H_l), (G_r, H_r):
/// 1/2 [G_l^2/(H_l+l) + G_r^2/(H_r+l) - (G_l+G_r)^2/(H_l+H_r+l)] - gamma.
pub fn split_gain(g_l: f64, h_l: f64, g_r: f64, h_r: f64, lambda: f64, gamma: f64) -> f64 {
    let score = |g: f64, h: f64| g * g / (h + lambda);
    0.5 * (score(g_l, h_l) + score(g_r, h_r) - score(g_l + g_r, h_l + h_r)) - gamma
}

/// GOSS: keep the ceil(a n) rows with the largest |g| (set A, weight 1),
/// uniformly sample ceil(b n) of the rest (set B, weight (1-a)/b). Each
/// remainder row is then included with probability b/(1-a), so the weighted
/// gradient sum over A and B is an unbiased estimate of the full-set sum.
/// Returned indices are ascending so downstream sums match the full-set
/// iteration order.
pub fn goss_sample(
    grads: &[f64],
    p: &GossParams,
    seed: u64,
) -> Result<(Vec<usize>, Vec<f64>), GbdtError> {
    if !(0.0 < p.a && p.a < 1.0) {
        return Err(GbdtError::BadParams(format!("goss a must be in (0,1), got {}", p.a)));
    }
    if !(0.0 < p.b && p.b <= 1.0 - p.a) {
        return Err(GbdtError::BadParams(format!(
            "goss b must be in (0, 1-a], got {}",
            p.b
        )));
    }
    let n = grads.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        grads[j]
            .abs()
            .partial_cmp(&grads[i].abs())
            .unwrap()
            .then(i.cmp(&j))
    });
    // absorb float noise like 0.2 * 100 = 20.000000000000004 before ceiling
    let ceil_count = |x: f64| (x - 1e-9).ceil().max(0.0) as usize;
    let top = ceil_count(p.a * n as f64).min(n);
    let (a_set, rest) = order.split_at(top);
    if rest.is_empty() {
        // ceil(a n) = n keeps every row; no sampling happens
        return Ok(((0..n).collect(), vec![1.0; n]));
    }
    if (n as f64) < 1.0 / p.b {
        return Err(GbdtError::BadParams(format!(
            "need at least 1/b = {} rows for goss, got {n}",
            (1.0 / p.b).ceil()
        )));
    }
    let b_count = ceil_count(p.b * n as f64).min(rest.len());
    let mut rest: Vec<usize> = rest.to_vec();
    let mut rng = rng_from_seed(seed);
    for j in 0..b_count {
        let swap = j + rand::Rng::gen_range(&mut rng, 0..rest.len() - j);
        rest.swap(j, swap);
    }
    let amplification = (1.0 - p.a) / p.b;
    let mut picked: Vec<(usize, f64)> = a_set.iter().map(|&i| (i, 1.0)).collect();
    picked.extend(rest[..b_count].iter().map(|&i| (i, amplification)));
    picked.sort_by_key(|&(i, _)| i);
    let indices = picked.iter().map(|&(i, _)| i).collect();
    let out_weights = picked.iter().map(|&(_, w)| w).collect();
    Ok((indices, out_weights))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum RegNode {
    Internal {
        feature: usize,
        threshold: f64,
        left: Box<RegNode>,
        right: Box<RegNode>,
    },
    Leaf {
        weight: f64,
    },
}

impl RegNode {
    pub fn output(&self, row: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                RegNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if row[*feature] <= *threshold { left } else { right };
                }
                RegNode::Leaf { weight } => return *weight,
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoostedModel {
    pub base_score: f64,
    pub trees: Vec<RegNode>,
    pub params: BoostParams,
}

impl BoostedModel {
    pub fn predict_raw(&self, row: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.output(row)).sum();
        self.base_score + self.params.learning_rate * sum
    }

    /// (1 - p1, p1) with p1 = sigmoid(raw score). Sums to 1 exactly.
    pub fn predict_proba(&self, row: &[f64]) -> Result<[f64; 2], GbdtError> {
        if let Some(bad) = row.iter().position(|v| !v.is_finite()) {
            return Err(GbdtError::NonFiniteFeature(bad));
        }
        let p1 = sigmoid(self.predict_raw(row));
        Ok([1.0 - p1, p1])
    }
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

/// Exact greedy scan: weighted (G, H) prefix sums over sorted feature values,
/// thresholds at midpoints of consecutive distinct values. Ties break toward
/// (lower feature, lower threshold).
fn find_best_split(
    x: &[Vec<f64>],
    stats: &[GradHess],
    weights: &[f64],
    indices: &[usize],
    lambda: f64,
    gamma: f64,
    scratch: &mut Vec<(f64, f64, f64)>,
) -> Option<BestSplit> {
    if indices.len() < 2 {
        return None;
    }
    let n_features = x[0].len();
    let (mut g_total, mut h_total) = (0.0, 0.0);
    for &i in indices {
        g_total += weights[i] * stats[i].g;
        h_total += weights[i] * stats[i].h;
    }
    let mut best: Option<BestSplit> = None;
    for feature in 0..n_features {
        scratch.clear();
        scratch.extend(
            indices
                .iter()
                .map(|&i| (x[i][feature], weights[i] * stats[i].g, weights[i] * stats[i].h)),
        );
        scratch.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let (mut g_l, mut h_l) = (0.0, 0.0);
        for w in 0..scratch.len() - 1 {
            let (value, g, h) = scratch[w];
            g_l += g;
            h_l += h;
            let next = scratch[w + 1].0;
            if next <= value {
                continue;
            }
            let gain = split_gain(g_l, h_l, g_total - g_l, h_total - h_l, lambda, gamma);
            let threshold = value + (next - value) / 2.0;
            let better = match &best {
                None => gain > 0.0,
                Some(b) => {
                    gain > b.gain
                        || (gain == b.gain && (feature, threshold) < (b.feature, b.threshold))
                }
            };
            if better {
                best = Some(BestSplit {
                    feature,
                    threshold,
                    gain,
                });
            }
        }
    }
    best
}

fn partition(
    x: &[Vec<f64>],
    indices: &[usize],
    feature: usize,
    threshold: f64,
) -> (Vec<usize>, Vec<usize>) {
    let mut left = Vec::new();
    let mut right = Vec::new();
    for &i in indices {
        if x[i][feature] <= threshold {
            left.push(i);
        } else {
            right.push(i);
        }
    }
    (left, right)
}

fn make_leaf(
    stats: &[GradHess],
    weights: &[f64],
    indices: &[usize],
    lambda: f64,
) -> RegNode {
    let (mut g, mut h) = (0.0, 0.0);
    for &i in indices {
        g += weights[i] * stats[i].g;
        h += weights[i] * stats[i].h;
    }
    let weight = leaf_weight(g, h, lambda).unwrap_or(0.0);
    RegNode::Leaf { weight }
}

#[allow(clippy::too_many_arguments)]
fn grow_depthwise(
    x: &[Vec<f64>],
    stats: &[GradHess],
    weights: &[f64],
    indices: Vec<usize>,
    depth: usize,
    max_depth: usize,
    lambda: f64,
    gamma: f64,
    scratch: &mut Vec<(f64, f64, f64)>,
) -> RegNode {
    if depth >= max_depth {
        return make_leaf(stats, weights, &indices, lambda);
    }
    let Some(split) = find_best_split(x, stats, weights, &indices, lambda, gamma, scratch) else {
        return make_leaf(stats, weights, &indices, lambda);
    };
    let (left_idx, right_idx) = partition(x, &indices, split.feature, split.threshold);
    drop(indices);
    RegNode::Internal {
        feature: split.feature,
        threshold: split.threshold,
        left: Box::new(grow_depthwise(
            x, stats, weights, left_idx, depth + 1, max_depth, lambda, gamma, scratch,
        )),
        right: Box::new(grow_depthwise(
            x, stats, weights, right_idx, depth + 1, max_depth, lambda, gamma, scratch,
        )),
    }
}

fn grow_leafwise(
    x: &[Vec<f64>],
    stats: &[GradHess],
    weights: &[f64],
    indices: Vec<usize>,
    max_leaves: usize,
    lambda: f64,
    gamma: f64,
    scratch: &mut Vec<(f64, f64, f64)>,
) -> RegNode {
    // arena of growing nodes; slot 0 is the root
    enum Slot {
        Leaf(Vec<usize>),
        Internal {
            feature: usize,
            threshold: f64,
            left: usize,
            right: usize,
        },
    }
    let mut arena: Vec<Slot> = vec![Slot::Leaf(indices)];
    // (gain, insertion order) max-heap; older candidates win ties
    let mut frontier: Vec<(f64, usize)> = Vec::new();
    let push_candidate = |arena: &Vec<Slot>,
                          frontier: &mut Vec<(f64, usize)>,
                          slot: usize,
                          scratch: &mut Vec<(f64, f64, f64)>| {
        if let Slot::Leaf(idx) = &arena[slot] {
            if let Some(s) = find_best_split(x, stats, weights, idx, lambda, gamma, scratch) {
                frontier.push((s.gain, slot));
            }
        }
    };
    push_candidate(&arena, &mut frontier, 0, scratch);
    let mut n_leaves = 1;
    while n_leaves < max_leaves && !frontier.is_empty() {
        let best_pos = frontier
            .iter()
            .enumerate()
            .max_by(|(ai, a), (bi, b)| {
                a.0.partial_cmp(&b.0)
                    .unwrap()
                    .then(a.1.cmp(&b.1).reverse())
                    .then(ai.cmp(bi))
            })
            .map(|(i, _)| i)
            .unwrap();
        let (_, slot) = frontier.swap_remove(best_pos);
        // recompute the split so the stored gain never drifts from the data
        let idx = match &arena[slot] {
            Slot::Leaf(idx) => idx.clone(),
            _ => unreachable!(),
        };
        let Some(split) = find_best_split(x, stats, weights, &idx, lambda, gamma, scratch) else {
            continue;
        };
        let (left_idx, right_idx) = partition(x, &idx, split.feature, split.threshold);
        let left_slot = arena.len();
        arena.push(Slot::Leaf(left_idx));
        let right_slot = arena.len();
        arena.push(Slot::Leaf(right_idx));
        arena[slot] = Slot::Internal {
            feature: split.feature,
            threshold: split.threshold,
            left: left_slot,
            right: right_slot,
        };
        n_leaves += 1;
        push_candidate(&arena, &mut frontier, left_slot, scratch);
        push_candidate(&arena, &mut frontier, right_slot, scratch);
    }
    fn build(
        arena: &Vec<Slot>,
        slot: usize,
        stats: &[GradHess],
        weights: &[f64],
        lambda: f64,
    ) -> RegNode {
        match &arena[slot] {
            Slot::Leaf(idx) => make_leaf(stats, weights, idx, lambda),
            Slot::Internal {
                feature,
                threshold,
                left,
                right,
            } => RegNode::Internal {
                feature: *feature,
                threshold: *threshold,
                left: Box::new(build(arena, *left, stats, weights, lambda)),
                right: Box::new(build(arena, *right, stats, weights, lambda)),
            },
        }
    }
    build(&arena, 0, stats, weights, lambda)
}

fn log_loss(y: &[u8], raw: &[f64]) -> f64 {
    let mut total = 0.0;
    for (&label, &score) in y.iter().zip(raw) {
        let p = sigmoid(score).clamp(1e-15, 1.0 - 1e-15);
        total -= if label == 1 { p.ln() } else { (1.0 - p).ln() };
    }
    total / y.len() as f64
}

/// Boosting loop: base score at the logit of the positive rate, then per
/// iteration compute (g, h) at the current raw scores, optionally sample
/// rows (GOSS or plain subsampling), grow one regression tree by split
/// gain, and update raw scores with learning-rate shrinkage.
pub fn fit_boosted(x: &[Vec<f64>], y: &[u8], params: &BoostParams) -> Result<BoostedModel, GbdtError> {
    if x.is_empty() || x.len() != y.len() {
        return Err(GbdtError::BadParams("empty or mismatched training data".into()));
    }
    if !(0.0 < params.learning_rate && params.learning_rate <= 1.0) {
        return Err(GbdtError::BadParams(format!(
            "learning_rate must be in (0,1], got {}",
            params.learning_rate
        )));
    }
    if params.lambda < 0.0 || params.gamma < 0.0 {
        return Err(GbdtError::BadParams("lambda and gamma must be nonnegative".into()));
    }
    if !(0.0 < params.subsample && params.subsample <= 1.0) {
        return Err(GbdtError::BadParams("subsample must be in (0,1]".into()));
    }
    let n = x.len();
    let pos = y.iter().filter(|&&l| l == 1).count();
    if pos == 0 || pos == n {
        return Err(GbdtError::SingleClass);
    }
    let base_score = crate::util::logit(pos as f64 / n as f64);
    let mut raw = vec![base_score; n];
    let mut trees = Vec::with_capacity(params.n_trees);
    let mut scratch = Vec::new();
    for iter in 0..params.n_trees {
        let stats: Vec<GradHess> = y.iter().zip(&raw).map(|(&l, &r)| grad_hess(l, r)).collect();
        let mut weights = vec![1.0; n];
        let indices: Vec<usize> = if let Some(goss) = &params.goss {
            let grads: Vec<f64> = stats.iter().map(|s| s.g).collect();
            let (idx, w) = goss_sample(&grads, goss, derive_seed(params.seed, iter as u64))?;
            for (&i, &wi) in idx.iter().zip(&w) {
                weights[i] = wi;
            }
            idx
        } else if params.subsample < 1.0 {
            let keep = ((params.subsample * n as f64).ceil() as usize).min(n);
            let mut order: Vec<usize> = (0..n).collect();
            let mut rng = rng_from_seed(derive_seed(params.seed, iter as u64));
            for j in 0..keep {
                let swap = j + rand::Rng::gen_range(&mut rng, 0..n - j);
                order.swap(j, swap);
            }
            let mut idx = order[..keep].to_vec();
            idx.sort_unstable();
            idx
        } else {
            (0..n).collect()
        };
        let tree = match params.growth {
            Growth::DepthWise { max_depth } => grow_depthwise(
                x,
                &stats,
                &weights,
                indices,
                0,
                max_depth,
                params.lambda,
                params.gamma,
                &mut scratch,
            ),
            Growth::LeafWise { max_leaves } => grow_leafwise(
                x,
                &stats,
                &weights,
                indices,
                max_leaves.max(1),
                params.lambda,
                params.gamma,
                &mut scratch,
            ),
        };
        for (i, row) in x.iter().enumerate() {
            raw[i] += params.learning_rate * tree.output(row);
        }
        let loss = log_loss(y, &raw);
        if !loss.is_finite() {
            return Err(GbdtError::NonFiniteLoss(iter));
        }
        trees.push(tree);
    }
    Ok(BoostedModel {
        base_score,
        trees,
        params: params.clone(),
    })
}
