//! SMOTE synthesis and ENN editing for class balancing, over a
//! Euclidean nearest-neighbour index.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::util::rng_from_seed;

#[derive(Debug, Error)]
pub enum ResampleError {
    #[error("knn index needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("points have mixed dimensions")]
    MixedDimensions,
    #[error("k = {k} but only {available} other points are available")]
    KTooLarge { k: usize, available: usize },
    #[error("minority class has {minority} samples; needs more than k_neighbors = {k} (use a smaller k)")]
    MinorityTooSmall { minority: usize, k: usize },
    #[error("ENN needs at least k+1 = {0} rows")]
    TooFewForEnn(usize),
    #[error("both classes must be present")]
    SingleClass,
    #[error("invalid parameter: {0}")]
    BadParam(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SmoteParams {
    pub k_neighbors: usize,
    /// Desired minority/majority ratio after synthesis.
    pub target_ratio: f64,
    pub seed: u64,
}

impl Default for SmoteParams {
    fn default() -> Self {
        SmoteParams {
            k_neighbors: 5,
            target_ratio: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnnParams {
    pub k: usize,
}

impl Default for EnnParams {
    fn default() -> Self {
        EnnParams { k: 5 }
    }
}

// ---------------------------------------------------------------------------
// kd-tree nearest-neighbour index

struct KdNode {
    point: usize,
    axis: usize,
    left: Option<Box<KdNode>>,
    right: Option<Box<KdNode>>,
}

/// Euclidean k-nearest-neighbour queries; distance ties break toward the
/// lower row index.
pub struct KnnIndex {
    points: Vec<Vec<f64>>,
    root: Option<Box<KdNode>>,
    dim: usize,
}

#[derive(Clone, Copy, PartialEq)]
struct HeapItem {
    dist2: f64,
    idx: usize,
}

impl Eq for HeapItem {}
impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.dist2
            .partial_cmp(&other.dist2)
            .unwrap()
            .then(self.idx.cmp(&other.idx))
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl KnnIndex {
    pub fn build(points: &[Vec<f64>]) -> Result<Self, ResampleError> {
        if points.len() < 2 {
            return Err(ResampleError::TooFewPoints(points.len()));
        }
        let dim = points[0].len();
        if points.iter().any(|p| p.len() != dim) {
            return Err(ResampleError::MixedDimensions);
        }
        let mut indices: Vec<usize> = (0..points.len()).collect();
        let root = Self::build_node(points, &mut indices, 0, dim);
        Ok(KnnIndex {
            points: points.to_vec(),
            root,
            dim,
        })
    }

    fn build_node(
        points: &[Vec<f64>],
        indices: &mut [usize],
        depth: usize,
        dim: usize,
    ) -> Option<Box<KdNode>> {
        if indices.is_empty() {
            return None;
        }
        let axis = depth % dim;
        indices.sort_by(|&a, &b| {
            points[a][axis]
                .partial_cmp(&points[b][axis])
                .unwrap()
                .then(a.cmp(&b))
        });
        let mid = indices.len() / 2;
        let point = indices[mid];
        let (left_idx, rest) = indices.split_at_mut(mid);
        let right_idx = &mut rest[1..];
        Some(Box::new(KdNode {
            point,
            axis,
            left: Self::build_node(points, left_idx, depth + 1, dim),
            right: Self::build_node(points, right_idx, depth + 1, dim),
        }))
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    /// k nearest member points to `target`, ties broken by lower row index.
    /// `exclude` removes one member (the query point itself) from candidacy.
    pub fn query(
        &self,
        target: &[f64],
        k: usize,
        exclude: Option<usize>,
    ) -> Result<Vec<usize>, ResampleError> {
        let available = self.points.len() - usize::from(exclude.is_some());
        if k > available {
            return Err(ResampleError::KTooLarge { k, available });
        }
        if target.len() != self.dim {
            return Err(ResampleError::MixedDimensions);
        }
        let mut heap: std::collections::BinaryHeap<HeapItem> = Default::default();
        self.search(self.root.as_deref(), target, k, exclude, &mut heap);
        let mut out: Vec<HeapItem> = heap.into_vec();
        out.sort();
        Ok(out.into_iter().map(|h| h.idx).collect())
    }

    /// k nearest neighbours of member point `i`, excluding itself.
    pub fn neighbors_of(&self, i: usize, k: usize) -> Result<Vec<usize>, ResampleError> {
        self.query(&self.points[i].clone(), k, Some(i))
    }

    fn search(
        &self,
        node: Option<&KdNode>,
        target: &[f64],
        k: usize,
        exclude: Option<usize>,
        heap: &mut std::collections::BinaryHeap<HeapItem>,
    ) {
        let Some(node) = node else { return };
        if Some(node.point) != exclude {
            let item = HeapItem {
                dist2: dist2(target, &self.points[node.point]),
                idx: node.point,
            };
            if heap.len() < k {
                heap.push(item);
            } else if item < *heap.peek().unwrap() {
                heap.pop();
                heap.push(item);
            }
        }
        let diff = target[node.axis] - self.points[node.point][node.axis];
        let (near, far) = if diff <= 0.0 {
            (node.left.as_deref(), node.right.as_deref())
        } else {
            (node.right.as_deref(), node.left.as_deref())
        };
        self.search(near, target, k, exclude, heap);
        // the far side can still hold ties, so recurse on >= as well
        if heap.len() < k || diff * diff <= heap.peek().unwrap().dist2 {
            self.search(far, target, k, exclude, heap);
        }
    }
}

// ---------------------------------------------------------------------------
// SMOTE

fn open_unit(rng: &mut impl Rng) -> f64 {
    loop {
        let u: f64 = rng.gen();
        if u > 0.0 && u < 1.0 {
            return u;
        }
    }
}

/// Generate `count` synthetic minority rows, each interpolated between a
/// minority sample (round-robin) and one of its k nearest minority
/// neighbours: Y = X_i + u (X_ij - X_i), u uniform in (0,1).
pub fn smote_generate(
    minority: &[Vec<f64>],
    p: &SmoteParams,
    count: usize,
) -> Result<Vec<Vec<f64>>, ResampleError> {
    if p.k_neighbors < 1 {
        return Err(ResampleError::BadParam("k_neighbors must be >= 1".into()));
    }
    if p.target_ratio <= 0.0 {
        return Err(ResampleError::BadParam("target_ratio must be > 0".into()));
    }
    if minority.len() <= p.k_neighbors {
        return Err(ResampleError::MinorityTooSmall {
            minority: minority.len(),
            k: p.k_neighbors,
        });
    }
    if count == 0 {
        return Ok(Vec::new());
    }
    let index = KnnIndex::build(minority)?;
    let mut rng = rng_from_seed(p.seed);
    let mut out = Vec::with_capacity(count);
    for j in 0..count {
        let i = j % minority.len();
        let neighbors = index.neighbors_of(i, p.k_neighbors)?;
        let pick = neighbors[rng.gen_range(0..neighbors.len())];
        let u = open_unit(&mut rng);
        let row: Vec<f64> = minority[i]
            .iter()
            .zip(&minority[pick])
            .map(|(a, b)| a + u * (b - a))
            .collect();
        out.push(row);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// ENN

/// Edited nearest neighbours: remove every row whose label disagrees with the
/// majority vote of its k nearest neighbours in the pre-edit set (self
/// excluded). Decisions are simultaneous. Returns the kept row indices.
pub fn enn_edit(
    points: &[Vec<f64>],
    labels: &[u8],
    p: &EnnParams,
) -> Result<Vec<usize>, ResampleError> {
    if points.len() != labels.len() {
        return Err(ResampleError::BadParam("points/labels length mismatch".into()));
    }
    if points.len() < p.k + 1 {
        return Err(ResampleError::TooFewForEnn(p.k + 1));
    }
    let index = KnnIndex::build(points)?;
    let mut kept = Vec::with_capacity(points.len());
    for i in 0..points.len() {
        let neighbors = index.neighbors_of(i, p.k)?;
        let positives = neighbors.iter().filter(|&&j| labels[j] == 1).count();
        let predicted = u8::from(2 * positives > p.k);
        if predicted == labels[i] {
            kept.push(i);
        }
    }
    Ok(kept)
}

// ---------------------------------------------------------------------------
// SMOTE-ENN

#[derive(Debug, Clone)]
pub struct BalancedSet {
    pub points: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
    /// True for rows created by SMOTE.
    pub synthetic: Vec<bool>,
}

/// Step 1: SMOTE expands the minority class toward
/// `target_ratio * majority_count`. Step 2: ENN edits the combined set.
pub fn smote_enn(
    points: &[Vec<f64>],
    labels: &[u8],
    sp: &SmoteParams,
    ep: &EnnParams,
) -> Result<BalancedSet, ResampleError> {
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(ResampleError::SingleClass);
    }
    let (minority_label, minority_count, majority_count) = if pos <= neg {
        (1u8, pos, neg)
    } else {
        (0u8, neg, pos)
    };
    let desired = (sp.target_ratio * majority_count as f64).round() as usize;
    let synth_count = desired.saturating_sub(minority_count);

    let mut combined = points.to_vec();
    let mut all_labels = labels.to_vec();
    let mut synthetic = vec![false; points.len()];
    if synth_count > 0 {
        let minority: Vec<Vec<f64>> = points
            .iter()
            .zip(labels)
            .filter(|(_, &l)| l == minority_label)
            .map(|(p, _)| p.clone())
            .collect();
        let new_rows = smote_generate(&minority, sp, synth_count)?;
        for row in new_rows {
            combined.push(row);
            all_labels.push(minority_label);
            synthetic.push(true);
        }
    }
    let kept = enn_edit(&combined, &all_labels, ep)?;
    Ok(BalancedSet {
        points: kept.iter().map(|&i| combined[i].clone()).collect(),
        labels: kept.iter().map(|&i| all_labels[i]).collect(),
        synthetic: kept.iter().map(|&i| synthetic[i]).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn knn_on_a_line() {
        let points = vec![vec![0.0], vec![1.0], vec![10.0]];
        let index = KnnIndex::build(&points).unwrap();
        assert_eq!(index.neighbors_of(0, 1).unwrap(), vec![1]);
        assert_eq!(index.neighbors_of(1, 2).unwrap(), vec![0, 2]);
        assert!(index.neighbors_of(0, 3).is_err()); // only 2 other points
    }

    #[test]
    fn knn_tie_breaks_by_lower_index() {
        let points = vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 5.0]];
        let index = KnnIndex::build(&points).unwrap();
        let got = index.query(&[0.0, 0.0], 1, None).unwrap();
        assert_eq!(got, vec![0]);
    }

    #[test]
    fn knn_matches_brute_force() {
        let mut rng = rng_from_seed(11);
        for _ in 0..20 {
            let n = rng.gen_range(5..60);
            let dim = rng.gen_range(1..5);
            let points: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..dim).map(|_| (rng.gen_range(0..8) as f64) * 0.5).collect())
                .collect();
            let index = KnnIndex::build(&points).unwrap();
            for i in 0..n {
                let k = rng.gen_range(1..n);
                let got = index.neighbors_of(i, k).unwrap();
                let mut expected: Vec<(f64, usize)> = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| (dist2(&points[i], &points[j]), j))
                    .collect();
                expected.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let expected: Vec<usize> = expected.into_iter().take(k).map(|(_, j)| j).collect();
                assert_eq!(got, expected, "n={n} dim={dim} i={i} k={k}");
            }
        }
    }

    #[test]
    fn smote_interpolates_on_the_segment() {
        let minority = vec![
            vec![0.0, 0.0],
            vec![2.0, 4.0],
            vec![0.1, 0.1],
            vec![1.9, 3.9],
        ];
        let p = SmoteParams {
            k_neighbors: 2,
            target_ratio: 1.0,
            seed: 3,
        };
        let synth = smote_generate(&minority, &p, 100).unwrap();
        assert_eq!(synth.len(), 100);
        for (j, row) in synth.iter().enumerate() {
            let base = &minority[j % minority.len()];
            // every coordinate lies inside the bounding box of the minority set
            for (d, v) in row.iter().enumerate() {
                let lo = minority.iter().map(|m| m[d]).fold(f64::INFINITY, f64::min);
                let hi = minority.iter().map(|m| m[d]).fold(f64::NEG_INFINITY, f64::max);
                assert!(*v >= lo && *v <= hi, "row {j} dim {d}");
            }
            // and the interpolation factor is shared across dimensions
            let _ = base;
        }
    }

    #[test]
    fn smote_midpoint_example() {
        // X_i=(0,0), X_ij=(2,4), u=0.5 -> Y=(1,2); check the line equation
        let xi = [0.0, 0.0];
        let xij = [2.0, 4.0];
        let u = 0.5;
        let y: Vec<f64> = xi.iter().zip(xij).map(|(a, b)| a + u * (b - a)).collect();
        assert_eq!(y, vec![1.0, 2.0]);
    }

    #[test]
    fn smote_rejects_small_minority() {
        let minority = vec![vec![0.0], vec![1.0]];
        let p = SmoteParams {
            k_neighbors: 5,
            ..Default::default()
        };
        assert!(matches!(
            smote_generate(&minority, &p, 10),
            Err(ResampleError::MinorityTooSmall { .. })
        ));
    }

    #[test]
    fn smote_is_deterministic() {
        let minority: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let p = SmoteParams::default();
        let a = smote_generate(&minority, &p, 50).unwrap();
        let b = smote_generate(&minority, &p, 50).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn enn_keeps_unanimous_labels() {
        let points: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let labels = vec![1; 10];
        let kept = enn_edit(&points, &labels, &EnnParams::default()).unwrap();
        assert_eq!(kept.len(), 10);
    }

    #[test]
    fn enn_removes_isolated_point() {
        // one positive at the origin surrounded by 5 nearest negatives
        let mut points = vec![vec![0.0, 0.0]];
        let mut labels = vec![1u8];
        for i in 0..5 {
            let angle = i as f64;
            points.push(vec![angle.cos(), angle.sin()]);
            labels.push(0);
        }
        // a far-away positive cluster keeps the class present
        for i in 0..6 {
            points.push(vec![100.0 + i as f64 * 0.01, 100.0]);
            labels.push(1);
        }
        let kept = enn_edit(&points, &labels, &EnnParams::default()).unwrap();
        assert!(!kept.contains(&0), "isolated positive should be removed");
        // verify against a brute-force neighbour scan
        for i in 0..points.len() {
            let mut d: Vec<(f64, usize)> = (0..points.len())
                .filter(|&j| j != i)
                .map(|j| (dist2(&points[i], &points[j]), j))
                .collect();
            d.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let votes = d.iter().take(5).filter(|&&(_, j)| labels[j] == 1).count();
            let predicted = u8::from(2 * votes > 5);
            assert_eq!(kept.contains(&i), predicted == labels[i]);
        }
    }

    fn blobs(n_neg: usize, n_pos: usize, sep: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<u8>) {
        crate::synth::gaussian_blobs(n_neg, n_pos, 2, sep, seed)
    }

    #[test]
    fn smote_enn_balances_blobs() {
        let (points, labels) = blobs(1000, 50, 6.0, 5);
        let balanced = smote_enn(&points, &labels, &SmoteParams::default(), &EnnParams::default())
            .unwrap();
        let pos = balanced.labels.iter().filter(|&&l| l == 1).count();
        assert!(
            (800..=1250).contains(&pos),
            "positive count {pos} outside [800, 1250]"
        );
        // ENN only deletes: every original (non-synthetic) row is in the input set
        for (row, &syn) in balanced.points.iter().zip(&balanced.synthetic) {
            if !syn {
                assert!(points.contains(row));
            }
        }
    }

    #[test]
    fn smote_enn_is_a_fixed_point_when_balanced_and_separated() {
        let (points, labels) = blobs(60, 60, 50.0, 9);
        let balanced =
            smote_enn(&points, &labels, &SmoteParams::default(), &EnnParams::default()).unwrap();
        assert_eq!(balanced.points.len(), points.len());
        assert!(!balanced.synthetic.iter().any(|&s| s));
    }

    #[test]
    fn smote_enn_requires_both_classes() {
        let points: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let labels = vec![0u8; 10];
        assert!(matches!(
            smote_enn(&points, &labels, &SmoteParams::default(), &EnnParams::default()),
            Err(ResampleError::SingleClass)
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn smote_convexity(seed in 0u64..1000) {
            let mut rng = rng_from_seed(seed);
            let minority: Vec<Vec<f64>> = (0..12)
                .map(|_| (0..3).map(|_| rng.gen_range(-5.0..5.0)).collect())
                .collect();
            let p = SmoteParams { k_neighbors: 3, target_ratio: 1.0, seed };
            let index = KnnIndex::build(&minority).unwrap();
            let synth = smote_generate(&minority, &p, 30).unwrap();
            for (j, row) in synth.iter().enumerate() {
                let i = j % minority.len();
                let neighbors = index.neighbors_of(i, 3).unwrap();
                // the point must lie in the box spanned by X_i and one neighbour
                let ok = neighbors.iter().any(|&nb| {
                    row.iter().enumerate().all(|(d, &v)| {
                        let lo = minority[i][d].min(minority[nb][d]) - 1e-12;
                        let hi = minority[i][d].max(minority[nb][d]) + 1e-12;
                        v >= lo && v <= hi
                    })
                });
                prop_assert!(ok);
            }
        }
    }
}
