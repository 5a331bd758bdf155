//! C4.5-style binary decision tree over numeric features, used to rank
//! features for the classifier sweep.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Gains closer than this are treated as equal when breaking ties.
const GAIN_EPS: f64 = 1e-12;

/// Shannon entropy in bits of a class-count vector.
pub fn entropy(class_counts: &[usize]) -> Result<f64> {
    let total: usize = class_counts.iter().sum();
    if total == 0 {
        return Err(Error::InvalidArgument("entropy of an empty count vector".into()));
    }
    Ok(entropy_of(class_counts, total))
}

fn entropy_of(counts: &[usize], total: usize) -> f64 {
    let n = total as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub threshold: f64,
    pub gain_ratio: f64,
    pub info_gain: f64,
}

/// Best binary split `value <= threshold` on one feature by information gain.
///
/// Candidate thresholds are midpoints between consecutive distinct values.
/// A feature that is constant over the dataset yields gain 0 with the
/// constant as threshold.
pub fn best_split(d: &Dataset, feature: &str) -> Result<Split> {
    let f = d.feature_index(feature)?;
    if d.len() < 2 {
        return Err(Error::InvalidArgument("best_split needs at least 2 instances".into()));
    }
    if d.class_counts().iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::InvalidArgument("best_split needs at least 2 classes present".into()));
    }
    let all: Vec<usize> = (0..d.len()).collect();
    Ok(scan_splits(d, f, &all, 1).unwrap_or(Split {
        threshold: d.value(0, f),
        gain_ratio: 0.0,
        info_gain: 0.0,
    }))
}

/// Scans every admissible midpoint of feature `f` over `indices`. Both
/// children must hold at least `min_leaf` instances. `None` when the feature
/// is constant or no threshold is admissible.
fn scan_splits(d: &Dataset, f: usize, indices: &[usize], min_leaf: usize) -> Option<Split> {
    let k = d.n_classes();
    let mut pairs: Vec<(f64, usize)> = indices.iter().map(|&i| (d.value(i, f), d.labels()[i])).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

    let n = pairs.len();
    let mut right = vec![0usize; k];
    for &(_, l) in &pairs {
        right[l] += 1;
    }
    let parent = entropy_of(&right, n);
    let mut left = vec![0usize; k];
    let mut best: Option<Split> = None;

    for i in 0..n - 1 {
        let (v, l) = pairs[i];
        left[l] += 1;
        right[l] -= 1;
        let next = pairs[i + 1].0;
        if v == next {
            continue;
        }
        let (nl, nr) = (i + 1, n - i - 1);
        if nl < min_leaf || nr < min_leaf {
            continue;
        }
        let mut threshold = v + (next - v) / 2.0;
        if threshold >= next {
            threshold = v;
        }
        let children = (nl as f64 * entropy_of(&left, nl) + nr as f64 * entropy_of(&right, nr)) / n as f64;
        let gain = (parent - children).max(0.0);
        if best.is_none_or(|b| gain > b.info_gain + GAIN_EPS) {
            let split_info = entropy_of(&[nl, nr], n);
            let gain_ratio = if split_info > 0.0 { gain / split_info } else { 0.0 };
            best = Some(Split {
                threshold,
                gain_ratio,
                info_gain: gain,
            });
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Internal {
        feature: String,
        feature_index: usize,
        threshold: f64,
        info_gain: f64,
        gain_ratio: f64,
        /// Instances with `value <= threshold`.
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        class_counts: Vec<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeParams {
    pub min_leaf: usize,
    pub max_depth: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            min_leaf: 2,
            max_depth: 20,
        }
    }
}

impl TreeNode {
    /// Class index reached by `values`; leaf ties go to the lower class index.
    pub fn predict(&self, values: &[f64]) -> usize {
        match self {
            TreeNode::Internal {
                feature_index,
                threshold,
                left,
                right,
                ..
            } => {
                if values[*feature_index] <= *threshold {
                    left.predict(values)
                } else {
                    right.predict(values)
                }
            }
            TreeNode::Leaf { class_counts } => argmax_first(class_counts),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
            TreeNode::Leaf { .. } => 0,
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, TreeNode::Leaf { .. })
    }

    /// Instances that reached this node during induction.
    pub fn instance_count(&self) -> usize {
        match self {
            TreeNode::Internal { left, right, .. } => left.instance_count() + right.instance_count(),
            TreeNode::Leaf { class_counts } => class_counts.iter().sum(),
        }
    }
}

fn argmax_first(counts: &[usize]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

pub fn build_tree(d: &Dataset, params: TreeParams) -> Result<TreeNode> {
    if d.is_empty() {
        return Err(Error::InvalidArgument("cannot build a tree from an empty dataset".into()));
    }
    let all: Vec<usize> = (0..d.len()).collect();
    Ok(grow(d, &all, 0, params))
}

fn grow(d: &Dataset, indices: &[usize], depth: usize, params: TreeParams) -> TreeNode {
    let mut counts = vec![0usize; d.n_classes()];
    for &i in indices {
        counts[d.labels()[i]] += 1;
    }
    let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
    if pure || depth >= params.max_depth || indices.len() < 2 * params.min_leaf.max(1) {
        return TreeNode::Leaf { class_counts: counts };
    }

    let mut chosen: Option<(usize, Split)> = None;
    for f in 0..d.n_features() {
        let Some(split) = scan_splits(d, f, indices, params.min_leaf.max(1)) else {
            continue;
        };
        if split.info_gain <= GAIN_EPS {
            continue;
        }
        if chosen.is_none_or(|(_, c)| split.gain_ratio > c.gain_ratio + GAIN_EPS) {
            chosen = Some((f, split));
        }
    }
    let Some((f, split)) = chosen else {
        return TreeNode::Leaf { class_counts: counts };
    };

    let (left, right): (Vec<usize>, Vec<usize>) =
        indices.iter().partition(|&&i| d.value(i, f) <= split.threshold);
    TreeNode::Internal {
        feature: d.feature_names()[f].clone(),
        feature_index: f,
        threshold: split.threshold,
        info_gain: split.info_gain,
        gain_ratio: split.gain_ratio,
        left: Box::new(grow(d, &left, depth + 1, params)),
        right: Box::new(grow(d, &right, depth + 1, params)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFeature {
    pub name: String,
    /// Information gain in bits.
    pub score: f64,
}

/// Ordered feature list, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRanking {
    pub features: Vec<RankedFeature>,
}

impl FeatureRanking {
    pub fn names(&self) -> Vec<&str> {
        self.features.iter().map(|f| f.name.as_str()).collect()
    }

    pub fn top(&self, m: usize) -> Vec<&str> {
        self.names().into_iter().take(m).collect()
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

/// Ranks features: those used by the tree in breadth-first order of first
/// appearance (scored by the gain at that node), then unused features by
/// standalone whole-dataset gain, descending, ties in schema order.
pub fn rank_features(tree: &TreeNode, d: &Dataset) -> FeatureRanking {
    let mut features: Vec<RankedFeature> = Vec::with_capacity(d.n_features());
    let mut used = vec![false; d.n_features()];
    let mut queue = std::collections::VecDeque::from([tree]);
    while let Some(node) = queue.pop_front() {
        if let TreeNode::Internal {
            feature_index,
            info_gain,
            left,
            right,
            ..
        } = node
        {
            if !used[*feature_index] {
                used[*feature_index] = true;
                features.push(RankedFeature {
                    name: d.feature_names()[*feature_index].clone(),
                    score: *info_gain,
                });
            }
            queue.push_back(left);
            queue.push_back(right);
        }
    }

    let mut rest: Vec<(usize, f64)> = (0..d.n_features())
        .filter(|&f| !used[f])
        .map(|f| {
            let gain = best_split(d, &d.feature_names()[f]).map(|s| s.info_gain).unwrap_or(0.0);
            (f, gain)
        })
        .collect();
    rest.sort_by(|a, b| {
        if (a.1 - b.1).abs() <= GAIN_EPS {
            a.0.cmp(&b.0)
        } else {
            b.1.total_cmp(&a.1)
        }
    });
    features.extend(rest.into_iter().map(|(f, gain)| RankedFeature {
        name: d.feature_names()[f].clone(),
        score: gain,
    }));
    FeatureRanking { features }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("f{i}")).collect()
    }

    fn toy() -> Dataset {
        Dataset::from_labeled_rows(
            names(1),
            vec![(vec![1.0], "A"), (vec![1.0], "A"), (vec![2.0], "B"), (vec![2.0], "B")],
        )
        .unwrap()
    }

    #[test]
    fn entropy_fixtures() {
        assert_eq!(entropy(&[50, 50]).unwrap(), 1.0);
        assert_eq!(entropy(&[100, 0]).unwrap(), 0.0);
        assert_eq!(entropy(&[25, 25, 25, 25]).unwrap(), 2.0);
        assert!(entropy(&[0, 0]).is_err());
    }

    #[test]
    fn perfect_binary_split() {
        let s = best_split(&toy(), "f0").unwrap();
        assert_eq!(s.threshold, 1.5);
        assert_eq!(s.info_gain, 1.0);
        assert_eq!(s.gain_ratio, 1.0);
    }

    #[test]
    fn constant_feature_has_no_gain() {
        let d = Dataset::from_labeled_rows(
            names(1),
            vec![(vec![3.0], "A"), (vec![3.0], "B"), (vec![3.0], "A")],
        )
        .unwrap();
        let s = best_split(&d, "f0").unwrap();
        assert_eq!((s.info_gain, s.gain_ratio, s.threshold), (0.0, 0.0, 3.0));
    }

    #[test]
    fn split_preconditions() {
        let single = Dataset::from_labeled_rows(names(1), vec![(vec![1.0], "A"), (vec![2.0], "A")]).unwrap();
        assert!(best_split(&single, "f0").is_err());
        assert!(best_split(&toy(), "missing").is_err());
    }

    #[test]
    fn tree_on_toy_and_pure_data() {
        let tree = build_tree(&toy(), TreeParams { min_leaf: 1, max_depth: 20 }).unwrap();
        match &tree {
            TreeNode::Internal { threshold, left, right, .. } => {
                assert_eq!(*threshold, 1.5);
                assert_eq!(**left, TreeNode::Leaf { class_counts: vec![2, 0] });
                assert_eq!(**right, TreeNode::Leaf { class_counts: vec![0, 2] });
            }
            leaf => panic!("expected split, got {leaf:?}"),
        }
        let pure = Dataset::from_labeled_rows(names(2), vec![(vec![1.0, 2.0], "A"), (vec![3.0, 4.0], "A")]).unwrap();
        assert!(build_tree(&pure, TreeParams::default()).unwrap().is_leaf());
    }

    #[test]
    fn depth_limit_respected() {
        let rows: Vec<(Vec<f64>, String)> =
            (0..64).map(|i| (vec![i as f64], format!("c{}", i % 2))).collect();
        let d = Dataset::from_labeled_rows(names(1), rows).unwrap();
        let tree = build_tree(&d, TreeParams { min_leaf: 1, max_depth: 3 }).unwrap();
        assert!(tree.depth() <= 3);
        assert_eq!(tree.instance_count(), 64);
    }

    #[test]
    fn ranking_starts_at_root_feature() {
        let d = Dataset::from_labeled_rows(
            vec!["noise".into(), "kurtosis".into(), "count".into()],
            vec![
                (vec![0.3, 1.0, 8.0], "A"),
                (vec![0.1, 1.1, 8.0], "A"),
                (vec![0.2, 5.0, 8.0], "B"),
                (vec![0.4, 5.5, 8.0], "B"),
            ],
        )
        .unwrap();
        let tree = build_tree(&d, TreeParams { min_leaf: 1, max_depth: 20 }).unwrap();
        let r = rank_features(&tree, &d);
        assert_eq!(r.names(), vec!["kurtosis", "noise", "count"]);
        assert_eq!(r.features[0].score, 1.0);
        assert_eq!(r.features[2].score, 0.0);
    }

    /// Exhaustive oracle: counts each side of every midpoint from scratch.
    fn oracle_split(values: &[f64], labels: &[usize], k: usize) -> (f64, f64) {
        let h = |idx: &[usize]| -> f64 {
            let mut c = vec![0.0; k];
            for &i in idx {
                c[labels[i]] += 1.0;
            }
            let n = idx.len() as f64;
            c.iter().filter(|&&x| x > 0.0).map(|&x| -(x / n) * (x / n).log2()).sum()
        };
        let all: Vec<usize> = (0..values.len()).collect();
        let mut distinct = values.to_vec();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        let mut best = (f64::NAN, -1.0);
        for w in distinct.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let (l, r): (Vec<usize>, Vec<usize>) = all.iter().partition(|&&i| values[i] <= t);
            let n = values.len() as f64;
            let gain = h(&all) - l.len() as f64 / n * h(&l) - r.len() as f64 / n * h(&r);
            if gain > best.1 + 1e-12 {
                best = (t, gain);
            }
        }
        best
    }

    proptest! {
        #[test]
        fn split_matches_oracle(
            rows in prop::collection::vec((0u8..12, 0usize..3), 2..40)
        ) {
            let values: Vec<f64> = rows.iter().map(|r| r.0 as f64 * 0.5).collect();
            let labels: Vec<usize> = rows.iter().map(|r| r.1).collect();
            prop_assume!(labels.iter().any(|&l| l != labels[0]));
            prop_assume!(values.iter().any(|&v| v != values[0]));
            let d = Dataset::new(names(1), vec!["a".into(), "b".into(), "c".into()],
                rows.iter().map(|r| (vec![r.0 as f64 * 0.5], r.1)).collect()).unwrap();
            let s = best_split(&d, "f0").unwrap();
            let (t, g) = oracle_split(&values, &labels, 3);
            prop_assert_eq!(s.threshold, t);
            prop_assert!((s.info_gain - g).abs() < 1e-12);
            prop_assert!(s.gain_ratio >= 0.0 && s.gain_ratio.is_finite());
        }

        #[test]
        fn entropy_bounds(counts in prop::collection::vec(0usize..50, 1..8)) {
            prop_assume!(counts.iter().sum::<usize>() > 0);
            let h = entropy(&counts).unwrap();
            let nonzero = counts.iter().filter(|&&c| c > 0).count() as f64;
            prop_assert!(h >= 0.0 && h <= nonzero.log2() + 1e-12);
        }

        #[test]
        fn induction_ignores_instance_order(
            rows in prop::collection::vec((0u8..20, 0u8..20, 0usize..3), 4..60),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let classes: Vec<String> = vec!["a".into(), "b".into(), "c".into()];
            let make = |rs: &[(u8, u8, usize)]| Dataset::new(names(2), classes.clone(),
                rs.iter().map(|r| (vec![r.0 as f64, r.1 as f64], r.2)).collect()).unwrap();
            let mut shuffled = rows.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = build_tree(&make(&rows), TreeParams::default()).unwrap();
            let b = build_tree(&make(&shuffled), TreeParams::default()).unwrap();
            for r in &rows {
                let q = [r.0 as f64, r.1 as f64];
                prop_assert_eq!(a.predict(&q), b.predict(&q));
            }
            let d = make(&rows);
            let mut ranked: Vec<String> = rank_features(&a, &d).names().iter().map(|s| s.to_string()).collect();
            ranked.sort();
            prop_assert_eq!(ranked, d.feature_names().to_vec());
        }
    }
}
