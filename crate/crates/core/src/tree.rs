//! C4.5-style binary decision tree on continuous features.
//!
//! Splits maximize gain ratio over midpoint thresholds; leaves keep class
//! counts and report Laplace-smoothed positive rates.

use std::cmp::Ordering;

use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeParams {
    /// `None` grows until another stopping rule fires.
    pub max_depth: Option<usize>,
    pub min_leaf_size: usize,
    pub min_gain_ratio: f64,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_leaf_size: 2,
            min_gain_ratio: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode<T> {
    Internal {
        feature_index: usize,
        /// Rows with `x[feature_index] <= threshold` go left.
        threshold: T,
        gain: f64,
        gain_ratio: f64,
        left: Box<TreeNode<T>>,
        right: Box<TreeNode<T>>,
    },
    Leaf {
        pos_count: usize,
        neg_count: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree<T> {
    pub root: TreeNode<T>,
    pub n_features: usize,
}

fn entropy(pos: usize, neg: usize) -> f64 {
    let n = (pos + neg) as f64;
    [pos, neg]
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

#[derive(Debug, Clone, Copy)]
struct Split<T> {
    feature: usize,
    threshold: T,
    gain: f64,
    gain_ratio: f64,
}

fn best_split<T: Scalar>(features: ArrayView2<T>, labels: &[u8], rows: &[usize], min_leaf: usize) -> Option<Split<T>> {
    let n = rows.len();
    let pos_total = rows.iter().filter(|&&r| labels[r] == 1).count();
    let parent = entropy(pos_total, n - pos_total);
    let mut best: Option<Split<T>> = None;
    let mut sorted = rows.to_vec();
    for f in 0..features.ncols() {
        sorted.sort_by(|&a, &b| {
            features[[a, f]]
                .partial_cmp(&features[[b, f]])
                .unwrap_or(Ordering::Equal)
                .then(a.cmp(&b))
        });
        let mut left_pos = 0usize;
        for i in 0..n - 1 {
            if labels[sorted[i]] == 1 {
                left_pos += 1;
            }
            let (lo, hi) = (features[[sorted[i], f]], features[[sorted[i + 1], f]]);
            if lo == hi {
                continue;
            }
            let left_n = i + 1;
            let right_n = n - left_n;
            if left_n < min_leaf || right_n < min_leaf {
                continue;
            }
            let right_pos = pos_total - left_pos;
            let weighted = (left_n as f64 * entropy(left_pos, left_n - left_pos)
                + right_n as f64 * entropy(right_pos, right_n - right_pos))
                / n as f64;
            let gain = parent - weighted;
            let split_info = entropy(left_n, right_n);
            let gain_ratio = gain / split_info;
            if best.is_none_or(|b| gain_ratio > b.gain_ratio) {
                let mut threshold = (lo + hi) / T::lit(2.0);
                if threshold >= hi {
                    threshold = lo;
                }
                best = Some(Split {
                    feature: f,
                    threshold,
                    gain,
                    gain_ratio,
                });
            }
        }
    }
    best
}

/// Gains below this are treated as zero.
const MIN_GAIN: f64 = 1e-12;

fn grow<T: Scalar>(features: ArrayView2<T>, labels: &[u8], rows: Vec<usize>, depth: usize, params: &TreeParams) -> TreeNode<T> {
    let pos = rows.iter().filter(|&&r| labels[r] == 1).count();
    let neg = rows.len() - pos;
    let leaf = TreeNode::Leaf {
        pos_count: pos,
        neg_count: neg,
    };
    if pos == 0 || neg == 0 || params.max_depth.is_some_and(|d| depth >= d) || rows.len() < 2 * params.min_leaf_size {
        return leaf;
    }
    let Some(split) = best_split(features, labels, &rows, params.min_leaf_size) else {
        return leaf;
    };
    if split.gain <= MIN_GAIN || split.gain_ratio < params.min_gain_ratio {
        return leaf;
    }
    let (left, right): (Vec<usize>, Vec<usize>) = rows
        .into_iter()
        .partition(|&r| features[[r, split.feature]] <= split.threshold);
    TreeNode::Internal {
        feature_index: split.feature,
        threshold: split.threshold,
        gain: split.gain,
        gain_ratio: split.gain_ratio,
        left: Box::new(grow(features, labels, left, depth + 1, params)),
        right: Box::new(grow(features, labels, right, depth + 1, params)),
    }
}

/// Grows a tree. Equal gain ratios keep the lower feature index, then the
/// lower threshold.
pub fn train_tree<T: Scalar>(features: ArrayView2<T>, labels: &[u8], params: &TreeParams) -> Result<DecisionTree<T>> {
    if features.nrows() == 0 {
        return Err(Error::Input("cannot train a tree on zero rows".into()));
    }
    if features.nrows() != labels.len() {
        return Err(Error::Dimension {
            context: "tree labels",
            expected: features.nrows(),
            got: labels.len(),
        });
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::Input("labels must be 0 or 1".into()));
    }
    if params.min_leaf_size == 0 {
        return Err(Error::Config("min_leaf_size must be at least 1".into()));
    }
    let root = grow(features, labels, (0..features.nrows()).collect(), 0, params);
    Ok(DecisionTree {
        root,
        n_features: features.ncols(),
    })
}

/// Laplace-smoothed positive rate of a leaf.
pub fn laplace(pos: usize, neg: usize) -> f64 {
    (pos as f64 + 1.0) / ((pos + neg) as f64 + 2.0)
}

/// Label rule shared by every classifier output: positive iff `p >= 0.5`.
pub fn label_from_proba(p: f64) -> u8 {
    u8::from(p >= 0.5)
}

impl<T: Scalar> DecisionTree<T> {
    fn leaf_for(&self, x: ArrayView1<T>) -> (usize, usize) {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { pos_count, neg_count } => return (*pos_count, *neg_count),
                TreeNode::Internal {
                    feature_index,
                    threshold,
                    left,
                    right,
                    ..
                } => node = if x[*feature_index] <= *threshold { left } else { right },
            }
        }
    }

    pub fn predict_proba(&self, x: ArrayView1<T>) -> f64 {
        debug_assert_eq!(x.len(), self.n_features);
        let (p, n) = self.leaf_for(x);
        laplace(p, n)
    }

    pub fn predict_label(&self, x: ArrayView1<T>) -> u8 {
        label_from_proba(self.predict_proba(x))
    }

    pub fn predict_proba_batch(&self, x: ArrayView2<T>) -> Vec<f64> {
        x.outer_iter().map(|r| self.predict_proba(r)).collect()
    }

    pub fn depth(&self) -> usize {
        fn d<T>(n: &TreeNode<T>) -> usize {
            match n {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Internal { left, right, .. } => 1 + d(left).max(d(right)),
            }
        }
        d(&self.root)
    }

    /// `(pos, neg)` of every leaf, left to right.
    pub fn leaves(&self) -> Vec<(usize, usize)> {
        fn walk<T>(n: &TreeNode<T>, out: &mut Vec<(usize, usize)>) {
            match n {
                TreeNode::Leaf { pos_count, neg_count } => out.push((*pos_count, *neg_count)),
                TreeNode::Internal { left, right, .. } => {
                    walk(left, out);
                    walk(right, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut out);
        out
    }
}
