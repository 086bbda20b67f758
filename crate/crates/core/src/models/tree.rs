//! CART-style trees with deterministic exact splits.
//!
//! [`DecisionTree`] minimizes weighted Gini impurity and stores full class
//! distributions at the leaves. [`RegressionTree`] fits gradient/hessian
//! pairs with the usual second-order gain and is the base learner for the
//! boosted ensemble. Ties are broken toward the lowest feature index and
//! lowest threshold, which keeps training deterministic.

use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf {
        dist: Vec<f64>,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: 8,
            min_samples_split: 2,
            min_samples_leaf: 1,
        }
    }
}

impl TreeParams {
    pub fn with_depth(max_depth: usize) -> TreeParams {
        TreeParams {
            max_depth,
            ..TreeParams::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    root: TreeNode,
    pub n_classes: usize,
    pub n_features: usize,
}

/// Per-node feature subsampling used by the forest; `None` considers every
/// feature at every node.
pub struct FeatureSampler {
    pub rng: ChaCha20Rng,
    pub per_node: usize,
}

impl DecisionTree {
    pub fn fit(
        x: &[Vec<f64>],
        y: &[usize],
        n_classes: usize,
        params: &TreeParams,
        mut sampler: Option<FeatureSampler>,
    ) -> DecisionTree {
        assert_eq!(x.len(), y.len());
        assert!(!x.is_empty(), "tree needs at least one sample");
        let n_features = x[0].len();
        let indices: Vec<usize> = (0..x.len()).collect();
        let root = build_class_node(x, y, n_classes, params, &mut sampler, &indices, 0);
        DecisionTree {
            root,
            n_classes,
            n_features,
        }
    }

    pub fn proba(&self, x: &[f64]) -> Vec<f64> {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { dist } => return dist.clone(),
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }

    pub fn root(&self) -> &TreeNode {
        &self.root
    }
}

fn class_counts(y: &[usize], indices: &[usize], n_classes: usize) -> Vec<usize> {
    let mut counts = vec![0usize; n_classes];
    for i in indices {
        counts[y[*i]] += 1;
    }
    counts
}

fn gini(counts: &[usize], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts.iter().map(|c| (*c as f64 / t).powi(2)).sum::<f64>()
}

fn leaf_from_counts(counts: &[usize], total: usize) -> TreeNode {
    let dist = counts.iter().map(|c| *c as f64 / total as f64).collect();
    TreeNode::Leaf { dist }
}

fn candidate_features(
    n_features: usize,
    sampler: &mut Option<FeatureSampler>,
) -> Vec<usize> {
    match sampler {
        None => (0..n_features).collect(),
        Some(s) => {
            use rand::seq::index::sample;
            let m = s.per_node.min(n_features);
            let mut chosen: Vec<usize> = sample(&mut s.rng, n_features, m).into_iter().collect();
            chosen.sort_unstable();
            chosen
        }
    }
}

fn build_class_node(
    x: &[Vec<f64>],
    y: &[usize],
    n_classes: usize,
    params: &TreeParams,
    sampler: &mut Option<FeatureSampler>,
    indices: &[usize],
    depth: usize,
) -> TreeNode {
    let counts = class_counts(y, indices, n_classes);
    let total = indices.len();
    let parent_gini = gini(&counts, total);
    if depth >= params.max_depth
        || total < params.min_samples_split
        || counts.iter().filter(|c| **c > 0).count() <= 1
    {
        return leaf_from_counts(&counts, total);
    }

    let mut best: Option<(usize, f64, f64)> = None; // (feature, threshold, impurity)
    #[allow(clippy::needless_range_loop)]
    for feature in candidate_features(x[0].len(), sampler) {
        let mut order: Vec<usize> = indices.to_vec();
        order.sort_by(|a, b| x[*a][feature].total_cmp(&x[*b][feature]));
        let mut left_counts = vec![0usize; n_classes];
        for pos in 0..total - 1 {
            left_counts[y[order[pos]]] += 1;
            let lo = x[order[pos]][feature];
            let hi = x[order[pos + 1]][feature];
            if lo == hi {
                continue;
            }
            let n_left = pos + 1;
            let n_right = total - n_left;
            if n_left < params.min_samples_leaf || n_right < params.min_samples_leaf {
                continue;
            }
            let threshold = lo + (hi - lo) / 2.0;
            if !(lo < threshold && threshold <= hi) {
                continue; // adjacent representable values, unsplittable
            }
            let right_counts: Vec<usize> = counts
                .iter()
                .zip(&left_counts)
                .map(|(c, l)| c - l)
                .collect();
            let impurity = (n_left as f64 * gini(&left_counts, n_left)
                + n_right as f64 * gini(&right_counts, n_right))
                / total as f64;
            if best.is_none_or(|(_, _, b)| impurity < b) {
                best = Some((feature, threshold, impurity));
            }
        }
    }

    match best {
        Some((feature, threshold, impurity)) if impurity < parent_gini - 1e-12 => {
            let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = indices
                .iter()
                .partition(|i| x[**i][feature] <= threshold);
            let left = build_class_node(x, y, n_classes, params, sampler, &left_idx, depth + 1);
            let right = build_class_node(x, y, n_classes, params, sampler, &right_idx, depth + 1);
            TreeNode::Split {
                feature,
                threshold,
                left: Box::new(left),
                right: Box::new(right),
            }
        }
        _ => leaf_from_counts(&counts, total),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RegNode {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<RegNode>,
        right: Box<RegNode>,
    },
}

/// Regression tree over gradient/hessian pairs. Leaf values are
/// `-sum(g) / (sum(h) + lambda)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    root: RegNode,
}

impl RegressionTree {
    pub fn fit_gradients(
        x: &[Vec<f64>],
        grad: &[f64],
        hess: &[f64],
        max_depth: usize,
        lambda: f64,
    ) -> RegressionTree {
        let indices: Vec<usize> = (0..x.len()).collect();
        RegressionTree {
            root: build_reg_node(x, grad, hess, max_depth, lambda, &indices, 0),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let mut node = &self.root;
        loop {
            match node {
                RegNode::Leaf { value } => return *value,
                RegNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }
}

fn build_reg_node(
    x: &[Vec<f64>],
    grad: &[f64],
    hess: &[f64],
    max_depth: usize,
    lambda: f64,
    indices: &[usize],
    depth: usize,
) -> RegNode {
    let g: f64 = indices.iter().map(|i| grad[*i]).sum();
    let h: f64 = indices.iter().map(|i| hess[*i]).sum();
    let leaf = RegNode::Leaf {
        value: -g / (h + lambda),
    };
    if depth >= max_depth || indices.len() < 2 {
        return leaf;
    }

    let parent_score = g * g / (h + lambda);
    let mut best: Option<(usize, f64, f64)> = None; // (feature, threshold, gain)
    #[allow(clippy::needless_range_loop)]
    for feature in 0..x[0].len() {
        let mut order: Vec<usize> = indices.to_vec();
        order.sort_by(|a, b| x[*a][feature].total_cmp(&x[*b][feature]));
        let (mut gl, mut hl) = (0.0, 0.0);
        for pos in 0..order.len() - 1 {
            gl += grad[order[pos]];
            hl += hess[order[pos]];
            let lo = x[order[pos]][feature];
            let hi = x[order[pos + 1]][feature];
            if lo == hi {
                continue;
            }
            let threshold = lo + (hi - lo) / 2.0;
            if !(lo < threshold && threshold <= hi) {
                continue;
            }
            let (gr, hr) = (g - gl, h - hl);
            let gain = gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent_score;
            if gain > 1e-12 && best.is_none_or(|(_, _, b)| gain > b) {
                best = Some((feature, threshold, gain));
            }
        }
    }

    match best {
        Some((feature, threshold, _)) => {
            let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = indices
                .iter()
                .partition(|i| x[**i][feature] <= threshold);
            RegNode::Split {
                feature,
                threshold,
                left: Box::new(build_reg_node(x, grad, hess, max_depth, lambda, &left_idx, depth + 1)),
                right: Box::new(build_reg_node(x, grad, hess, max_depth, lambda, &right_idx, depth + 1)),
            }
        }
        None => leaf,
    }
}
