//! Random forest: bagged Gini trees with per-node feature subsampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::tree::{DecisionTree, FeatureSampler, TreeParams};
use crate::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    /// Bootstrap-resample each tree's training set.
    pub bootstrap: bool,
    /// Consider only ceil(sqrt(d)) features per node.
    pub feature_subsample: bool,
}

impl ForestParams {
    pub fn new(n_trees: usize, max_depth: usize) -> ForestParams {
        ForestParams {
            n_trees,
            max_depth,
            bootstrap: true,
            feature_subsample: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    trees: Vec<DecisionTree>,
    n_classes: usize,
}

impl ForestModel {
    pub fn fit(
        x: &[Vec<f64>],
        y: &[usize],
        n_classes: usize,
        params: &ForestParams,
        seed: u64,
    ) -> ForestModel {
        let n_features = x[0].len();
        let per_node = (n_features as f64).sqrt().ceil() as usize;
        let tree_params = TreeParams::with_depth(params.max_depth);
        let mut trees = Vec::with_capacity(params.n_trees);
        for t in 0..params.n_trees {
            let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(seed, &format!("tree-{t}")));
            let (bx, by): (Vec<Vec<f64>>, Vec<usize>) = if params.bootstrap {
                (0..x.len())
                    .map(|_| {
                        let i = rng.random_range(0..x.len());
                        (x[i].clone(), y[i])
                    })
                    .unzip()
            } else {
                (x.to_vec(), y.to_vec())
            };
            let sampler = params.feature_subsample.then_some(FeatureSampler { rng, per_node });
            trees.push(DecisionTree::fit(&bx, &by, n_classes, &tree_params, sampler));
        }
        ForestModel { trees, n_classes }
    }

    /// Mean of the individual tree leaf distributions.
    pub fn proba(&self, x: &[f64]) -> Vec<f64> {
        let mut acc = vec![0.0; self.n_classes];
        for tree in &self.trees {
            for (a, p) in acc.iter_mut().zip(tree.proba(x)) {
                *a += p;
            }
        }
        for a in &mut acc {
            *a /= self.trees.len() as f64;
        }
        acc
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_blob_data() -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..20 {
            let j = i as f64 * 0.05;
            x.push(vec![j, 1.0 - j]);
            y.push(0);
            x.push(vec![8.0 + j, 9.0 - j]);
            y.push(1);
        }
        (x, y)
    }

    #[test]
    fn proba_is_mean_of_trees() {
        // Per-tree enumeration oracle: forest probability must equal the
        // average of the individual tree leaf distributions.
        let (x, y) = two_blob_data();
        let params = ForestParams::new(10, 4);
        let model = ForestModel::fit(&x, &y, 2, &params, 13);
        for probe in [&[0.5, 0.5][..], &[7.7, 8.1][..], &[4.0, 4.0][..]] {
            let expect: Vec<f64> = {
                let mut acc = vec![0.0; 2];
                for t in model.trees() {
                    for (a, p) in acc.iter_mut().zip(t.proba(probe)) {
                        *a += p;
                    }
                }
                acc.into_iter().map(|v| v / model.trees().len() as f64).collect()
            };
            assert_eq!(model.proba(probe), expect);
        }
    }

    #[test]
    fn same_seed_same_forest() {
        let (x, y) = two_blob_data();
        let params = ForestParams::new(8, 6);
        let a = ForestModel::fit(&x, &y, 2, &params, 7);
        let b = ForestModel::fit(&x, &y, 2, &params, 7);
        assert_eq!(a, b);
    }
}
