//! Gradient-boosted trees with softmax loss.
//!
//! One regression tree per class per round fits the loss gradients; the
//! model score starts from log class priors, so a learning rate of zero
//! predicts the priors everywhere.

use serde::{Deserialize, Serialize};

use super::tree::RegressionTree;

const LAMBDA: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostParams {
    pub rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
}

impl BoostParams {
    pub fn new(rounds: usize, learning_rate: f64) -> BoostParams {
        BoostParams {
            rounds,
            learning_rate,
            max_depth: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostModel {
    base: Vec<f64>,
    rounds: Vec<Vec<RegressionTree>>,
    learning_rate: f64,
    n_classes: usize,
}

impl BoostModel {
    pub fn fit(x: &[Vec<f64>], y: &[usize], n_classes: usize, params: &BoostParams) -> BoostModel {
        let n = x.len();
        let mut counts = vec![0usize; n_classes];
        for label in y {
            counts[*label] += 1;
        }
        let base: Vec<f64> = counts
            .iter()
            .map(|c| ((*c).max(1) as f64 / n as f64).ln())
            .collect();

        let mut scores: Vec<Vec<f64>> = vec![base.clone(); n];
        let mut rounds = Vec::with_capacity(params.rounds);
        for _ in 0..params.rounds {
            let mut round_trees = Vec::with_capacity(n_classes);
            let probs: Vec<Vec<f64>> = scores.iter().map(|s| softmax(s)).collect();
            for k in 0..n_classes {
                let mut grad = Vec::with_capacity(n);
                let mut hess = Vec::with_capacity(n);
                for (i, p) in probs.iter().enumerate() {
                    let target = if y[i] == k { 1.0 } else { 0.0 };
                    grad.push(p[k] - target);
                    hess.push((p[k] * (1.0 - p[k])).max(1e-12));
                }
                let tree = RegressionTree::fit_gradients(x, &grad, &hess, params.max_depth, LAMBDA);
                for (i, row) in x.iter().enumerate() {
                    scores[i][k] += params.learning_rate * tree.value(row);
                }
                round_trees.push(tree);
            }
            rounds.push(round_trees);
        }
        BoostModel {
            base,
            rounds,
            learning_rate: params.learning_rate,
            n_classes,
        }
    }

    pub fn proba(&self, x: &[f64]) -> Vec<f64> {
        let mut scores = self.base.clone();
        for round in &self.rounds {
            for (k, tree) in round.iter().enumerate() {
                scores[k] += self.learning_rate * tree.value(x);
            }
        }
        softmax(&scores)
    }
}

fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b));
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_learning_rate_predicts_priors() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y = vec![0, 0, 0, 0, 0, 0, 1, 1, 1, 1];
        let model = BoostModel::fit(&x, &y, 2, &BoostParams::new(20, 0.0));
        for probe in [&[0.0][..], &[100.0][..]] {
            let p = model.proba(probe);
            assert!((p[0] - 0.6).abs() < 1e-12);
            assert!((p[1] - 0.4).abs() < 1e-12);
        }
    }

    #[test]
    fn boosting_separates_blobs() {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..15 {
            x.push(vec![i as f64 * 0.01]);
            y.push(0);
            x.push(vec![5.0 + i as f64 * 0.01]);
            y.push(1);
        }
        let model = BoostModel::fit(&x, &y, 2, &BoostParams::new(30, 0.3));
        let p0 = model.proba(&[0.05]);
        let p1 = model.proba(&[5.05]);
        assert!(p0[0] > 0.9, "{p0:?}");
        assert!(p1[1] > 0.9, "{p1:?}");
    }

    #[test]
    fn proba_sums_to_one() {
        let x: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let y: Vec<usize> = (0..12).map(|i| i % 3).collect();
        let model = BoostModel::fit(&x, &y, 3, &BoostParams::new(10, 0.1));
        for row in &x {
            let p = model.proba(row);
            assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            assert!(p.iter().all(|v| *v >= 0.0));
        }
    }
}
