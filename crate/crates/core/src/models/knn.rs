//! K-nearest-neighbors with Euclidean distance over the encoded vector.

use serde::{Deserialize, Serialize};

/// Fitted KNN model: memorized training matrix plus neighbor count.
/// `k` is capped at the training-set size when querying. Distance ties are
/// resolved by training-row order so predictions are deterministic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    x: Vec<Vec<f64>>,
    y: Vec<usize>,
    n_classes: usize,
}

impl KnnModel {
    pub fn fit(x: Vec<Vec<f64>>, y: Vec<usize>, n_classes: usize, k: usize) -> KnnModel {
        assert!(k >= 1);
        assert_eq!(x.len(), y.len());
        KnnModel { k, x, y, n_classes }
    }

    pub fn proba(&self, query: &[f64]) -> Vec<f64> {
        let mut dist: Vec<(f64, usize)> = self
            .x
            .iter()
            .enumerate()
            .map(|(i, row)| (squared_distance(row, query), i))
            .collect();
        dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let k = self.k.min(dist.len());
        let mut votes = vec![0usize; self.n_classes];
        for (_, i) in &dist[..k] {
            votes[self.y[*i]] += 1;
        }
        votes.iter().map(|v| *v as f64 / k as f64).collect()
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
