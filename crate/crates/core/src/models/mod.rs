//! Classifier families behind one train/predict/probability interface.
//!
//! Four families are available: K-nearest-neighbors, a single decision
//! tree, a random forest, and gradient-boosted trees. All of them expose
//! per-class probabilities that are non-negative and sum to one, and
//! `predict` is the argmax with ties broken toward the lowest class index.

pub mod boost;
pub mod forest;
pub mod knn;
pub mod metrics;
pub mod tree;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::preprocess::EncodedInstance;
use boost::{BoostModel, BoostParams};
use forest::{ForestModel, ForestParams};
use knn::KnnModel;
pub use metrics::EvalReport;
use tree::{DecisionTree, TreeParams};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("training data must contain at least two classes")]
    DegenerateData,
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),
    #[error("expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("model io: {0}")]
    Io(#[from] std::io::Error),
    #[error("model format: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelFamily {
    Knn,
    Dt,
    Rf,
    Gbt,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 4] = [
        ModelFamily::Knn,
        ModelFamily::Dt,
        ModelFamily::Rf,
        ModelFamily::Gbt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelFamily::Knn => "knn",
            ModelFamily::Dt => "dt",
            ModelFamily::Rf => "rf",
            ModelFamily::Gbt => "gbt",
        }
    }

    pub fn parse(name: &str) -> Option<ModelFamily> {
        ModelFamily::ALL.into_iter().find(|f| f.name() == name)
    }
}

impl std::fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Hyperparams {
    Knn {
        k: usize,
    },
    Dt {
        max_depth: usize,
    },
    Rf {
        trees: usize,
        max_depth: usize,
        bootstrap: bool,
        feature_subsample: bool,
    },
    Gbt {
        rounds: usize,
        learning_rate: f64,
        max_depth: usize,
    },
}

impl Hyperparams {
    pub fn family(&self) -> ModelFamily {
        match self {
            Hyperparams::Knn { .. } => ModelFamily::Knn,
            Hyperparams::Dt { .. } => ModelFamily::Dt,
            Hyperparams::Rf { .. } => ModelFamily::Rf,
            Hyperparams::Gbt { .. } => ModelFamily::Gbt,
        }
    }

    fn validate(&self) -> Result<(), ModelError> {
        let fail = |msg: &str| Err(ModelError::InvalidHyperparams(msg.to_string()));
        match self {
            Hyperparams::Knn { k } if *k == 0 => fail("k must be >= 1"),
            Hyperparams::Dt { max_depth } if *max_depth == 0 => fail("max_depth must be >= 1"),
            Hyperparams::Rf { trees, max_depth, .. } if *trees == 0 || *max_depth == 0 => {
                fail("trees and max_depth must be >= 1")
            }
            Hyperparams::Gbt {
                rounds,
                learning_rate,
                max_depth,
            } if *rounds == 0 || *max_depth == 0 || !learning_rate.is_finite() || *learning_rate < 0.0 => {
                fail("rounds/max_depth must be >= 1 and learning_rate finite and >= 0")
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Inner {
    Knn(KnnModel),
    Tree(DecisionTree),
    Forest(ForestModel),
    Boost(BoostModel),
}

/// A fitted classifier of any family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    classes: Vec<String>,
    n_features: usize,
    hyperparams: Hyperparams,
    inner: Inner,
}

/// Minimal prediction interface shared by fitted classifiers and the test
/// stand-ins used to probe the attack loop.
pub trait ProbModel {
    fn classes(&self) -> &[String];
    fn proba(&self, x: &[f64]) -> Vec<f64>;

    fn predict_label(&self, x: &[f64]) -> &str {
        let p = self.proba(x);
        let mut best = 0;
        for i in 1..p.len() {
            if p[i] > p[best] {
                best = i;
            }
        }
        &self.classes()[best]
    }
}

/// Trains a classifier of the family encoded in `hyperparams`.
/// Deterministic for a fixed seed.
pub fn train(
    hyperparams: &Hyperparams,
    data: &[EncodedInstance],
    seed: u64,
) -> Result<Classifier, ModelError> {
    hyperparams.validate()?;
    if data.is_empty() {
        return Err(ModelError::DegenerateData);
    }
    let n_features = data[0].features.len();
    for row in data {
        if row.features.len() != n_features {
            return Err(ModelError::DimensionMismatch {
                expected: n_features,
                got: row.features.len(),
            });
        }
    }
    let mut classes: Vec<String> = data.iter().map(|d| d.label.clone()).collect();
    classes.sort();
    classes.dedup();
    if classes.len() < 2 {
        return Err(ModelError::DegenerateData);
    }
    let x: Vec<Vec<f64>> = data.iter().map(|d| d.features.clone()).collect();
    let y: Vec<usize> = data
        .iter()
        .map(|d| classes.iter().position(|c| *c == d.label).expect("label listed"))
        .collect();

    let inner = match hyperparams {
        Hyperparams::Knn { k } => Inner::Knn(KnnModel::fit(x, y, classes.len(), *k)),
        Hyperparams::Dt { max_depth } => Inner::Tree(DecisionTree::fit(
            &x,
            &y,
            classes.len(),
            &TreeParams::with_depth(*max_depth),
            None,
        )),
        Hyperparams::Rf {
            trees,
            max_depth,
            bootstrap,
            feature_subsample,
        } => {
            let params = ForestParams {
                n_trees: *trees,
                max_depth: *max_depth,
                bootstrap: *bootstrap,
                feature_subsample: *feature_subsample,
            };
            Inner::Forest(ForestModel::fit(&x, &y, classes.len(), &params, seed))
        }
        Hyperparams::Gbt {
            rounds,
            learning_rate,
            max_depth,
        } => {
            let params = BoostParams {
                rounds: *rounds,
                learning_rate: *learning_rate,
                max_depth: *max_depth,
            };
            Inner::Boost(BoostModel::fit(&x, &y, classes.len(), &params))
        }
    };

    Ok(Classifier {
        classes,
        n_features,
        hyperparams: hyperparams.clone(),
        inner,
    })
}

impl Classifier {
    pub fn family(&self) -> ModelFamily {
        self.hyperparams.family()
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.hyperparams
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Per-class probabilities; non-negative, summing to one.
    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>, ModelError> {
        if x.len() != self.n_features {
            return Err(ModelError::DimensionMismatch {
                expected: self.n_features,
                got: x.len(),
            });
        }
        Ok(self.proba_unchecked(x))
    }

    pub fn predict(&self, x: &[f64]) -> Result<&str, ModelError> {
        self.predict_proba(x).map(|p| {
            let mut best = 0;
            for i in 1..p.len() {
                if p[i] > p[best] {
                    best = i;
                }
            }
            self.classes[best].as_str()
        })
    }

    fn proba_unchecked(&self, x: &[f64]) -> Vec<f64> {
        match &self.inner {
            Inner::Knn(m) => m.proba(x),
            Inner::Tree(m) => m.proba(x),
            Inner::Forest(m) => m.proba(x),
            Inner::Boost(m) => m.proba(x),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        #[derive(Serialize)]
        struct ModelFile<'a> {
            format_version: u32,
            model: &'a Classifier,
        }
        let file = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            model: self,
        };
        let json = serde_json::to_string(&file).map_err(|e| ModelError::Format(e.to_string()))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Classifier, ModelError> {
        #[derive(Deserialize)]
        struct ModelFile {
            format_version: u32,
            model: Classifier,
        }
        let json = std::fs::read_to_string(path)?;
        let file: ModelFile =
            serde_json::from_str(&json).map_err(|e| ModelError::Format(e.to_string()))?;
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(ModelError::Format(format!(
                "unsupported model format version {}",
                file.format_version
            )));
        }
        Ok(file.model)
    }
}

impl ProbModel for Classifier {
    fn classes(&self) -> &[String] {
        &self.classes
    }

    fn proba(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_features, "feature dimension mismatch");
        self.proba_unchecked(x)
    }
}

/// Evaluates a model on labelled data. Classes never predicted keep a
/// flagged zero precision; detection rate per attack class is its recall.
pub fn evaluate(model: &Classifier, data: &[EncodedInstance]) -> Result<EvalReport, ModelError> {
    let mut pairs = Vec::with_capacity(data.len());
    for d in data {
        let pred = model.predict(&d.features)?;
        pairs.push((d.label.as_str(), pred));
    }
    Ok(EvalReport::from_predictions(pairs, &model.classes))
}
