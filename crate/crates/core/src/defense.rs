//! Reactive adversarial-traffic defense.
//!
//! Thirteen sub-detectors — one shallow decision tree per flow feature,
//! trained on raw feature values — vote on whether a flow has been
//! adversarially manipulated. Each detector carries a reliability weight
//! (its normalized adversarial-class recall on a held-out evaluation
//! slice), and the weighted votes are fused with either rule from
//! [`crate::fusion`]. The fused filter sits in front of the NIDS: flows
//! judged adversarial are dropped, everything else passes through with
//! the NIDS verdict untouched.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::d2tc::AdversarialTrace;
use crate::flow::{Feature, FlowRecord};
use crate::fusion::{fuse_bayesian, fuse_dempster, DefenseLabel, FusionError, FusionRule, FusionVerdict};
use crate::models::tree::{DecisionTree, TreeParams};
use crate::models::{train, Classifier, Hyperparams, ModelError, ProbModel};

pub const ENSEMBLE_FORMAT_VERSION: u32 = 1;

/// Tree depth for the one-feature sub-detectors.
const SUBDETECTOR_DEPTH: usize = 3;

#[derive(Debug, Error)]
pub enum DefenseError {
    #[error("no trace evaded; the defense dataset needs adversarial instances")]
    NoAdversarialInstances,
    #[error("defense dataset must contain both clean and adversarial instances")]
    DegenerateLabels,
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("ensemble io: {0}")]
    Io(#[from] std::io::Error),
    #[error("ensemble format: {0}")]
    Format(String),
}

/// Where a defense instance came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    BenignClean,
    MaliciousClean,
    CraftedAdversarial,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DefenseInstance {
    pub flow: FlowRecord,
    pub label: DefenseLabel,
    pub provenance: Provenance,
}

/// Labelled clean/adversarial corpus for training and evaluating the
/// sub-detectors.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DefenseDataset {
    pub instances: Vec<DefenseInstance>,
}

impl DefenseDataset {
    pub fn count(&self, label: DefenseLabel) -> usize {
        self.instances.iter().filter(|i| i.label == label).count()
    }
}

/// Clean flows keep their original form; evaded trace finals become the
/// adversarial class. Failed traces carry no adversarial instance and are
/// excluded.
pub fn build_defense_dataset(
    clean: &[FlowRecord],
    traces: &[AdversarialTrace],
    benign_label: &str,
) -> Result<DefenseDataset, DefenseError> {
    let mut instances: Vec<DefenseInstance> = clean
        .iter()
        .map(|flow| DefenseInstance {
            provenance: if flow.label == benign_label {
                Provenance::BenignClean
            } else {
                Provenance::MaliciousClean
            },
            label: DefenseLabel::Clean,
            flow: flow.clone(),
        })
        .collect();
    let evaded = traces.iter().filter(|t| t.evaded());
    let mut any = false;
    for trace in evaded {
        any = true;
        instances.push(DefenseInstance {
            flow: trace.final_flow.clone(),
            label: DefenseLabel::Adversarial,
            provenance: Provenance::CraftedAdversarial,
        });
    }
    if !any {
        return Err(DefenseError::NoAdversarialInstances);
    }
    Ok(DefenseDataset { instances })
}

/// Stratified (by defense label) split used to carve the weight-calibration
/// slice out of the defense training data. Deterministic per seed.
pub fn split_defense(
    dataset: &DefenseDataset,
    train_fraction: f64,
    seed: u64,
) -> (DefenseDataset, DefenseDataset) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut train = DefenseDataset::default();
    let mut eval = DefenseDataset::default();
    for label in [DefenseLabel::Adversarial, DefenseLabel::Clean] {
        let mut group: Vec<&DefenseInstance> =
            self::instances_with_label(dataset, label).collect();
        group.shuffle(&mut rng);
        let n = group.len();
        if n == 0 {
            continue;
        }
        let n_train = if n == 1 {
            1 // a singleton label goes to train
        } else {
            (((n as f64) * train_fraction).round() as usize).clamp(1, n - 1)
        };
        for (pos, inst) in group.into_iter().enumerate() {
            if pos < n_train {
                train.instances.push(inst.clone());
            } else {
                eval.instances.push(inst.clone());
            }
        }
    }
    (train, eval)
}

fn instances_with_label(
    dataset: &DefenseDataset,
    label: DefenseLabel,
) -> impl Iterator<Item = &DefenseInstance> {
    dataset.instances.iter().filter(move |i| i.label == label)
}

/// One-feature clean/adversarial classifier plus its reliability weight.
///
/// Class index 0 is adversarial, 1 clean. Proto values are looked up in a
/// vocabulary fitted on the training slice; ports feed the tree as raw
/// numbers. Weights start uniform and are replaced by
/// [`calibrate_weights`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubDetector {
    pub feature: Feature,
    tree: DecisionTree,
    pub weight: f64,
    proto_vocab: Vec<String>,
}

fn feature_value(feature: Feature, flow: &FlowRecord, proto_vocab: &[String]) -> f64 {
    match feature {
        Feature::Proto => proto_vocab
            .iter()
            .position(|p| *p == flow.proto)
            .unwrap_or(proto_vocab.len()) as f64,
        Feature::Sport => flow.sport as f64,
        Feature::Dport => flow.dport as f64,
        numeric => flow.numeric(numeric),
    }
}

impl SubDetector {
    fn feature_value(&self, flow: &FlowRecord) -> f64 {
        feature_value(self.feature, flow, &self.proto_vocab)
    }

    /// `(P_adversarial, P_clean)` for one flow.
    pub fn probabilities(&self, flow: &FlowRecord) -> (f64, f64) {
        let dist = self.tree.proba(&[self.feature_value(flow)]);
        (dist[0], dist[1])
    }

    pub fn predict(&self, flow: &FlowRecord) -> DefenseLabel {
        let (p_adv, _) = self.probabilities(flow);
        if p_adv > 0.5 {
            DefenseLabel::Adversarial
        } else {
            DefenseLabel::Clean
        }
    }
}

fn label_index(label: DefenseLabel) -> usize {
    match label {
        DefenseLabel::Adversarial => 0,
        DefenseLabel::Clean => 1,
    }
}

/// Trains the 13 per-feature sub-detectors with uniform initial weights.
/// The seed is part of the interface for reproducibility bookkeeping; the
/// exact-split trees are deterministic regardless.
pub fn train_subdetectors(
    dataset: &DefenseDataset,
    _seed: u64,
) -> Result<Vec<SubDetector>, DefenseError> {
    if dataset.count(DefenseLabel::Adversarial) == 0 || dataset.count(DefenseLabel::Clean) == 0 {
        return Err(DefenseError::DegenerateLabels);
    }
    let mut proto_vocab: Vec<String> = dataset
        .instances
        .iter()
        .map(|i| i.flow.proto.clone())
        .collect();
    proto_vocab.sort();
    proto_vocab.dedup();

    let y: Vec<usize> = dataset.instances.iter().map(|i| label_index(i.label)).collect();
    let params = TreeParams::with_depth(SUBDETECTOR_DEPTH);
    let mut detectors = Vec::with_capacity(Feature::ALL.len());
    for feature in Feature::ALL {
        let x: Vec<Vec<f64>> = dataset
            .instances
            .iter()
            .map(|i| vec![feature_value(feature, &i.flow, &proto_vocab)])
            .collect();
        detectors.push(SubDetector {
            feature,
            tree: DecisionTree::fit(&x, &y, 2, &params, None),
            weight: 1.0 / Feature::ALL.len() as f64,
            proto_vocab: proto_vocab.clone(),
        });
    }
    Ok(detectors)
}

/// Normalizes raw detection rates into reliability weights summing to
/// one; an all-zero vector falls back to uniform weights.
pub fn normalize_weights(recalls: &[f64]) -> Vec<f64> {
    let total: f64 = recalls.iter().sum();
    if total > 0.0 {
        recalls.iter().map(|r| r / total).collect()
    } else {
        vec![1.0 / recalls.len() as f64; recalls.len()]
    }
}

/// Adversarial-class recall of each detector on the evaluation slice,
/// normalized into reliability weights via [`normalize_weights`].
pub fn calibrate_weights(
    mut detectors: Vec<SubDetector>,
    eval: &DefenseDataset,
) -> Vec<SubDetector> {
    let adversarial: Vec<&DefenseInstance> =
        instances_with_label(eval, DefenseLabel::Adversarial).collect();
    let recalls: Vec<f64> = detectors
        .iter()
        .map(|d| {
            if adversarial.is_empty() {
                return 0.0;
            }
            let hits = adversarial
                .iter()
                .filter(|i| d.predict(&i.flow) == DefenseLabel::Adversarial)
                .count();
            hits as f64 / adversarial.len() as f64
        })
        .collect();
    let weights = normalize_weights(&recalls);
    for (d, w) in detectors.iter_mut().zip(weights) {
        d.weight = w;
    }
    detectors
}

/// Calibrated sub-detectors plus the fusion rule they vote under.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DefenseEnsemble {
    pub detectors: Vec<SubDetector>,
    pub rule: FusionRule,
}

impl DefenseEnsemble {
    pub fn new(detectors: Vec<SubDetector>, rule: FusionRule) -> DefenseEnsemble {
        DefenseEnsemble { detectors, rule }
    }

    pub fn weights(&self) -> Vec<f64> {
        self.detectors.iter().map(|d| d.weight).collect()
    }

    /// Per-detector `(P_adversarial, P_clean)` for one flow.
    pub fn detector_probabilities(&self, flow: &FlowRecord) -> Vec<(f64, f64)> {
        self.detectors.iter().map(|d| d.probabilities(flow)).collect()
    }

    /// Splits the flow into its 13 feature values, queries every
    /// sub-detector, and fuses the weighted votes. The caller drops flows
    /// with an adversarial decision before they reach the NIDS.
    pub fn filter(&self, flow: &FlowRecord) -> Result<FusionVerdict, FusionError> {
        let probs = self.detector_probabilities(flow);
        let weights = self.weights();
        match self.rule {
            FusionRule::Bayesian => fuse_bayesian(&probs, &weights),
            FusionRule::DempsterShafer => fuse_dempster(&probs, &weights),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), DefenseError> {
        #[derive(Serialize)]
        struct EnsembleFile<'a> {
            format_version: u32,
            ensemble: &'a DefenseEnsemble,
        }
        let json = serde_json::to_string(&EnsembleFile {
            format_version: ENSEMBLE_FORMAT_VERSION,
            ensemble: self,
        })
        .map_err(|e| DefenseError::Format(e.to_string()))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<DefenseEnsemble, DefenseError> {
        #[derive(Deserialize)]
        struct EnsembleFile {
            format_version: u32,
            ensemble: DefenseEnsemble,
        }
        let json = std::fs::read_to_string(path)?;
        let file: EnsembleFile =
            serde_json::from_str(&json).map_err(|e| DefenseError::Format(e.to_string()))?;
        if file.format_version != ENSEMBLE_FORMAT_VERSION {
            return Err(DefenseError::Format(format!(
                "unsupported ensemble format version {}",
                file.format_version
            )));
        }
        Ok(file.ensemble)
    }
}

/// Baseline for comparison: a single classifier over all 13 raw feature
/// values distinguishing clean from adversarial traffic.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonolithicDetector {
    model: Classifier,
    proto_vocab: Vec<String>,
}

impl MonolithicDetector {
    pub fn train(dataset: &DefenseDataset, seed: u64) -> Result<MonolithicDetector, DefenseError> {
        if dataset.count(DefenseLabel::Adversarial) == 0 || dataset.count(DefenseLabel::Clean) == 0 {
            return Err(DefenseError::DegenerateLabels);
        }
        let mut proto_vocab: Vec<String> = dataset
            .instances
            .iter()
            .map(|i| i.flow.proto.clone())
            .collect();
        proto_vocab.sort();
        proto_vocab.dedup();
        let data: Vec<crate::preprocess::EncodedInstance> = dataset
            .instances
            .iter()
            .map(|i| crate::preprocess::EncodedInstance {
                features: raw_features(&i.flow, &proto_vocab),
                label: i.label.name().to_string(),
            })
            .collect();
        let hyperparams = Hyperparams::Rf {
            trees: 50,
            max_depth: 8,
            bootstrap: true,
            feature_subsample: true,
        };
        Ok(MonolithicDetector {
            model: train(&hyperparams, &data, seed)?,
            proto_vocab,
        })
    }

    pub fn is_adversarial(&self, flow: &FlowRecord) -> bool {
        let features = raw_features(flow, &self.proto_vocab);
        self.model.predict_label(&features) == DefenseLabel::Adversarial.name()
    }
}

fn raw_features(flow: &FlowRecord, proto_vocab: &[String]) -> Vec<f64> {
    let mut out = Vec::with_capacity(13);
    for feature in Feature::NUMERIC {
        out.push(flow.numeric(feature));
    }
    out.push(
        proto_vocab
            .iter()
            .position(|p| *p == flow.proto)
            .unwrap_or(proto_vocab.len()) as f64,
    );
    out.push(flow.sport as f64);
    out.push(flow.dport as f64);
    out
}
