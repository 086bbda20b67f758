//! Laboratory for black-box evasion attacks against flow-based intrusion
//! detection, and for the ensemble defense that filters the resulting
//! adversarial traffic.
//!
//! The crate is organized around the experiment pipeline:
//!
//! * [`flow`] — flow records, feature taxonomy, bounds, validity
//! * [`preprocess`] — cleaning, min-max scaling, encoding, partitioning
//! * [`models`] — KNN / decision-tree / random-forest / boosted-tree
//!   classifiers behind a common train/predict/probability interface
//! * [`d2tc`] — the distance-to-target-center adversarial generator
//! * [`fusion`] — weighted-average and Dempster-Shafer decision fusion
//! * [`defense`] — per-feature sub-detectors, reliability weighting, and
//!   the adversarial filter placed ahead of the NIDS
//! * [`synth`] / [`ingest`] — dataset sources
//! * [`config`] / [`experiment`] / [`report`] — run configuration,
//!   orchestration, and report emission
//! * [`error`] — crate-level error with process exit-code mapping

pub mod config;
pub mod d2tc;
pub mod defense;
pub mod error;
pub mod experiment;
pub mod flow;
pub mod fusion;
pub mod ingest;
pub mod models;
pub mod preprocess;
pub mod report;
pub mod synth;

pub use d2tc::{
    attack_dataset, benign_centroid, craft, perturb, AdversarialTrace, AttackConfig, AttackStats,
    BenignCentroid, Mask, Outcome,
};
pub use defense::{
    build_defense_dataset, calibrate_weights, train_subdetectors, DefenseDataset, DefenseEnsemble,
    SubDetector,
};
pub use error::Error;
pub use flow::{
    fit_bounds, is_valid, recompute_dependents, Bounds, Feature, FeatureSchema, FlowRecord,
    DUR_EPSILON,
};
pub use fusion::{
    discount, ds_combine, fuse_bayesian, fuse_dempster, DefenseLabel, FusionRule, FusionVerdict,
    MassFunction,
};
pub use models::{evaluate, train, Classifier, EvalReport, Hyperparams, ModelFamily, ProbModel};
pub use preprocess::{
    categorize_port, clean, encode, fit_normalizer, partition, EncodedInstance, Encoder,
    NormalizationParams, PartitionedData, PortCategory, ProtoVocab,
};

/// Derives a stream-independent seed for a named pipeline stage so each
/// stochastic step gets its own reproducible generator.
pub fn derive_seed(master: u64, tag: &str) -> u64 {
    // FNV-1a over the tag, then a splitmix64 finalizer.
    let mut h: u64 = 0xcbf29ce484222325;
    for b in tag.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    let mut z = master.wrapping_add(h).wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}
