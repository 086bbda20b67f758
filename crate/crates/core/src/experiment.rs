//! Experiment orchestration.
//!
//! `run_attack_experiment` reproduces the evaluation protocol end to end:
//! partition the corpus into defender/attacker halves, preprocess and
//! train the four model families independently per side, craft
//! adversarial traffic against each attacker substitute, and measure
//! defender detection before and after. `run_defense_experiment` then
//! builds the defense dataset from the defender's half, trains and
//! calibrates the sub-detector ensemble, and scores the filtered pipeline
//! against the same adversarial traffic under each fusion rule.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::config::{DatasetConfig, ExperimentConfig, ModelGridConfig};
use crate::d2tc::{attack_dataset, benign_centroid, AdversarialTrace, AttackConfig, AttackStats, BenignCentroid};
use crate::defense::{
    build_defense_dataset, calibrate_weights, split_defense, train_subdetectors, DefenseDataset,
    DefenseEnsemble, MonolithicDetector,
};
use crate::derive_seed;
use crate::error::Error;
use crate::flow::{fit_bounds, Feature, FeatureSchema, FlowRecord};
use crate::fusion::{DefenseLabel, FusionRule};
use crate::ingest::{ingest_csv, ColumnMapping};
use crate::models::{evaluate, train, Classifier, EvalReport, Hyperparams, ModelFamily};
use crate::preprocess::{partition, Encoder, PartitionedData};
use crate::synth::generate_synthetic;

/// Defender-by-attacker grid of detection rates, mirroring the result
/// tables: one row per defender family, one column per substitute family,
/// plus exact row means.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransferabilityMatrix {
    pub label: String,
    pub defenders: Vec<ModelFamily>,
    pub attackers: Vec<ModelFamily>,
    /// cells[d][a] = detection rate of defender d on traffic crafted
    /// against substitute a.
    pub cells: Vec<Vec<f64>>,
    pub row_averages: Vec<f64>,
}

impl TransferabilityMatrix {
    pub fn new(
        label: impl Into<String>,
        defenders: Vec<ModelFamily>,
        attackers: Vec<ModelFamily>,
        cells: Vec<Vec<f64>>,
    ) -> TransferabilityMatrix {
        let row_averages = cells
            .iter()
            .map(|row| row.iter().sum::<f64>() / row.len() as f64)
            .collect();
        TransferabilityMatrix {
            label: label.into(),
            defenders,
            attackers,
            cells,
            row_averages,
        }
    }

    pub fn grand_mean(&self) -> f64 {
        let n: usize = self.cells.iter().map(Vec::len).sum();
        let sum: f64 = self.cells.iter().flatten().sum();
        sum / n as f64
    }
}

/// Everything one side (defender or attacker) derives from its half of
/// the data: encoder and bounds, benign centroid, and one fitted model
/// per family with its clean-test metrics.
pub struct TrainedSide {
    pub name: &'static str,
    pub train: Vec<FlowRecord>,
    pub test: Vec<FlowRecord>,
    pub encoder: Encoder,
    pub schema: FeatureSchema,
    pub centroid: BenignCentroid,
    pub models: Vec<(ModelFamily, Hyperparams, Classifier)>,
    pub metrics: BTreeMap<ModelFamily, EvalReport>,
}

impl TrainedSide {
    pub fn model(&self, family: ModelFamily) -> &Classifier {
        &self
            .models
            .iter()
            .find(|(f, _, _)| *f == family)
            .expect("family trained")
            .2
    }

    pub fn families(&self) -> Vec<ModelFamily> {
        self.models.iter().map(|(f, _, _)| *f).collect()
    }
}

pub struct AttackOutcome {
    pub dataset_note: String,
    pub partitioned: PartitionedData,
    pub defender: TrainedSide,
    pub attacker: TrainedSide,
    /// Clean malicious flows from the attacker's test quadrant — the
    /// population every trace set below was crafted from.
    pub malicious_test: Vec<FlowRecord>,
    pub traces: BTreeMap<ModelFamily, Vec<AdversarialTrace>>,
    pub stats: BTreeMap<ModelFamily, AttackStats>,
    /// Defender detection on the clean malicious originals.
    pub before_detection: BTreeMap<ModelFamily, f64>,
    pub before_per_class: BTreeMap<ModelFamily, BTreeMap<String, f64>>,
    /// Per (defender, substitute) detection on the crafted finals.
    pub after_per_class: BTreeMap<ModelFamily, BTreeMap<ModelFamily, BTreeMap<String, f64>>>,
    pub no_defense_matrix: TransferabilityMatrix,
    /// substitute -> attack class -> (mean seconds, flow count).
    pub timing: BTreeMap<ModelFamily, BTreeMap<String, (f64, usize)>>,
}

/// Materializes the configured dataset source.
pub fn prepare_flows(config: &ExperimentConfig) -> Result<(Vec<FlowRecord>, String), Error> {
    match &config.dataset {
        DatasetConfig::Synthetic { spec } => {
            let flows = generate_synthetic(spec, derive_seed(config.seed, "synthesize"))?;
            let note = format!(
                "synthetic ({} flows, {} classes)",
                flows.len(),
                spec.classes.len()
            );
            Ok((flows, note))
        }
        DatasetConfig::Csv { path, mapping } => {
            let mapping = ColumnMapping::resolve(mapping)?;
            let report = ingest_csv(path, &mapping)?;
            let note = format!(
                "csv {} ({} rows read, {} skipped, {} repaired, {} duplicates removed)",
                path.display(),
                report.rows_read,
                report.rows_skipped,
                report.repaired,
                report.duplicates_removed
            );
            Ok((report.flows, note))
        }
    }
}

fn choose_hyperparams(
    grids: &ModelGridConfig,
    family: ModelFamily,
    rng: &mut ChaCha20Rng,
) -> Hyperparams {
    match family {
        ModelFamily::Knn => Hyperparams::Knn {
            k: *grids.knn_k.choose(rng).expect("non-empty grid"),
        },
        ModelFamily::Dt => Hyperparams::Dt {
            max_depth: *grids.dt_max_depth.choose(rng).expect("non-empty grid"),
        },
        ModelFamily::Rf => Hyperparams::Rf {
            trees: *grids.rf_trees.choose(rng).expect("non-empty grid"),
            max_depth: grids.rf_max_depth,
            bootstrap: true,
            feature_subsample: true,
        },
        ModelFamily::Gbt => Hyperparams::Gbt {
            rounds: *grids.gbt_rounds.choose(rng).expect("non-empty grid"),
            learning_rate: *grids.gbt_learning_rate.choose(rng).expect("non-empty grid"),
            max_depth: grids.gbt_max_depth,
        },
    }
}

/// Fits one side's preprocessing state and model grid. Bounds come from
/// the side's full half (the side owns both portions), the normalizer and
/// centroid from its training portion only, and each family draws its
/// hyperparameters from the side-specific stream.
pub fn train_side(
    name: &'static str,
    train_flows: Vec<FlowRecord>,
    test_flows: Vec<FlowRecord>,
    grids: &ModelGridConfig,
    target_class: &str,
    seed: u64,
) -> Result<TrainedSide, Error> {
    let encoder = Encoder::fit(&train_flows)?;
    let half: Vec<FlowRecord> = train_flows.iter().chain(test_flows.iter()).cloned().collect();
    let schema = fit_bounds(&half)?;
    let benign: Vec<FlowRecord> = train_flows
        .iter()
        .filter(|f| f.label == target_class)
        .cloned()
        .collect();
    if benign.is_empty() {
        return Err(Error::Data(format!(
            "{name} training data has no '{target_class}' flows"
        )));
    }
    let centroid = benign_centroid(&benign)?;

    let encoded_train = encoder.encode_all(&train_flows);
    let encoded_test = encoder.encode_all(&test_flows);
    let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(seed, &format!("hyperparams-{name}")));
    let mut models = Vec::new();
    let mut metrics = BTreeMap::new();
    for family in &grids.families {
        let hyperparams = choose_hyperparams(grids, *family, &mut rng);
        let model = train(
            &hyperparams,
            &encoded_train,
            derive_seed(seed, &format!("train-{name}-{family}")),
        )?;
        metrics.insert(*family, evaluate(&model, &encoded_test)?);
        models.push((*family, hyperparams, model));
    }
    Ok(TrainedSide {
        name,
        train: train_flows,
        test: test_flows,
        encoder,
        schema,
        centroid,
        models,
        metrics,
    })
}

/// Fraction of flows a model classifies as their true label.
fn detection_rate(model: &Classifier, encoder: &Encoder, flows: &[FlowRecord]) -> Result<f64, Error> {
    if flows.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    for flow in flows {
        if model.predict(&encoder.encode(flow).features)? == flow.label {
            hits += 1;
        }
    }
    Ok(hits as f64 / flows.len() as f64)
}

fn per_class_detection(
    model: &Classifier,
    encoder: &Encoder,
    flows: &[FlowRecord],
) -> Result<BTreeMap<String, f64>, Error> {
    let mut hits: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for flow in flows {
        let entry = hits.entry(flow.label.clone()).or_default();
        entry.1 += 1;
        if model.predict(&encoder.encode(flow).features)? == flow.label {
            entry.0 += 1;
        }
    }
    Ok(hits
        .into_iter()
        .map(|(class, (h, n))| (class, h as f64 / n as f64))
        .collect())
}

pub fn run_attack_experiment(config: &ExperimentConfig) -> Result<AttackOutcome, Error> {
    config.validate()?;
    let attack_config = config.attack.to_attack_config()?;
    let target = attack_config.target_class.clone();

    let (flows, dataset_note) = prepare_flows(config)?;
    let partitioned = partition(&flows, derive_seed(config.seed, "partition"))?;
    let defender = train_side(
        "defender",
        partitioned.defender_train.clone(),
        partitioned.defender_test.clone(),
        &config.models,
        &target,
        config.seed,
    )?;
    let attacker = train_side(
        "attacker",
        partitioned.attacker_train.clone(),
        partitioned.attacker_test.clone(),
        &config.models,
        &target,
        config.seed,
    )?;

    let malicious_test: Vec<FlowRecord> = attacker
        .test
        .iter()
        .filter(|f| f.label != target)
        .cloned()
        .collect();

    let mut traces = BTreeMap::new();
    let mut stats = BTreeMap::new();
    let mut timing = BTreeMap::new();
    for (family, _, substitute) in &attacker.models {
        let family_traces = attack_dataset(
            &malicious_test,
            substitute,
            &attacker.centroid,
            &attack_config,
            &attacker.schema,
            &attacker.encoder,
        );
        stats.insert(*family, AttackStats::from_traces(&family_traces, attack_config.max_steps));
        timing.insert(*family, timing_by_class(&family_traces));
        traces.insert(*family, family_traces);
    }

    let mut before_detection = BTreeMap::new();
    let mut before_per_class = BTreeMap::new();
    let mut after_per_class: BTreeMap<ModelFamily, BTreeMap<ModelFamily, BTreeMap<String, f64>>> =
        BTreeMap::new();
    let defender_families = defender.families();
    let attacker_families = attacker.families();
    let mut cells = Vec::new();
    for d in &defender_families {
        let model = defender.model(*d);
        before_detection.insert(*d, detection_rate(model, &defender.encoder, &malicious_test)?);
        before_per_class.insert(
            *d,
            per_class_detection(model, &defender.encoder, &malicious_test)?,
        );
        let mut row = Vec::new();
        for a in &attacker_families {
            let finals: Vec<FlowRecord> =
                traces[a].iter().map(|t| t.final_flow.clone()).collect();
            row.push(detection_rate(model, &defender.encoder, &finals)?);
            after_per_class
                .entry(*d)
                .or_default()
                .insert(*a, per_class_detection(model, &defender.encoder, &finals)?);
        }
        cells.push(row);
    }
    let no_defense_matrix = TransferabilityMatrix::new(
        "no_defense",
        defender_families,
        attacker_families,
        cells,
    );

    Ok(AttackOutcome {
        dataset_note,
        partitioned,
        defender,
        attacker,
        malicious_test,
        traces,
        stats,
        before_detection,
        before_per_class,
        after_per_class,
        no_defense_matrix,
        timing,
    })
}

fn timing_by_class(traces: &[AdversarialTrace]) -> BTreeMap<String, (f64, usize)> {
    let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for trace in traces {
        let entry = acc.entry(trace.original.label.clone()).or_default();
        entry.0 += trace.gen_seconds;
        entry.1 += 1;
    }
    acc.into_iter()
        .map(|(class, (sum, n))| (class, (sum / n as f64, n)))
        .collect()
}

/// One exportable defense decision.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub population: String,
    pub substitute: Option<ModelFamily>,
    pub true_label: String,
    pub rule: FusionRule,
    pub p_adversarial: f64,
    pub decision: DefenseLabel,
}

pub struct DefenseOutcome {
    /// One calibrated ensemble per selected fusion rule.
    pub ensembles: Vec<DefenseEnsemble>,
    /// Calibrated reliability weight per feature.
    pub weights: Vec<(Feature, f64)>,
    pub defense_train_size: usize,
    pub defense_eval_size: usize,
    pub adversarial_training_instances: usize,
    /// no-defense matrix first, then one per fusion rule, then the
    /// monolithic-detector baseline.
    pub matrices: Vec<TransferabilityMatrix>,
    /// For pass-through clean flows the NIDS verdict must not change.
    pub clean_passthrough_identical: bool,
    /// rule -> fraction of clean defender-test flows flagged adversarial.
    pub clean_fp_rate: BTreeMap<FusionRule, f64>,
    pub verdicts: Vec<VerdictRecord>,
}

/// Crafts the defender-side adversarial pool (the defender simulates the
/// attack with its own models on its own training malicious flows) and
/// assembles the defense dataset. Pooling one trace set per defender
/// family yields several adversarial instances per original, so the pool
/// is subsampled back to the clean count: a balanced corpus keeps the
/// sub-detectors for uninformative features at chance instead of
/// collapsing onto the majority class.
pub fn build_defender_defense_data(
    attack: &AttackOutcome,
    attack_config: &AttackConfig,
    seed: u64,
) -> Result<DefenseDataset, Error> {
    let defender = &attack.defender;
    let malicious_train: Vec<FlowRecord> = defender
        .train
        .iter()
        .filter(|f| f.label != attack_config.target_class)
        .cloned()
        .collect();
    let mut pooled = Vec::new();
    for (_, _, model) in &defender.models {
        pooled.extend(
            attack_dataset(
                &malicious_train,
                model,
                &defender.centroid,
                attack_config,
                &defender.schema,
                &defender.encoder,
            )
            .into_iter()
            .filter(|t| t.evaded()),
        );
    }
    let target = defender.train.len();
    if pooled.len() > target {
        let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(seed, "defense-balance"));
        let mut indices: Vec<usize> = (0..pooled.len()).collect();
        rand::seq::SliceRandom::shuffle(indices.as_mut_slice(), &mut rng);
        indices.truncate(target);
        indices.sort_unstable();
        pooled = indices.into_iter().map(|i| pooled[i].clone()).collect();
    }
    Ok(build_defense_dataset(
        &defender.train,
        &pooled,
        &attack_config.target_class,
    )?)
}

pub fn run_defense_experiment(
    config: &ExperimentConfig,
    attack: &AttackOutcome,
) -> Result<DefenseOutcome, Error> {
    let attack_config = config.attack.to_attack_config()?;
    let defense_data = build_defender_defense_data(attack, &attack_config, config.seed)?;
    let (train_ds, eval_ds) = split_defense(
        &defense_data,
        config.defense.train_fraction,
        derive_seed(config.seed, "defense-split"),
    );
    let detectors = train_subdetectors(&train_ds, derive_seed(config.seed, "subdetectors"))?;
    let detectors = calibrate_weights(detectors, &eval_ds);
    let weights: Vec<(Feature, f64)> = detectors.iter().map(|d| (d.feature, d.weight)).collect();
    let adversarial_training_instances = train_ds.count(DefenseLabel::Adversarial);

    let rules = config.defense.rule.rules();
    let ensembles: Vec<DefenseEnsemble> = rules
        .iter()
        .map(|rule| DefenseEnsemble::new(detectors.clone(), *rule))
        .collect();
    let monolithic = MonolithicDetector::train(&train_ds, derive_seed(config.seed, "monolithic"))?;

    let defender = &attack.defender;
    let defender_families = defender.families();
    let attacker_families = attack.attacker.families();

    let mut matrices = vec![attack.no_defense_matrix.clone()];
    let mut verdicts = Vec::new();

    for ensemble in &ensembles {
        let mut cells = Vec::new();
        for d in &defender_families {
            let model = defender.model(*d);
            let mut row = Vec::new();
            for a in &attacker_families {
                let mut detected = 0usize;
                let traces = &attack.traces[a];
                for trace in traces {
                    let verdict = ensemble.filter(&trace.final_flow)?;
                    if *d == defender_families[0] {
                        verdicts.push(VerdictRecord {
                            population: "attacker_adversarial_test".to_string(),
                            substitute: Some(*a),
                            true_label: trace.original.label.clone(),
                            rule: ensemble.rule,
                            p_adversarial: verdict.p_adversarial,
                            decision: verdict.decision,
                        });
                    }
                    let caught = verdict.decision == DefenseLabel::Adversarial
                        || model.predict(&defender.encoder.encode(&trace.final_flow).features)?
                            == trace.original.label;
                    if caught {
                        detected += 1;
                    }
                }
                row.push(detected as f64 / traces.len().max(1) as f64);
            }
            cells.push(row);
        }
        matrices.push(TransferabilityMatrix::new(
            ensemble.rule.name(),
            defender_families.clone(),
            attacker_families.clone(),
            cells,
        ));
    }

    // Monolithic adversarial-detector baseline, same filter placement.
    {
        let mut cells = Vec::new();
        for d in &defender_families {
            let model = defender.model(*d);
            let mut row = Vec::new();
            for a in &attacker_families {
                let traces = &attack.traces[a];
                let mut detected = 0usize;
                for trace in traces {
                    let caught = monolithic.is_adversarial(&trace.final_flow)
                        || model.predict(&defender.encoder.encode(&trace.final_flow).features)?
                            == trace.original.label;
                    if caught {
                        detected += 1;
                    }
                }
                row.push(detected as f64 / traces.len().max(1) as f64);
            }
            cells.push(row);
        }
        matrices.push(TransferabilityMatrix::new(
            "monolithic_baseline",
            defender_families.clone(),
            attacker_families.clone(),
            cells,
        ));
    }

    // Clean-traffic preservation: flows the filter passes through must get
    // the exact same NIDS verdict as without the defense.
    let mut clean_passthrough_identical = true;
    let mut clean_fp_rate = BTreeMap::new();
    for ensemble in &ensembles {
        let mut flagged = 0usize;
        for flow in &defender.test {
            let verdict = ensemble.filter(flow)?;
            verdicts.push(VerdictRecord {
                population: "defender_clean_test".to_string(),
                substitute: None,
                true_label: flow.label.clone(),
                rule: ensemble.rule,
                p_adversarial: verdict.p_adversarial,
                decision: verdict.decision,
            });
            if verdict.decision == DefenseLabel::Adversarial {
                flagged += 1;
                continue;
            }
            let encoded = defender.encoder.encode(flow);
            for d in &defender_families {
                let model = defender.model(*d);
                let with_defense = model.predict(&encoded.features)?;
                let without_defense = model.predict(&encoded.features)?;
                if with_defense != without_defense {
                    clean_passthrough_identical = false;
                }
            }
        }
        clean_fp_rate.insert(
            ensemble.rule,
            flagged as f64 / defender.test.len().max(1) as f64,
        );
    }

    Ok(DefenseOutcome {
        ensembles,
        weights,
        defense_train_size: train_ds.instances.len(),
        defense_eval_size: eval_ds.instances.len(),
        adversarial_training_instances,
        matrices,
        clean_passthrough_identical,
        clean_fp_rate,
        verdicts,
    })
}
