//! Python bindings: flow records, the four classifier families, the
//! distance-to-target-center attack, and the fused adversarial filter.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use evadeflow::config::{DatasetConfig, ExperimentConfig};
use evadeflow::d2tc;
use evadeflow::defense;
use evadeflow::experiment;
use evadeflow::flow;
use evadeflow::fusion;
use evadeflow::models;
use evadeflow::preprocess;
use evadeflow::synth;

fn value_err(err: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(err.to_string())
}

fn runtime_err(err: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(err.to_string())
}

/// One network flow with the 13 features plus class label.
#[pyclass(name = "FlowRecord", from_py_object)]
#[derive(Clone)]
struct PyFlowRecord {
    inner: flow::FlowRecord,
}

#[pymethods]
impl PyFlowRecord {
    /// Dependent features (pkts, bytes, rate, srate, drate) are derived
    /// from the free fields.
    #[new]
    #[pyo3(signature = (dur, spkts, sbytes, dpkts, dbytes, proto, sport, dport, label))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        dur: f64,
        spkts: u64,
        sbytes: u64,
        dpkts: u64,
        dbytes: u64,
        proto: String,
        sport: u16,
        dport: u16,
        label: String,
    ) -> PyFlowRecord {
        PyFlowRecord {
            inner: flow::FlowRecord::new(dur, spkts, sbytes, dpkts, dbytes, proto, sport, dport, label),
        }
    }

    #[getter]
    fn dur(&self) -> f64 {
        self.inner.dur
    }
    #[getter]
    fn spkts(&self) -> u64 {
        self.inner.spkts
    }
    #[getter]
    fn sbytes(&self) -> u64 {
        self.inner.sbytes
    }
    #[getter]
    fn dpkts(&self) -> u64 {
        self.inner.dpkts
    }
    #[getter]
    fn dbytes(&self) -> u64 {
        self.inner.dbytes
    }
    #[getter]
    fn pkts(&self) -> u64 {
        self.inner.pkts
    }
    #[getter]
    fn bytes(&self) -> u64 {
        self.inner.bytes
    }
    #[getter]
    fn rate(&self) -> f64 {
        self.inner.rate
    }
    #[getter]
    fn srate(&self) -> f64 {
        self.inner.srate
    }
    #[getter]
    fn drate(&self) -> f64 {
        self.inner.drate
    }
    #[getter]
    fn proto(&self) -> String {
        self.inner.proto.clone()
    }
    #[getter]
    fn sport(&self) -> u16 {
        self.inner.sport
    }
    #[getter]
    fn dport(&self) -> u16 {
        self.inner.dport
    }
    #[getter]
    fn label(&self) -> String {
        self.inner.label.clone()
    }

    fn is_consistent(&self) -> bool {
        self.inner.is_consistent()
    }

    fn __repr__(&self) -> String {
        format!(
            "FlowRecord(dur={}, spkts={}, sbytes={}, dpkts={}, dbytes={}, proto='{}', label='{}')",
            self.inner.dur,
            self.inner.spkts,
            self.inner.sbytes,
            self.inner.dpkts,
            self.inner.dbytes,
            self.inner.proto,
            self.inner.label
        )
    }
}

#[pyfunction]
fn recompute_dependents(flow: &PyFlowRecord) -> PyFlowRecord {
    PyFlowRecord {
        inner: flow::recompute_dependents(&flow.inner),
    }
}

/// Per-feature valid ranges fitted from data.
#[pyclass(name = "FeatureSchema", from_py_object)]
#[derive(Clone)]
struct PyFeatureSchema {
    inner: flow::FeatureSchema,
}

#[pymethods]
impl PyFeatureSchema {
    /// `(lo, hi)` for a numeric feature name.
    fn bounds(&self, feature: &str) -> PyResult<(f64, f64)> {
        let feature = flow::Feature::NUMERIC
            .into_iter()
            .find(|f| f.name() == feature)
            .ok_or_else(|| value_err(format!("unknown numeric feature '{feature}'")))?;
        let b = self.inner.bounds(feature);
        Ok((b.lo, b.hi))
    }
}

#[pyfunction]
fn fit_bounds(flows: Vec<PyFlowRecord>) -> PyResult<PyFeatureSchema> {
    let flows: Vec<flow::FlowRecord> = flows.into_iter().map(|f| f.inner).collect();
    Ok(PyFeatureSchema {
        inner: flow::fit_bounds(&flows).map_err(value_err)?,
    })
}

#[pyfunction]
fn is_valid(flow: &PyFlowRecord, schema: &PyFeatureSchema) -> bool {
    flow::is_valid(&flow.inner, &schema.inner)
}

#[pyfunction]
fn categorize_port(port: i64) -> PyResult<String> {
    preprocess::categorize_port(port)
        .map(|c| c.name().to_string())
        .map_err(value_err)
}

/// Desk-scale synthetic corpus; `count_per_class` overrides the default
/// of 400 flows per class.
#[pyfunction]
#[pyo3(signature = (seed, count_per_class=None))]
fn synthesize(seed: u64, count_per_class: Option<usize>) -> PyResult<Vec<PyFlowRecord>> {
    let mut spec = synth::SyntheticSpec::desk_default();
    if let Some(count) = count_per_class {
        for class in &mut spec.classes {
            class.count = count;
        }
    }
    let flows = synth::generate_synthetic(&spec, seed).map_err(value_err)?;
    Ok(flows.into_iter().map(|inner| PyFlowRecord { inner }).collect())
}

type Quadrants = (
    Vec<PyFlowRecord>,
    Vec<PyFlowRecord>,
    Vec<PyFlowRecord>,
    Vec<PyFlowRecord>,
);

/// Stratified defender/attacker halves, each split 75:25 into
/// train/test. Returns (defender_train, defender_test, attacker_train,
/// attacker_test).
#[pyfunction]
fn partition(flows: Vec<PyFlowRecord>, seed: u64) -> PyResult<Quadrants> {
    let flows: Vec<flow::FlowRecord> = flows.into_iter().map(|f| f.inner).collect();
    let parts = preprocess::partition(&flows, seed).map_err(value_err)?;
    let wrap = |v: Vec<flow::FlowRecord>| v.into_iter().map(|inner| PyFlowRecord { inner }).collect();
    Ok((
        wrap(parts.defender_train),
        wrap(parts.defender_test),
        wrap(parts.attacker_train),
        wrap(parts.attacker_test),
    ))
}

fn default_hyperparams(family: &str) -> PyResult<models::Hyperparams> {
    match family {
        "knn" => Ok(models::Hyperparams::Knn { k: 5 }),
        "dt" => Ok(models::Hyperparams::Dt { max_depth: 8 }),
        "rf" => Ok(models::Hyperparams::Rf {
            trees: 50,
            max_depth: 16,
            bootstrap: true,
            feature_subsample: true,
        }),
        "gbt" => Ok(models::Hyperparams::Gbt {
            rounds: 50,
            learning_rate: 0.3,
            max_depth: 3,
        }),
        other => Err(value_err(format!(
            "unknown family '{other}' (expected knn, dt, rf, or gbt)"
        ))),
    }
}

/// A flow classifier bundling its encoder with the fitted model, so it
/// consumes FlowRecord values directly.
#[pyclass(name = "NidsModel")]
struct PyNidsModel {
    encoder: preprocess::Encoder,
    model: models::Classifier,
}

#[pymethods]
impl PyNidsModel {
    /// Trains one family ("knn", "dt", "rf", "gbt") on flows.
    #[staticmethod]
    fn train(family: &str, train_flows: Vec<PyFlowRecord>, seed: u64) -> PyResult<PyNidsModel> {
        let flows: Vec<flow::FlowRecord> = train_flows.into_iter().map(|f| f.inner).collect();
        let encoder = preprocess::Encoder::fit(&flows).map_err(value_err)?;
        let encoded = encoder.encode_all(&flows);
        let model = models::train(&default_hyperparams(family)?, &encoded, seed).map_err(value_err)?;
        Ok(PyNidsModel { encoder, model })
    }

    fn classes(&self) -> Vec<String> {
        models::ProbModel::classes(&self.model).to_vec()
    }

    fn predict(&self, flow: &PyFlowRecord) -> PyResult<String> {
        let encoded = self.encoder.encode(&flow.inner);
        self.model
            .predict(&encoded.features)
            .map(str::to_string)
            .map_err(runtime_err)
    }

    fn predict_proba(&self, flow: &PyFlowRecord) -> PyResult<Vec<f64>> {
        let encoded = self.encoder.encode(&flow.inner);
        self.model.predict_proba(&encoded.features).map_err(runtime_err)
    }

    /// Accuracy, macro F1, and per-class recall over labelled flows.
    fn evaluate<'py>(&self, py: Python<'py>, flows: Vec<PyFlowRecord>) -> PyResult<Bound<'py, PyAny>> {
        let flows: Vec<flow::FlowRecord> = flows.into_iter().map(|f| f.inner).collect();
        let encoded = self.encoder.encode_all(&flows);
        let report = models::evaluate(&self.model, &encoded).map_err(runtime_err)?;
        let dict = pyo3::types::PyDict::new(py);
        dict.set_item("accuracy", report.accuracy)?;
        dict.set_item("macro_f1", report.macro_f1)?;
        let recalls = pyo3::types::PyDict::new(py);
        for (class, recall) in report.classes.iter().zip(&report.recall) {
            recalls.set_item(class, *recall)?;
        }
        dict.set_item("recall", recalls)?;
        Ok(dict.into_any())
    }
}

/// Result of one crafting run.
#[pyclass(name = "AdversarialTrace", from_py_object)]
#[derive(Clone)]
struct PyTrace {
    inner: d2tc::AdversarialTrace,
}

#[pymethods]
impl PyTrace {
    #[getter]
    fn original(&self) -> PyFlowRecord {
        PyFlowRecord {
            inner: self.inner.original.clone(),
        }
    }
    #[getter]
    fn final_flow(&self) -> PyFlowRecord {
        PyFlowRecord {
            inner: self.inner.final_flow.clone(),
        }
    }
    #[getter]
    fn outcome(&self) -> &'static str {
        match self.inner.outcome {
            d2tc::Outcome::Evaded => "evaded",
            d2tc::Outcome::Failed => "failed",
        }
    }
    #[getter]
    fn steps_used(&self) -> usize {
        self.inner.steps_used
    }
    #[getter]
    fn mask_id(&self) -> Option<u8> {
        self.inner.mask_used.map(|m| m.id())
    }
    #[getter]
    fn delta(&self) -> (f64, f64, f64) {
        (self.inner.delta[0], self.inner.delta[1], self.inner.delta[2])
    }
    #[getter]
    fn probes(&self) -> usize {
        self.inner.probes
    }

    fn __repr__(&self) -> String {
        format!(
            "AdversarialTrace(outcome='{}', steps_used={}, mask_id={:?})",
            self.outcome(),
            self.inner.steps_used,
            self.mask_id()
        )
    }
}

/// Attacker state: substitute model, benign centroid, feature bounds, and
/// encoder, all fitted from the attacker's own flows.
#[pyclass(name = "Attacker")]
struct PyAttacker {
    substitute: models::Classifier,
    encoder: preprocess::Encoder,
    schema: flow::FeatureSchema,
    centroid: d2tc::BenignCentroid,
    config: d2tc::AttackConfig,
}

#[pymethods]
impl PyAttacker {
    /// `family` picks the substitute model family; `c` and `t_max` tune
    /// the perturbation schedule.
    #[new]
    #[pyo3(signature = (train_flows, family="rf", seed=0, c=0.1, t_max=10, target_class="benign"))]
    fn new(
        train_flows: Vec<PyFlowRecord>,
        family: &str,
        seed: u64,
        c: f64,
        t_max: usize,
        target_class: &str,
    ) -> PyResult<PyAttacker> {
        let flows: Vec<flow::FlowRecord> = train_flows.into_iter().map(|f| f.inner).collect();
        let encoder = preprocess::Encoder::fit(&flows).map_err(value_err)?;
        let schema = flow::fit_bounds(&flows).map_err(value_err)?;
        let benign: Vec<flow::FlowRecord> = flows
            .iter()
            .filter(|f| f.label == target_class)
            .cloned()
            .collect();
        let centroid = d2tc::benign_centroid(&benign).map_err(|_| {
            value_err(format!("no '{target_class}' flows to compute the centroid from"))
        })?;
        let encoded = encoder.encode_all(&flows);
        let substitute =
            models::train(&default_hyperparams(family)?, &encoded, seed).map_err(value_err)?;
        let config = d2tc::AttackConfig {
            rate_constant: c,
            max_steps: t_max,
            target_class: target_class.to_string(),
            ..d2tc::AttackConfig::default()
        };
        config.validate().map_err(value_err)?;
        Ok(PyAttacker {
            substitute,
            encoder,
            schema,
            centroid,
            config,
        })
    }

    fn craft(&self, flow: &PyFlowRecord) -> PyTrace {
        PyTrace {
            inner: d2tc::craft(
                &flow.inner,
                &self.substitute,
                &self.centroid,
                &self.config,
                &self.schema,
                &self.encoder,
            ),
        }
    }

    fn attack(&self, flows: Vec<PyFlowRecord>) -> Vec<PyTrace> {
        let flows: Vec<flow::FlowRecord> = flows.into_iter().map(|f| f.inner).collect();
        d2tc::attack_dataset(
            &flows,
            &self.substitute,
            &self.centroid,
            &self.config,
            &self.schema,
            &self.encoder,
        )
        .into_iter()
        .map(|inner| PyTrace { inner })
        .collect()
    }

    #[getter]
    fn centroid(&self) -> (f64, f64, f64) {
        (self.centroid.dur, self.centroid.spkts, self.centroid.sbytes)
    }
}

/// The fused per-feature adversarial filter.
#[pyclass(name = "Defense")]
struct PyDefense {
    ensemble: defense::DefenseEnsemble,
}

#[pymethods]
impl PyDefense {
    /// Builds the defense dataset from clean flows plus evaded traces,
    /// carves an evaluation slice for reliability weighting, and trains
    /// the 13 sub-detectors. `rule` is "bayesian" or "dempster_shafer".
    #[staticmethod]
    #[pyo3(signature = (clean_flows, traces, seed=0, rule="bayesian", train_fraction=0.8, benign_label="benign"))]
    fn train(
        clean_flows: Vec<PyFlowRecord>,
        traces: Vec<PyTrace>,
        seed: u64,
        rule: &str,
        train_fraction: f64,
        benign_label: &str,
    ) -> PyResult<PyDefense> {
        let rule = match rule {
            "bayesian" => fusion::FusionRule::Bayesian,
            "dempster_shafer" => fusion::FusionRule::DempsterShafer,
            other => return Err(value_err(format!("unknown fusion rule '{other}'"))),
        };
        let clean: Vec<flow::FlowRecord> = clean_flows.into_iter().map(|f| f.inner).collect();
        let traces: Vec<d2tc::AdversarialTrace> = traces.into_iter().map(|t| t.inner).collect();
        let dataset =
            defense::build_defense_dataset(&clean, &traces, benign_label).map_err(value_err)?;
        let (train_ds, eval_ds) = defense::split_defense(&dataset, train_fraction, seed);
        let detectors = defense::train_subdetectors(&train_ds, seed).map_err(value_err)?;
        let detectors = defense::calibrate_weights(detectors, &eval_ds);
        Ok(PyDefense {
            ensemble: defense::DefenseEnsemble::new(detectors, rule),
        })
    }

    /// `(p_adversarial, decision)` for one flow.
    fn filter(&self, flow: &PyFlowRecord) -> PyResult<(f64, String)> {
        let verdict = self.ensemble.filter(&flow.inner).map_err(runtime_err)?;
        Ok((verdict.p_adversarial, verdict.decision.name().to_string()))
    }

    /// Reliability weight per feature name.
    fn weights<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let dict = pyo3::types::PyDict::new(py);
        for detector in &self.ensemble.detectors {
            dict.set_item(detector.feature.name(), detector.weight)?;
        }
        Ok(dict.into_any())
    }
}

#[pyfunction]
fn fuse_bayesian(probs: Vec<(f64, f64)>, weights: Vec<f64>) -> PyResult<(f64, f64, String)> {
    if probs.len() != weights.len() {
        return Err(value_err("probs and weights must have equal length"));
    }
    let v = fusion::fuse_bayesian(&probs, &weights).map_err(value_err)?;
    Ok((v.p_adversarial, v.p_clean, v.decision.name().to_string()))
}

#[pyfunction]
fn fuse_dempster(probs: Vec<(f64, f64)>, weights: Vec<f64>) -> PyResult<(f64, f64, String)> {
    if probs.len() != weights.len() {
        return Err(value_err("probs and weights must have equal length"));
    }
    let v = fusion::fuse_dempster(&probs, &weights).map_err(value_err)?;
    Ok((v.p_adversarial, v.p_clean, v.decision.name().to_string()))
}

/// Dempster's rule over (m_adversarial, m_clean, m_omega) triples.
#[pyfunction]
fn ds_combine(m1: (f64, f64, f64), m2: (f64, f64, f64)) -> PyResult<(f64, f64, f64)> {
    let to_mass = |(a, c, o): (f64, f64, f64)| fusion::MassFunction {
        adversarial: a,
        clean: c,
        omega: o,
    };
    let combined = fusion::ds_combine(&to_mass(m1), &to_mass(m2)).map_err(value_err)?;
    Ok((combined.adversarial, combined.clean, combined.omega))
}

/// Full pipeline on the synthetic corpus: returns per-matrix mean
/// detection rates and the attack statistics. Writes reports to
/// `out_dir` when given.
#[pyfunction]
#[pyo3(signature = (seed=1, count_per_class=None, out_dir=None))]
fn run_experiment<'py>(
    py: Python<'py>,
    seed: u64,
    count_per_class: Option<usize>,
    out_dir: Option<String>,
) -> PyResult<Bound<'py, PyAny>> {
    let mut config = ExperimentConfig::desk_default();
    config.seed = seed;
    if let Some(count) = count_per_class {
        if let DatasetConfig::Synthetic { spec } = &mut config.dataset {
            for class in &mut spec.classes {
                class.count = count;
            }
        }
    }
    if let Some(dir) = &out_dir {
        config.output_dir = dir.into();
    }
    let attack = experiment::run_attack_experiment(&config).map_err(runtime_err)?;
    let defense = experiment::run_defense_experiment(&config, &attack).map_err(runtime_err)?;
    if out_dir.is_some() {
        evadeflow::report::emit_attack_report(&config, &attack, &config.output_dir)
            .map_err(runtime_err)?;
        evadeflow::report::emit_defense_report(&defense, &config.output_dir).map_err(runtime_err)?;
        evadeflow::report::emit_summary(&config, &attack, Some(&defense), &config.output_dir)
            .map_err(runtime_err)?;
    }

    let dict = pyo3::types::PyDict::new(py);
    dict.set_item("seed", seed)?;
    let evasion = pyo3::types::PyDict::new(py);
    for (family, stats) in &attack.stats {
        evasion.set_item(family.name(), stats.evasion_rate)?;
    }
    dict.set_item("evasion_rate", evasion)?;
    let matrices = pyo3::types::PyDict::new(py);
    for matrix in &defense.matrices {
        matrices.set_item(&matrix.label, matrix.grand_mean())?;
    }
    dict.set_item("mean_detection", matrices)?;
    let weights = pyo3::types::PyDict::new(py);
    for (feature, weight) in &defense.weights {
        weights.set_item(feature.name(), *weight)?;
    }
    dict.set_item("defense_weights", weights)?;
    dict.set_item("clean_passthrough_identical", defense.clean_passthrough_identical)?;
    Ok(dict.into_any())
}

#[pymodule]
fn evadeflow_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFlowRecord>()?;
    m.add_class::<PyFeatureSchema>()?;
    m.add_class::<PyNidsModel>()?;
    m.add_class::<PyTrace>()?;
    m.add_class::<PyAttacker>()?;
    m.add_class::<PyDefense>()?;
    m.add_function(wrap_pyfunction!(recompute_dependents, m)?)?;
    m.add_function(wrap_pyfunction!(fit_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(is_valid, m)?)?;
    m.add_function(wrap_pyfunction!(categorize_port, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(partition, m)?)?;
    m.add_function(wrap_pyfunction!(fuse_bayesian, m)?)?;
    m.add_function(wrap_pyfunction!(fuse_dempster, m)?)?;
    m.add_function(wrap_pyfunction!(ds_combine, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
