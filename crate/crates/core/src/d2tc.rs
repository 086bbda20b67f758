//! Distance-to-target-center adversarial traffic generation.
//!
//! A malicious flow is pushed toward the benign-class centroid along its
//! three modifiable features. The step at iteration `t` has magnitude
//! `c * t * m` per masked feature, where `m` is the Euclidean distance
//! between the flow and the centroid in min-max-normalized space; each
//! step is taken from the ORIGINAL flow, not the previous iterate. A
//! seven-mask sweep (single features first, then pairs, then all three)
//! finds the smallest change that the substitute model classifies as the
//! target class, and every candidate is projected back into the fitted
//! feature bounds with dependent features recomputed.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::flow::{recompute_dependents, Feature, FeatureSchema, FlowError, FlowRecord};
use crate::models::ProbModel;
use crate::preprocess::{Encoder, NormalizationParams};

/// Selector over the modifiable features: bit 0 = dur, bit 1 = spkts,
/// bit 2 = sbytes. The id-to-bits mapping is fixed:
///
/// | id | bits | features              |
/// |----|------|-----------------------|
/// | 1  | 001  | dur                   |
/// | 2  | 010  | spkts                 |
/// | 3  | 100  | sbytes                |
/// | 4  | 011  | dur, spkts            |
/// | 5  | 101  | dur, sbytes           |
/// | 6  | 110  | spkts, sbytes         |
/// | 7  | 111  | dur, spkts, sbytes    |
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Mask {
    id: u8,
}

const MASK_BITS: [u8; 7] = [0b001, 0b010, 0b100, 0b011, 0b101, 0b110, 0b111];

impl Mask {
    pub fn from_id(id: u8) -> Result<Mask, String> {
        if (1..=7).contains(&id) {
            Ok(Mask { id })
        } else {
            Err(format!("mask id {id} outside 1..=7"))
        }
    }

    pub fn id(self) -> u8 {
        self.id
    }

    pub fn bits(self) -> u8 {
        MASK_BITS[self.id as usize - 1]
    }

    /// Mask bit for each of (dur, spkts, sbytes).
    pub fn selects(self) -> [bool; 3] {
        let bits = self.bits();
        [bits & 0b001 != 0, bits & 0b010 != 0, bits & 0b100 != 0]
    }

    /// All seven masks in sweep order: single features, pairs, then all.
    pub fn sweep_order() -> Vec<Mask> {
        (1..=7).map(|id| Mask { id }).collect()
    }
}

impl TryFrom<u8> for Mask {
    type Error = String;
    fn try_from(id: u8) -> Result<Mask, String> {
        Mask::from_id(id)
    }
}

impl From<Mask> for u8 {
    fn from(mask: Mask) -> u8 {
        mask.id
    }
}

/// Attack parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackConfig {
    /// Perturbation rate constant `c`.
    pub rate_constant: f64,
    /// Step budget `t_max`.
    pub max_steps: usize,
    /// Mask sweep order; must be a permutation of the seven masks.
    pub mask_order: Vec<Mask>,
    /// Class the attack steers toward.
    pub target_class: String,
    /// Study-only variant that applies the step sizes cumulatively
    /// (effective magnitude `c * t(t+1)/2 * m`); no correctness claims.
    pub cumulative: bool,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            rate_constant: 0.1,
            max_steps: 10,
            mask_order: Mask::sweep_order(),
            target_class: "benign".to_string(),
            cumulative: false,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.rate_constant > 0.0 && self.rate_constant.is_finite()) {
            return Err("rate_constant must be positive".to_string());
        }
        if self.max_steps == 0 {
            return Err("max_steps must be >= 1".to_string());
        }
        let mut ids: Vec<u8> = self.mask_order.iter().map(|m| m.id()).collect();
        ids.sort_unstable();
        if ids != [1, 2, 3, 4, 5, 6, 7] {
            return Err("mask_order must be a permutation of the seven masks".to_string());
        }
        Ok(())
    }
}

/// Mean of each modifiable feature over benign flows, in raw units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenignCentroid {
    pub dur: f64,
    pub spkts: f64,
    pub sbytes: f64,
}

impl BenignCentroid {
    pub fn as_array(&self) -> [f64; 3] {
        [self.dur, self.spkts, self.sbytes]
    }
}

/// Arithmetic mean per modifiable feature across benign flows.
pub fn benign_centroid(benign: &[FlowRecord]) -> Result<BenignCentroid, FlowError> {
    if benign.is_empty() {
        return Err(FlowError::EmptyDataset);
    }
    let n = benign.len() as f64;
    let sum = benign.iter().fold([0.0f64; 3], |mut acc, f| {
        acc[0] += f.dur;
        acc[1] += f.spkts as f64;
        acc[2] += f.sbytes as f64;
        acc
    });
    Ok(BenignCentroid {
        dur: sum[0] / n,
        spkts: sum[1] / n,
        sbytes: sum[2] / n,
    })
}

fn modifiables(flow: &FlowRecord) -> [f64; 3] {
    [flow.dur, flow.spkts as f64, flow.sbytes as f64]
}

fn normalize3(values: [f64; 3], norm: &NormalizationParams) -> [f64; 3] {
    [
        norm.normalize(Feature::Dur, values[0]),
        norm.normalize(Feature::Spkts, values[1]),
        norm.normalize(Feature::Sbytes, values[2]),
    ]
}

fn sign(d: f64) -> f64 {
    if d > 0.0 {
        1.0
    } else if d < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Euclidean distance between a flow and the centroid over the modifiable
/// features, computed in normalized space.
pub fn centroid_distance(x0: &FlowRecord, centroid: &BenignCentroid, norm: &NormalizationParams) -> f64 {
    let a = normalize3(modifiables(x0), norm);
    let b = normalize3(centroid.as_array(), norm);
    a.iter()
        .zip(&b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// The un-projected step in normalized space: every masked coordinate
/// moves by the same magnitude `c * t * m` toward its centroid value
/// (sign of a zero gap is zero). Exposed for trajectory analysis.
pub fn normalized_step(
    x0: [f64; 3],
    centroid: [f64; 3],
    t: usize,
    mask: Mask,
    rate_constant: f64,
    cumulative: bool,
) -> [f64; 3] {
    let m = x0
        .iter()
        .zip(&centroid)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let steps = if cumulative {
        (t * (t + 1) / 2) as f64
    } else {
        t as f64
    };
    let epsilon = rate_constant * steps * m;
    let selected = mask.selects();
    let mut out = x0;
    for i in 0..3 {
        if selected[i] {
            out[i] = x0[i] + sign(centroid[i] - x0[i]) * epsilon;
        }
    }
    out
}

/// Raw-space candidate values for (dur, spkts, sbytes) before projection:
/// the normalized step is mapped back through each feature's fitted range.
pub fn step_candidates(
    x0: &FlowRecord,
    centroid: &BenignCentroid,
    t: usize,
    mask: Mask,
    config: &AttackConfig,
    norm: &NormalizationParams,
) -> [f64; 3] {
    let raw = modifiables(x0);
    let x0_n = normalize3(raw, norm);
    let c_n = normalize3(centroid.as_array(), norm);
    let stepped = normalized_step(x0_n, c_n, t, mask, config.rate_constant, config.cumulative);
    let ranges = [
        norm.range(Feature::Dur),
        norm.range(Feature::Spkts),
        norm.range(Feature::Sbytes),
    ];
    let mut out = raw;
    for i in 0..3 {
        out[i] = raw[i] + (stepped[i] - x0_n[i]) * ranges[i];
    }
    out
}

/// Projects candidate modifiable values into the schema bounds, rounds the
/// count features half-away-from-zero, and recomputes dependents. The
/// non-modifiable fields come from `x0` verbatim.
pub fn project(x0: &FlowRecord, candidates: [f64; 3], schema: &FeatureSchema) -> FlowRecord {
    let dur = schema.bounds(Feature::Dur).clamp(candidates[0]);
    let spkts = schema.bounds(Feature::Spkts).clamp(candidates[1]).round() as u64;
    let sbytes = schema.bounds(Feature::Sbytes).clamp(candidates[2]).round() as u64;
    recompute_dependents(&FlowRecord {
        dur,
        spkts,
        sbytes,
        ..x0.clone()
    })
}

/// One full perturbation: step from the original flow, then project.
pub fn perturb(
    x0: &FlowRecord,
    centroid: &BenignCentroid,
    t: usize,
    mask: Mask,
    config: &AttackConfig,
    schema: &FeatureSchema,
    norm: &NormalizationParams,
) -> FlowRecord {
    let candidates = step_candidates(x0, centroid, t, mask, config, norm);
    project(x0, candidates, schema)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Evaded,
    Failed,
}

/// Result of one crafting run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdversarialTrace {
    pub original: FlowRecord,
    #[serde(rename = "final")]
    pub final_flow: FlowRecord,
    pub outcome: Outcome,
    /// Step index that produced the evasion; 0 when the substitute already
    /// classified the original as the target class.
    pub steps_used: usize,
    pub mask_used: Option<Mask>,
    /// final - original for (dur, spkts, sbytes), raw units.
    pub delta: [f64; 3],
    /// Substitute evaluations spent on perturbed candidates.
    pub probes: usize,
    /// Wall-clock crafting time; excluded from determinism guarantees.
    #[serde(skip)]
    pub gen_seconds: f64,
}

impl AdversarialTrace {
    pub fn evaded(&self) -> bool {
        self.outcome == Outcome::Evaded
    }
}

fn delta_of(final_flow: &FlowRecord, original: &FlowRecord) -> [f64; 3] {
    [
        final_flow.dur - original.dur,
        final_flow.spkts as f64 - original.spkts as f64,
        final_flow.sbytes as f64 - original.sbytes as f64,
    ]
}

/// Iterative crafting loop: step budget outside, mask sweep inside, first
/// candidate the substitute labels as the target class wins. A flow the
/// substitute already mislabels short-circuits to `Evaded` with zero
/// steps. Deterministic given its inputs.
pub fn craft(
    x: &FlowRecord,
    substitute: &dyn ProbModel,
    centroid: &BenignCentroid,
    config: &AttackConfig,
    schema: &FeatureSchema,
    encoder: &Encoder,
) -> AdversarialTrace {
    let start = Instant::now();
    let target = config.target_class.as_str();
    if substitute.predict_label(&encoder.encode(x).features) == target {
        return AdversarialTrace {
            original: x.clone(),
            final_flow: x.clone(),
            outcome: Outcome::Evaded,
            steps_used: 0,
            mask_used: None,
            delta: [0.0; 3],
            probes: 0,
            gen_seconds: start.elapsed().as_secs_f64(),
        };
    }

    let mut probes = 0;
    for t in 1..=config.max_steps {
        for mask in &config.mask_order {
            let candidate = perturb(x, centroid, t, *mask, config, schema, &encoder.params);
            probes += 1;
            if substitute.predict_label(&encoder.encode(&candidate).features) == target {
                let delta = delta_of(&candidate, x);
                return AdversarialTrace {
                    original: x.clone(),
                    final_flow: candidate,
                    outcome: Outcome::Evaded,
                    steps_used: t,
                    mask_used: Some(*mask),
                    delta,
                    probes,
                    gen_seconds: start.elapsed().as_secs_f64(),
                };
            }
        }
    }

    AdversarialTrace {
        original: x.clone(),
        final_flow: x.clone(),
        outcome: Outcome::Failed,
        steps_used: config.max_steps,
        mask_used: None,
        delta: [0.0; 3],
        probes,
        gen_seconds: start.elapsed().as_secs_f64(),
    }
}

/// Crafts one trace per input flow, order-preserving.
pub fn attack_dataset(
    malicious: &[FlowRecord],
    substitute: &dyn ProbModel,
    centroid: &BenignCentroid,
    config: &AttackConfig,
    schema: &FeatureSchema,
    encoder: &Encoder,
) -> Vec<AdversarialTrace> {
    malicious
        .iter()
        .map(|x| craft(x, substitute, centroid, config, schema, encoder))
        .collect()
}

/// Aggregates computed exactly from a batch of traces.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackStats {
    pub total: usize,
    pub evaded: usize,
    pub failed: usize,
    pub evasion_rate: f64,
    /// Mask id -> evaded count; all seven ids always present.
    pub mask_usage: BTreeMap<u8, usize>,
    /// Index = steps used by an evaded trace (0..=max_steps).
    pub step_histogram: Vec<usize>,
    /// Mean |final - original| per modifiable feature, over evaded traces.
    pub mean_abs_delta: [f64; 3],
    /// Mean wall-clock crafting time over all traces.
    pub mean_gen_seconds: f64,
}

impl AttackStats {
    pub fn from_traces(traces: &[AdversarialTrace], max_steps: usize) -> AttackStats {
        let mut mask_usage: BTreeMap<u8, usize> = (1..=7).map(|id| (id, 0)).collect();
        let mut step_histogram = vec![0usize; max_steps + 1];
        let mut mean_abs_delta = [0.0f64; 3];
        let mut evaded = 0usize;
        let mut time_sum = 0.0;
        for trace in traces {
            time_sum += trace.gen_seconds;
            if trace.evaded() {
                evaded += 1;
                if let Some(mask) = trace.mask_used {
                    *mask_usage.get_mut(&mask.id()).expect("mask id in 1..=7") += 1;
                }
                if trace.steps_used < step_histogram.len() {
                    step_histogram[trace.steps_used] += 1;
                }
                for (acc, delta) in mean_abs_delta.iter_mut().zip(trace.delta) {
                    *acc += delta.abs();
                }
            }
        }
        if evaded > 0 {
            for d in &mut mean_abs_delta {
                *d /= evaded as f64;
            }
        }
        AttackStats {
            total: traces.len(),
            evaded,
            failed: traces.len() - evaded,
            evasion_rate: if traces.is_empty() {
                0.0
            } else {
                evaded as f64 / traces.len() as f64
            },
            mask_usage,
            step_histogram,
            mean_abs_delta,
            mean_gen_seconds: if traces.is_empty() {
                0.0
            } else {
                time_sum / traces.len() as f64
            },
        }
    }
}
