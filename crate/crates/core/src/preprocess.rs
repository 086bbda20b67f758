//! Dataset cleaning, min-max normalization, categorical encoding, and the
//! attacker/defender + train/test partitioning protocol.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::{recompute_dependents, Feature, FlowRecord};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PreprocessError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("port {0} outside [0, 65535]")]
    OutOfRange(i64),
    #[error("need at least 8 flows with 2 per class, got {flows} flows, smallest class {min_class}")]
    TooFewInstances { flows: usize, min_class: usize },
}

/// IANA port ranges used to bucket `sport`/`dport` before one-hot encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PortCategory {
    WellKnown,
    Registered,
    DynamicPrivate,
}

impl PortCategory {
    pub const COUNT: usize = 3;

    pub fn of(port: u16) -> PortCategory {
        match port {
            0..=1023 => PortCategory::WellKnown,
            1024..=49151 => PortCategory::Registered,
            _ => PortCategory::DynamicPrivate,
        }
    }

    pub fn index(self) -> usize {
        match self {
            PortCategory::WellKnown => 0,
            PortCategory::Registered => 1,
            PortCategory::DynamicPrivate => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PortCategory::WellKnown => "well_known",
            PortCategory::Registered => "registered",
            PortCategory::DynamicPrivate => "dynamic_private",
        }
    }
}

/// Buckets a raw port number, rejecting values outside the 16-bit range.
pub fn categorize_port(port: i64) -> Result<PortCategory, PreprocessError> {
    if !(0..=65535).contains(&port) {
        return Err(PreprocessError::OutOfRange(port));
    }
    Ok(PortCategory::of(port as u16))
}

/// Per-feature min/max fitted on training data only.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormalizationParams {
    mins: [f64; 10],
    maxs: [f64; 10],
}

impl NormalizationParams {
    pub fn min(&self, feature: Feature) -> f64 {
        self.mins[numeric_index(feature)]
    }

    pub fn max(&self, feature: Feature) -> f64 {
        self.maxs[numeric_index(feature)]
    }

    /// Width of the fitted range; zero for constant features.
    pub fn range(&self, feature: Feature) -> f64 {
        self.max(feature) - self.min(feature)
    }

    pub fn is_constant(&self, feature: Feature) -> bool {
        self.range(feature) == 0.0
    }

    /// `(v - min) / (max - min)`; constant features map to 0. Values
    /// outside the fitted range are NOT clamped, so test data may fall
    /// outside [0, 1].
    pub fn normalize(&self, feature: Feature, v: f64) -> f64 {
        let range = self.range(feature);
        if range == 0.0 {
            0.0
        } else {
            (v - self.min(feature)) / range
        }
    }

    pub fn denormalize(&self, feature: Feature, x: f64) -> f64 {
        self.min(feature) + x * self.range(feature)
    }
}

fn numeric_index(feature: Feature) -> usize {
    feature
        .numeric_index()
        .unwrap_or_else(|| panic!("{} is not numeric", feature.name()))
}

/// Fits the per-feature min/max scaler on training flows.
pub fn fit_normalizer(train: &[FlowRecord]) -> Result<NormalizationParams, PreprocessError> {
    if train.is_empty() {
        return Err(PreprocessError::EmptyDataset);
    }
    let mut mins = [f64::INFINITY; 10];
    let mut maxs = [f64::NEG_INFINITY; 10];
    for flow in train {
        for (idx, feature) in Feature::NUMERIC.iter().enumerate() {
            let v = flow.numeric(*feature);
            mins[idx] = mins[idx].min(v);
            maxs[idx] = maxs[idx].max(v);
        }
    }
    Ok(NormalizationParams { mins, maxs })
}

/// Protocol names seen in training, plus a reserved OTHER slot for
/// anything unseen at encode time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProtoVocab {
    protos: Vec<String>,
}

impl ProtoVocab {
    pub fn fit(train: &[FlowRecord]) -> ProtoVocab {
        let protos: BTreeSet<String> = train.iter().map(|f| f.proto.clone()).collect();
        ProtoVocab {
            protos: protos.into_iter().collect(),
        }
    }

    /// Slot for a protocol; unseen names land in the trailing OTHER slot.
    pub fn slot(&self, proto: &str) -> usize {
        self.protos
            .iter()
            .position(|p| p == proto)
            .unwrap_or(self.protos.len())
    }

    pub fn one_hot_len(&self) -> usize {
        self.protos.len() + 1
    }

    pub fn protos(&self) -> &[String] {
        &self.protos
    }
}

/// Dense model input: normalized numerics followed by one-hot blocks for
/// proto, sport category, and dport category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedInstance {
    pub features: Vec<f64>,
    pub label: String,
}

/// Normalizer and vocabulary bundled so one value pins the whole encoding.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Encoder {
    pub params: NormalizationParams,
    pub protos: ProtoVocab,
}

impl Encoder {
    pub fn fit(train: &[FlowRecord]) -> Result<Encoder, PreprocessError> {
        Ok(Encoder {
            params: fit_normalizer(train)?,
            protos: ProtoVocab::fit(train),
        })
    }

    pub fn dim(&self) -> usize {
        10 + self.protos.one_hot_len() + 2 * PortCategory::COUNT
    }

    pub fn encode(&self, flow: &FlowRecord) -> EncodedInstance {
        encode(flow, &self.params, &self.protos)
    }

    pub fn encode_all(&self, flows: &[FlowRecord]) -> Vec<EncodedInstance> {
        flows.iter().map(|f| self.encode(f)).collect()
    }
}

/// Encodes one flow: min-max-normalized numerics, then one-hot proto and
/// port-category blocks.
pub fn encode(flow: &FlowRecord, params: &NormalizationParams, vocab: &ProtoVocab) -> EncodedInstance {
    let mut features = Vec::with_capacity(10 + vocab.one_hot_len() + 2 * PortCategory::COUNT);
    for feature in Feature::NUMERIC {
        features.push(params.normalize(feature, flow.numeric(feature)));
    }
    let mut proto_block = vec![0.0; vocab.one_hot_len()];
    proto_block[vocab.slot(&flow.proto)] = 1.0;
    features.extend(proto_block);
    for port in [flow.sport, flow.dport] {
        let mut block = [0.0; PortCategory::COUNT];
        block[PortCategory::of(port).index()] = 1.0;
        features.extend(block);
    }
    EncodedInstance {
        features,
        label: flow.label.clone(),
    }
}

/// Output of [`clean`]: deduplicated, formula-consistent flows plus counts
/// of what was fixed.
#[derive(Debug, Clone, Default)]
pub struct CleanOutcome {
    pub flows: Vec<FlowRecord>,
    pub repaired: usize,
    pub duplicates_removed: usize,
}

#[derive(Hash, PartialEq, Eq)]
struct FlowKey {
    dur: u64,
    spkts: u64,
    sbytes: u64,
    dpkts: u64,
    dbytes: u64,
    pkts: u64,
    bytes: u64,
    rate: u64,
    srate: u64,
    drate: u64,
    proto: String,
    sport: u16,
    dport: u16,
    label: String,
}

impl FlowKey {
    fn of(flow: &FlowRecord) -> FlowKey {
        FlowKey {
            dur: flow.dur.to_bits(),
            spkts: flow.spkts,
            sbytes: flow.sbytes,
            dpkts: flow.dpkts,
            dbytes: flow.dbytes,
            pkts: flow.pkts,
            bytes: flow.bytes,
            rate: flow.rate.to_bits(),
            srate: flow.srate.to_bits(),
            drate: flow.drate.to_bits(),
            proto: flow.proto.clone(),
            sport: flow.sport,
            dport: flow.dport,
            label: flow.label.clone(),
        }
    }
}

/// Repairs dependent-feature mismatches by recomputation, then removes
/// exact duplicates (all 13 features and label equal), keeping the first
/// occurrence of each record.
pub fn clean(flows: Vec<FlowRecord>) -> CleanOutcome {
    let mut out = CleanOutcome::default();
    let mut seen: HashSet<FlowKey> = HashSet::with_capacity(flows.len());
    for flow in flows {
        let flow = if flow.is_consistent() {
            flow
        } else {
            out.repaired += 1;
            recompute_dependents(&flow)
        };
        if seen.insert(FlowKey::of(&flow)) {
            out.flows.push(flow);
        } else {
            out.duplicates_removed += 1;
        }
    }
    out
}

/// The four disjoint experiment quadrants.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartitionedData {
    pub defender_train: Vec<FlowRecord>,
    pub defender_test: Vec<FlowRecord>,
    pub attacker_train: Vec<FlowRecord>,
    pub attacker_test: Vec<FlowRecord>,
}

impl PartitionedData {
    pub fn quadrants(&self) -> [(&'static str, &Vec<FlowRecord>); 4] {
        [
            ("defender_train", &self.defender_train),
            ("defender_test", &self.defender_test),
            ("attacker_train", &self.attacker_train),
            ("attacker_test", &self.attacker_test),
        ]
    }
}

/// Splits flows into near-equal defender/attacker halves, each further
/// split 75:25 into train/test, stratified by class at both levels.
/// Deterministic for a given seed.
pub fn partition(flows: &[FlowRecord], seed: u64) -> Result<PartitionedData, PreprocessError> {
    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, flow) in flows.iter().enumerate() {
        by_class.entry(flow.label.as_str()).or_default().push(i);
    }
    let min_class = by_class.values().map(Vec::len).min().unwrap_or(0);
    if flows.len() < 8 || min_class < 2 {
        return Err(PreprocessError::TooFewInstances {
            flows: flows.len(),
            min_class,
        });
    }

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut defender: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    let mut attacker: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    let (mut def_total, mut att_total) = (0usize, 0usize);
    for (class, indices) in &mut by_class {
        indices.shuffle(&mut rng);
        // Odd classes donate the extra instance to whichever half trails,
        // keeping the overall halves within one instance of each other.
        let mut def_n = indices.len() / 2;
        if indices.len() % 2 == 1 && def_total <= att_total {
            def_n += 1;
        }
        def_total += def_n;
        att_total += indices.len() - def_n;
        defender.insert(class, indices[..def_n].to_vec());
        attacker.insert(class, indices[def_n..].to_vec());
    }

    let (defender_train, defender_test) = split_half(flows, &defender);
    let (attacker_train, attacker_test) = split_half(flows, &attacker);
    Ok(PartitionedData {
        defender_train,
        defender_test,
        attacker_train,
        attacker_test,
    })
}

/// 75:25 stratified split of one half. Largest-remainder allocation keeps
/// the overall train count within one instance of 0.75n while every class
/// with at least two instances appears in both parts.
fn split_half(
    flows: &[FlowRecord],
    half: &BTreeMap<&str, Vec<usize>>,
) -> (Vec<FlowRecord>, Vec<FlowRecord>) {
    let total: usize = half.values().map(Vec::len).sum();
    let target_train = (0.75 * total as f64).round() as usize;

    let mut alloc: BTreeMap<&str, usize> = BTreeMap::new();
    let mut fractions: Vec<(&str, f64)> = Vec::new();
    for (class, indices) in half {
        let exact = 0.75 * indices.len() as f64;
        alloc.insert(class, exact.floor() as usize);
        fractions.push((class, exact.fract()));
    }
    let mut deficit = target_train.saturating_sub(alloc.values().sum::<usize>());
    fractions.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(b.0)));
    for (class, _) in &fractions {
        if deficit == 0 {
            break;
        }
        *alloc.get_mut(class).unwrap() += 1;
        deficit -= 1;
    }
    // Guarantee class presence in both parts when the class has >= 2.
    for (class, indices) in half {
        let n = indices.len();
        let a = alloc.get_mut(class).unwrap();
        if n >= 2 {
            *a = (*a).clamp(1, n - 1);
        } else {
            *a = n; // a singleton goes to train
        }
    }
    // Nudge the total back toward the target within the presence clamps.
    loop {
        let current: usize = alloc.values().sum();
        if current == target_train {
            break;
        }
        let grow = current < target_train;
        let mut adjusted = false;
        for (class, indices) in half {
            let a = alloc.get_mut(class).unwrap();
            let n = indices.len();
            if grow && *a < n.saturating_sub(1) {
                *a += 1;
                adjusted = true;
                break;
            }
            if !grow && *a > 1 {
                *a -= 1;
                adjusted = true;
                break;
            }
        }
        if !adjusted {
            break; // clamps leave no slack; stay within +/-1 best effort
        }
    }

    let mut train = Vec::new();
    let mut test = Vec::new();
    for (class, indices) in half {
        let n_train = alloc[class];
        for (pos, idx) in indices.iter().enumerate() {
            if pos < n_train {
                train.push(flows[*idx].clone());
            } else {
                test.push(flows[*idx].clone());
            }
        }
    }
    (train, test)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::FlowRecord;

    fn flow(dur: f64, spkts: u64, label: &str) -> FlowRecord {
        FlowRecord::new(dur, spkts, spkts * 100, 4, 400, "tcp", 5000, 80, label)
    }

    #[test]
    fn port_categories_match_published_ranges() {
        assert_eq!(categorize_port(80).unwrap(), PortCategory::WellKnown);
        assert_eq!(categorize_port(0).unwrap(), PortCategory::WellKnown);
        assert_eq!(categorize_port(1023).unwrap(), PortCategory::WellKnown);
        assert_eq!(categorize_port(1024).unwrap(), PortCategory::Registered);
        assert_eq!(categorize_port(49151).unwrap(), PortCategory::Registered);
        assert_eq!(categorize_port(49152).unwrap(), PortCategory::DynamicPrivate);
        assert_eq!(categorize_port(65535).unwrap(), PortCategory::DynamicPrivate);
    }

    #[test]
    fn port_out_of_range_is_error() {
        assert_eq!(categorize_port(-1), Err(PreprocessError::OutOfRange(-1)));
        assert_eq!(categorize_port(65536), Err(PreprocessError::OutOfRange(65536)));
    }

    #[test]
    fn normalizer_midpoint() {
        let flows: Vec<FlowRecord> = [2.0, 4.0, 6.0].iter().map(|d| flow(*d, 5, "benign")).collect();
        let params = fit_normalizer(&flows).unwrap();
        assert_eq!(params.min(Feature::Dur), 2.0);
        assert_eq!(params.max(Feature::Dur), 6.0);
        assert_eq!(params.normalize(Feature::Dur, 4.0), 0.5);
    }

    #[test]
    fn constant_feature_normalizes_to_zero() {
        let flows = vec![flow(5.0, 5, "benign"), flow(5.0, 7, "benign")];
        let params = fit_normalizer(&flows).unwrap();
        assert!(params.is_constant(Feature::Dur));
        assert_eq!(params.normalize(Feature::Dur, 5.0), 0.0);
    }

    #[test]
    fn normalizer_matches_scan_oracle() {
        let flows: Vec<FlowRecord> = (0..200)
            .map(|i| flow(0.5 + (i % 13) as f64, (i % 29) as u64, "benign"))
            .collect();
        let params = fit_normalizer(&flows).unwrap();
        for feature in Feature::NUMERIC {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for f in &flows {
                lo = lo.min(f.numeric(feature));
                hi = hi.max(f.numeric(feature));
            }
            assert_eq!(params.min(feature), lo);
            assert_eq!(params.max(feature), hi);
        }
    }

    #[test]
    fn normalizer_empty_is_error() {
        assert_eq!(fit_normalizer(&[]).unwrap_err(), PreprocessError::EmptyDataset);
    }

    #[test]
    fn encode_training_min_gives_zero_numeric_block() {
        let flows = vec![flow(1.0, 2, "benign"), flow(3.0, 8, "benign")];
        let encoder = Encoder::fit(&flows).unwrap();
        let lows = FlowRecord::new(1.0, 2, 200, 4, 400, "tcp", 5000, 80, "benign");
        let lows = FlowRecord {
            rate: flows.iter().map(|f| f.rate).fold(f64::INFINITY, f64::min),
            srate: flows.iter().map(|f| f.srate).fold(f64::INFINITY, f64::min),
            drate: flows.iter().map(|f| f.drate).fold(f64::INFINITY, f64::min),
            ..lows
        };
        let enc = encoder.encode(&lows);
        for (i, v) in enc.features[..10].iter().enumerate() {
            assert!(
                v.abs() < 1e-12,
                "numeric slot {i} should be 0 at training minima, got {v}"
            );
        }
    }

    #[test]
    fn encode_proto_one_hot() {
        let flows = vec![
            flow(1.0, 2, "benign"),
            FlowRecord::new(1.0, 2, 200, 4, 400, "udp", 5000, 80, "benign"),
        ];
        let encoder = Encoder::fit(&flows).unwrap();
        assert_eq!(encoder.protos.protos(), ["tcp", "udp"]);
        let enc = encoder.encode(&flows[0]);
        assert_eq!(&enc.features[10..13], &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn encode_unseen_proto_maps_to_other() {
        let flows = vec![flow(1.0, 2, "benign"), flow(2.0, 3, "benign")];
        let encoder = Encoder::fit(&flows).unwrap();
        let odd = FlowRecord::new(1.0, 2, 200, 4, 400, "icmpv6", 5000, 80, "benign");
        let enc = encoder.encode(&odd);
        // vocab = {tcp}; block is [tcp, OTHER]
        assert_eq!(&enc.features[10..12], &[0.0, 1.0]);
    }

    #[test]
    fn one_hot_blocks_sum_to_one() {
        let flows: Vec<FlowRecord> = (0..20)
            .map(|i| {
                FlowRecord::new(
                    1.0 + i as f64,
                    i as u64,
                    100,
                    4,
                    400,
                    if i % 2 == 0 { "tcp" } else { "udp" },
                    (i * 4375) as u16,
                    (i * 331) as u16,
                    "benign",
                )
            })
            .collect();
        let encoder = Encoder::fit(&flows).unwrap();
        for f in &flows {
            let enc = encoder.encode(f);
            let p = encoder.protos.one_hot_len();
            let proto: f64 = enc.features[10..10 + p].iter().sum();
            let sport: f64 = enc.features[10 + p..13 + p].iter().sum();
            let dport: f64 = enc.features[13 + p..16 + p].iter().sum();
            assert_eq!((proto, sport, dport), (1.0, 1.0, 1.0));
        }
    }

    #[test]
    fn clean_removes_exact_duplicates() {
        let f = flow(1.0, 2, "benign");
        let g = flow(2.0, 3, "dos");
        let out = clean(vec![f.clone(), f.clone(), g.clone()]);
        assert_eq!(out.flows, vec![f, g]);
        assert_eq!(out.duplicates_removed, 1);
        assert_eq!(out.repaired, 0);
    }

    #[test]
    fn clean_repairs_broken_totals() {
        let mut f = flow(1.0, 10, "dos");
        f.dpkts = 5;
        f.pkts = 99;
        let out = clean(vec![f]);
        assert_eq!(out.repaired, 1);
        assert_eq!(out.flows[0].pkts, 15);
        assert!(out.flows[0].is_consistent());
    }

    #[test]
    fn clean_count_matches_hash_set_oracle() {
        let mut flows = Vec::new();
        for i in 0..900 {
            flows.push(flow(0.1 * (i % 450) as f64 + 0.1, (i % 37) as u64, "benign"));
        }
        for i in 0..100 {
            flows.push(flow(0.1 * (i % 450) as f64 + 0.1, (i % 37) as u64, "benign"));
        }
        let mut set = HashSet::new();
        let unique = flows.iter().filter(|f| set.insert(FlowKey::of(f))).count();
        let out = clean(flows.clone());
        assert_eq!(out.flows.len(), unique);
        assert_eq!(out.duplicates_removed, flows.len() - unique);
    }

    fn labelled_set(per_class: &[(&str, usize)]) -> Vec<FlowRecord> {
        let mut flows = Vec::new();
        for (label, n) in per_class {
            for i in 0..*n {
                flows.push(flow(1.0 + i as f64, i as u64, label));
            }
        }
        flows
    }

    #[test]
    fn partition_smallest_case() {
        let flows = labelled_set(&[("benign", 4), ("dos", 4)]);
        let parts = partition(&flows, 7).unwrap();
        for (name, quadrant) in parts.quadrants() {
            assert_eq!(quadrant.len(), 2, "{name}");
            let classes: BTreeSet<&str> = quadrant.iter().map(|f| f.label.as_str()).collect();
            assert_eq!(classes.len(), 2, "{name} should hold both classes");
        }
    }

    #[test]
    fn partition_is_deterministic() {
        let flows = labelled_set(&[("benign", 30), ("dos", 20), ("scan", 11)]);
        let a = partition(&flows, 99).unwrap();
        let b = partition(&flows, 99).unwrap();
        for ((_, qa), (_, qb)) in a.quadrants().iter().zip(b.quadrants().iter()) {
            assert_eq!(qa, qb);
        }
    }

    #[test]
    fn partition_too_few_is_error() {
        let flows = labelled_set(&[("benign", 4), ("dos", 1)]);
        assert!(matches!(
            partition(&flows, 1),
            Err(PreprocessError::TooFewInstances { .. })
        ));
    }

    #[test]
    fn partition_class_proportions_match_counting_oracle() {
        let flows = labelled_set(&[("benign", 4000), ("ddos", 2500), ("dos", 2000), ("scan", 1500)]);
        let parts = partition(&flows, 3).unwrap();
        let total = flows.len() as f64;
        for (name, quadrant) in parts.quadrants() {
            for class in ["benign", "ddos", "dos", "scan"] {
                let global = flows.iter().filter(|f| f.label == class).count() as f64 / total;
                let local = quadrant.iter().filter(|f| f.label == class).count() as f64
                    / quadrant.len() as f64;
                assert!(
                    (local - global).abs() <= 0.02,
                    "{name}/{class}: {local} vs {global}"
                );
            }
        }
        let def = parts.defender_train.len() + parts.defender_test.len();
        let att = parts.attacker_train.len() + parts.attacker_test.len();
        assert!(def.abs_diff(att) <= 1);
        for (train, test) in [
            (&parts.defender_train, &parts.defender_test),
            (&parts.attacker_train, &parts.attacker_test),
        ] {
            let half = train.len() + test.len();
            let target = (0.75 * half as f64).round() as usize;
            assert!(train.len().abs_diff(target) <= 1);
        }
    }

    #[test]
    fn normalize_denormalize_roundtrip() {
        let flows: Vec<FlowRecord> = (0..50).map(|i| flow(0.3 + i as f64 * 0.7, i as u64, "b")).collect();
        let params = fit_normalizer(&flows).unwrap();
        for f in &flows {
            for feature in Feature::NUMERIC {
                if params.is_constant(feature) {
                    continue;
                }
                let v = f.numeric(feature);
                let back = params.denormalize(feature, params.normalize(feature, v));
                let scale = v.abs().max(1.0);
                assert!((back - v).abs() <= 1e-12 * scale, "{}: {back} vs {v}", feature.name());
            }
        }
    }
}
