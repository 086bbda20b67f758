//! Flow records, the three-group feature taxonomy, and validity checks.
//!
//! A flow is described by 13 features. Three of them (`dur`, `spkts`,
//! `sbytes`) can be manipulated directly by a traffic generator, five are
//! recomputed from the others (`pkts`, `bytes`, `rate`, `srate`, `drate`),
//! and the remaining five cannot be altered without breaking the
//! conversation (`dpkts`, `dbytes`, `proto`, `sport`, `dport`).

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Floor applied to `dur` in rate computations so division stays defined.
pub const DUR_EPSILON: f64 = 1e-6;

/// Relative tolerance used when checking rate consistency.
pub const RATE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FlowError {
    #[error("dataset is empty")]
    EmptyDataset,
}

/// The 13 flow features, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Feature {
    Dur,
    Spkts,
    Sbytes,
    Dpkts,
    Dbytes,
    Pkts,
    Bytes,
    Rate,
    Srate,
    Drate,
    Proto,
    Sport,
    Dport,
}

impl Feature {
    pub const ALL: [Feature; 13] = [
        Feature::Dur,
        Feature::Spkts,
        Feature::Sbytes,
        Feature::Dpkts,
        Feature::Dbytes,
        Feature::Pkts,
        Feature::Bytes,
        Feature::Rate,
        Feature::Srate,
        Feature::Drate,
        Feature::Proto,
        Feature::Sport,
        Feature::Dport,
    ];

    /// Features a traffic generator can manipulate directly.
    pub const MODIFIABLE: [Feature; 3] = [Feature::Dur, Feature::Spkts, Feature::Sbytes];

    /// Features recomputed from the modifiable and non-modifiable groups.
    pub const DEPENDENT: [Feature; 5] = [
        Feature::Pkts,
        Feature::Bytes,
        Feature::Rate,
        Feature::Srate,
        Feature::Drate,
    ];

    /// Features outside the attacker's control.
    pub const NON_MODIFIABLE: [Feature; 5] = [
        Feature::Dpkts,
        Feature::Dbytes,
        Feature::Proto,
        Feature::Sport,
        Feature::Dport,
    ];

    /// Numeric features, i.e. everything except `proto` and the ports.
    pub const NUMERIC: [Feature; 10] = [
        Feature::Dur,
        Feature::Spkts,
        Feature::Sbytes,
        Feature::Dpkts,
        Feature::Dbytes,
        Feature::Pkts,
        Feature::Bytes,
        Feature::Rate,
        Feature::Srate,
        Feature::Drate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Feature::Dur => "dur",
            Feature::Spkts => "spkts",
            Feature::Sbytes => "sbytes",
            Feature::Dpkts => "dpkts",
            Feature::Dbytes => "dbytes",
            Feature::Pkts => "pkts",
            Feature::Bytes => "bytes",
            Feature::Rate => "rate",
            Feature::Srate => "srate",
            Feature::Drate => "drate",
            Feature::Proto => "proto",
            Feature::Sport => "sport",
            Feature::Dport => "dport",
        }
    }

    /// Position in [`Feature::ALL`].
    pub fn index(self) -> usize {
        Feature::ALL.iter().position(|f| *f == self).expect("feature listed")
    }

    pub fn is_numeric(self) -> bool {
        Feature::NUMERIC.contains(&self)
    }

    /// Index into the numeric feature block (0..10), if numeric.
    pub fn numeric_index(self) -> Option<usize> {
        Feature::NUMERIC.iter().position(|f| *f == self)
    }
}

/// One network flow with the 13 features plus class label.
///
/// Counts and byte totals are integral, durations and rates real. The
/// dependent fields are normally produced by [`recompute_dependents`];
/// nothing in the type itself stops an inconsistent record (ingested data
/// can be inconsistent), which is what [`is_valid`] checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub dur: f64,
    pub spkts: u64,
    pub sbytes: u64,
    pub dpkts: u64,
    pub dbytes: u64,
    pub pkts: u64,
    pub bytes: u64,
    pub rate: f64,
    pub srate: f64,
    pub drate: f64,
    pub proto: String,
    pub sport: u16,
    pub dport: u16,
    pub label: String,
}

impl FlowRecord {
    /// Builds a flow from the free fields, deriving the dependent ones.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        dur: f64,
        spkts: u64,
        sbytes: u64,
        dpkts: u64,
        dbytes: u64,
        proto: impl Into<String>,
        sport: u16,
        dport: u16,
        label: impl Into<String>,
    ) -> FlowRecord {
        let mut flow = FlowRecord {
            dur,
            spkts,
            sbytes,
            dpkts,
            dbytes,
            pkts: 0,
            bytes: 0,
            rate: 0.0,
            srate: 0.0,
            drate: 0.0,
            proto: proto.into(),
            sport,
            dport,
            label: label.into(),
        };
        flow.recompute();
        flow
    }

    /// Value of a numeric feature.
    pub fn numeric(&self, feature: Feature) -> f64 {
        match feature {
            Feature::Dur => self.dur,
            Feature::Spkts => self.spkts as f64,
            Feature::Sbytes => self.sbytes as f64,
            Feature::Dpkts => self.dpkts as f64,
            Feature::Dbytes => self.dbytes as f64,
            Feature::Pkts => self.pkts as f64,
            Feature::Bytes => self.bytes as f64,
            Feature::Rate => self.rate,
            Feature::Srate => self.srate,
            Feature::Drate => self.drate,
            Feature::Proto | Feature::Sport | Feature::Dport => {
                panic!("{} is not numeric", feature.name())
            }
        }
    }

    fn recompute(&mut self) {
        self.pkts = self.spkts + self.dpkts;
        self.bytes = self.sbytes + self.dbytes;
        let dur = effective_duration(self.dur);
        self.rate = self.pkts as f64 / dur;
        self.srate = self.spkts as f64 / dur;
        self.drate = self.dpkts as f64 / dur;
    }

    /// Whether the structural invariants hold: totals add up, rates match
    /// the duration-floored formulas within [`RATE_TOLERANCE`], and all
    /// numeric fields are finite and non-negative.
    pub fn is_consistent(&self) -> bool {
        if !self.dur.is_finite() || self.dur < 0.0 {
            return false;
        }
        if self.pkts != self.spkts + self.dpkts || self.bytes != self.sbytes + self.dbytes {
            return false;
        }
        let dur = effective_duration(self.dur);
        relative_eq(self.rate, self.pkts as f64 / dur)
            && relative_eq(self.srate, self.spkts as f64 / dur)
            && relative_eq(self.drate, self.dpkts as f64 / dur)
    }
}

fn relative_eq(a: f64, b: f64) -> bool {
    if !a.is_finite() || !b.is_finite() {
        return false;
    }
    if a == b {
        return true;
    }
    (a - b).abs() <= RATE_TOLERANCE * a.abs().max(b.abs())
}

/// `dur` floored to [`DUR_EPSILON`], the denominator used by every rate.
pub fn effective_duration(dur: f64) -> f64 {
    dur.max(DUR_EPSILON)
}

/// Returns a copy with `pkts`, `bytes`, `rate`, `srate`, `drate`
/// recomputed from the free fields; everything else is untouched.
pub fn recompute_dependents(flow: &FlowRecord) -> FlowRecord {
    let mut out = flow.clone();
    out.recompute();
    out
}

/// Closed interval for one numeric feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: f64,
    pub hi: f64,
}

impl Bounds {
    pub fn contains(&self, v: f64) -> bool {
        v.is_finite() && v >= self.lo && v <= self.hi
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.lo, self.hi)
    }
}

/// Per-feature valid ranges fitted from data, plus the fixed taxonomy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    bounds: [Bounds; 10],
}

impl FeatureSchema {
    pub fn bounds(&self, feature: Feature) -> Bounds {
        let idx = feature
            .numeric_index()
            .unwrap_or_else(|| panic!("{} has no bounds", feature.name()));
        self.bounds[idx]
    }
}

/// Fits `[min observed, max observed]` per numeric feature. Lower bounds
/// are clamped to zero and `dur`'s to [`DUR_EPSILON`].
pub fn fit_bounds(flows: &[FlowRecord]) -> Result<FeatureSchema, FlowError> {
    if flows.is_empty() {
        return Err(FlowError::EmptyDataset);
    }
    let mut bounds = [Bounds {
        lo: f64::INFINITY,
        hi: f64::NEG_INFINITY,
    }; 10];
    for flow in flows {
        for (idx, feature) in Feature::NUMERIC.iter().enumerate() {
            let v = flow.numeric(*feature);
            bounds[idx].lo = bounds[idx].lo.min(v);
            bounds[idx].hi = bounds[idx].hi.max(v);
        }
    }
    for (idx, feature) in Feature::NUMERIC.iter().enumerate() {
        let floor = if *feature == Feature::Dur { DUR_EPSILON } else { 0.0 };
        bounds[idx].lo = bounds[idx].lo.max(floor);
        bounds[idx].hi = bounds[idx].hi.max(bounds[idx].lo);
    }
    Ok(FeatureSchema { bounds })
}

/// True iff the structural invariants hold and every modifiable feature
/// lies within the schema's fitted range.
///
/// Only the modifiable group is range-checked: dependent features are
/// pinned by their formulas once the free fields are fixed, and the
/// non-modifiable group is carried over verbatim from source traffic, so
/// range-checking either would reject flows the generator cannot change.
pub fn is_valid(flow: &FlowRecord, schema: &FeatureSchema) -> bool {
    flow.is_consistent()
        && Feature::MODIFIABLE
            .iter()
            .all(|f| schema.bounds(*f).contains(flow.numeric(*f)))
}
