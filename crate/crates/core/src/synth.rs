//! Synthetic flow corpora for self-contained experiments.
//!
//! Each class draws its five free numeric features from per-class
//! location/scale distributions; dependent features are recomputed, so
//! every generated flow is structurally consistent. The desk-scale
//! default places the four attack classes at evenly spaced offsets from
//! benign along all three modifiable features (with matching normalized
//! gaps), while the non-modifiable features share one distribution across
//! classes.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, LogNormal, Normal, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::FlowRecord;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
}

/// Location/scale sampler for one feature. `mean` and `sd` are in raw
/// feature units (the log-normal parameters are derived internally), so a
/// spec reads as "this feature averages X with spread Y".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureDist {
    LogNormal { mean: f64, sd: f64 },
    Normal { mean: f64, sd: f64 },
    Poisson { mean: f64 },
}

impl FeatureDist {
    pub fn mean(&self) -> f64 {
        match self {
            FeatureDist::LogNormal { mean, .. } | FeatureDist::Normal { mean, .. } => *mean,
            FeatureDist::Poisson { mean } => *mean,
        }
    }

    /// Standard deviation implied by the parameters.
    pub fn sd(&self) -> f64 {
        match self {
            FeatureDist::LogNormal { sd, .. } | FeatureDist::Normal { sd, .. } => *sd,
            FeatureDist::Poisson { mean } => mean.sqrt(),
        }
    }

    fn validate(&self, what: &str) -> Result<(), SynthError> {
        let ok = match self {
            FeatureDist::LogNormal { mean, sd } | FeatureDist::Normal { mean, sd } => {
                *mean > 0.0 && *sd > 0.0 && mean.is_finite() && sd.is_finite()
            }
            FeatureDist::Poisson { mean } => *mean > 0.0 && mean.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(SynthError::InvalidSpec(format!(
                "{what}: location must be positive and scale > 0"
            )))
        }
    }

    fn sample(&self, rng: &mut ChaCha20Rng) -> f64 {
        match self {
            FeatureDist::LogNormal { mean, sd } => {
                let cv2 = (sd / mean).powi(2);
                let sigma2 = (1.0 + cv2).ln();
                let mu = mean.ln() - sigma2 / 2.0;
                LogNormal::new(mu, sigma2.sqrt()).expect("validated").sample(rng)
            }
            FeatureDist::Normal { mean, sd } => {
                Normal::new(*mean, *sd).expect("validated").sample(rng).max(0.0)
            }
            FeatureDist::Poisson { mean } => Poisson::new(*mean).expect("validated").sample(rng),
        }
    }
}

/// Sampling weights over the three port categories.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PortProfile {
    pub well_known: f64,
    pub registered: f64,
    pub dynamic_private: f64,
}

impl PortProfile {
    fn validate(&self, what: &str) -> Result<(), SynthError> {
        let weights = [self.well_known, self.registered, self.dynamic_private];
        if weights.iter().all(|w| *w >= 0.0 && w.is_finite()) && weights.iter().sum::<f64>() > 0.0 {
            Ok(())
        } else {
            Err(SynthError::InvalidSpec(format!(
                "{what}: port weights must be non-negative with positive sum"
            )))
        }
    }

    fn sample(&self, rng: &mut ChaCha20Rng) -> u16 {
        let total = self.well_known + self.registered + self.dynamic_private;
        let draw = rng.random::<f64>() * total;
        if draw < self.well_known {
            rng.random_range(0..=1023)
        } else if draw < self.well_known + self.registered {
            rng.random_range(1024..=49151)
        } else {
            rng.random_range(49152..=65535)
        }
    }
}

/// Generative parameters for one traffic class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub name: String,
    pub count: usize,
    pub dur: FeatureDist,
    pub spkts: FeatureDist,
    pub sbytes: FeatureDist,
    pub dpkts: FeatureDist,
    pub dbytes: FeatureDist,
    /// Protocol name -> sampling weight.
    pub protocols: BTreeMap<String, f64>,
    pub sport: PortProfile,
    pub dport: PortProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub classes: Vec<ClassSpec>,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.classes.is_empty() {
            return Err(SynthError::InvalidSpec("no classes".to_string()));
        }
        for class in &self.classes {
            if class.count < 2 {
                return Err(SynthError::InvalidSpec(format!(
                    "class {}: count must be >= 2",
                    class.name
                )));
            }
            for (dist, what) in [
                (&class.dur, "dur"),
                (&class.spkts, "spkts"),
                (&class.sbytes, "sbytes"),
                (&class.dpkts, "dpkts"),
                (&class.dbytes, "dbytes"),
            ] {
                dist.validate(&format!("class {} {what}", class.name))?;
            }
            if class.protocols.is_empty()
                || class.protocols.values().any(|w| *w < 0.0 || !w.is_finite())
                || class.protocols.values().sum::<f64>() <= 0.0
            {
                return Err(SynthError::InvalidSpec(format!(
                    "class {}: protocol weights must be non-negative with positive sum",
                    class.name
                )));
            }
            class.sport.validate(&format!("class {} sport", class.name))?;
            class.dport.validate(&format!("class {} dport", class.name))?;
        }
        Ok(())
    }

    pub fn total_count(&self) -> usize {
        self.classes.iter().map(|c| c.count).sum()
    }

    /// Desk-scale corpus: benign plus four attack classes at evenly
    /// spaced offsets along (dur, spkts, sbytes), with matching
    /// normalized gaps per axis. The non-modifiable features share one
    /// class-independent distribution; protocol and port categories are
    /// held fixed so Euclidean distance is carried by the numeric block.
    /// Separation is calibrated so every model family reaches macro-F1
    /// 0.95 on clean test data. 400 flows per class.
    pub fn desk_default() -> SyntheticSpec {
        fn class(name: &str, count: usize, offset: f64) -> ClassSpec {
            let mut protocols = BTreeMap::new();
            protocols.insert("tcp".to_string(), 1.0);
            ClassSpec {
                name: name.to_string(),
                count,
                dur: FeatureDist::LogNormal {
                    mean: 2.2 + 0.8 * offset,
                    sd: 0.18,
                },
                spkts: FeatureDist::Poisson {
                    mean: 30.0 + 12.0 * offset,
                },
                sbytes: FeatureDist::LogNormal {
                    mean: 2000.0 + 700.0 * offset,
                    sd: 180.0,
                },
                dpkts: FeatureDist::Poisson { mean: 9.0 },
                dbytes: FeatureDist::LogNormal {
                    mean: 500.0,
                    sd: 150.0,
                },
                protocols,
                sport: PortProfile {
                    well_known: 0.0,
                    registered: 1.0,
                    dynamic_private: 0.0,
                },
                dport: PortProfile {
                    well_known: 1.0,
                    registered: 0.0,
                    dynamic_private: 0.0,
                },
            }
        }
        SyntheticSpec {
            classes: vec![
                class("benign", 400, 0.0),
                class("ddos", 400, 2.0),
                class("dos", 400, 1.0),
                class("scan", 400, -1.0),
                class("backdoor", 400, -2.0),
            ],
        }
    }
}

/// Draws the corpus described by `spec`. Deterministic per seed.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<Vec<FlowRecord>, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut flows = Vec::with_capacity(spec.total_count());
    for class in &spec.classes {
        let proto_total: f64 = class.protocols.values().sum();
        for _ in 0..class.count {
            let dur = class.dur.sample(&mut rng);
            let spkts = class.spkts.sample(&mut rng).round().max(0.0) as u64;
            let sbytes = class.sbytes.sample(&mut rng).round().max(0.0) as u64;
            let dpkts = class.dpkts.sample(&mut rng).round().max(0.0) as u64;
            let dbytes = class.dbytes.sample(&mut rng).round().max(0.0) as u64;
            let proto = {
                let draw = rng.random::<f64>() * proto_total;
                let mut acc = 0.0;
                let mut chosen = class.protocols.keys().next_back().expect("non-empty");
                for (name, weight) in &class.protocols {
                    acc += weight;
                    if draw < acc {
                        chosen = name;
                        break;
                    }
                }
                chosen.clone()
            };
            let sport = class.sport.sample(&mut rng);
            let dport = class.dport.sample(&mut rng);
            flows.push(FlowRecord::new(
                dur, spkts, sbytes, dpkts, dbytes, proto, sport, dport, &class.name,
            ));
        }
    }
    Ok(flows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_means_land_within_three_standard_errors() {
        let mut spec = SyntheticSpec::desk_default();
        spec.classes.truncate(1);
        spec.classes[0].count = 100;
        spec.classes[0].dur = FeatureDist::LogNormal { mean: 2.0, sd: 0.3 };
        let flows = generate_synthetic(&spec, 11).unwrap();
        assert_eq!(flows.len(), 100);
        let mean_dur: f64 = flows.iter().map(|f| f.dur).sum::<f64>() / 100.0;
        let se = 0.3 / (100.0f64).sqrt();
        assert!(
            (mean_dur - 2.0).abs() <= 3.0 * se,
            "mean {mean_dur} vs 2.0 +/- {}",
            3.0 * se
        );

        let lambda = spec.classes[0].spkts.mean();
        let mean_spkts: f64 = flows.iter().map(|f| f.spkts as f64).sum::<f64>() / 100.0;
        let se = (lambda / 100.0).sqrt();
        assert!((mean_spkts - lambda).abs() <= 3.0 * se);
    }

    #[test]
    fn same_seed_same_dataset() {
        let spec = SyntheticSpec::desk_default();
        let a = generate_synthetic(&spec, 42).unwrap();
        let b = generate_synthetic(&spec, 42).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&spec, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn minimum_viable_counts_satisfy_partition() {
        let mut spec = SyntheticSpec::desk_default();
        for class in &mut spec.classes {
            class.count = 2;
        }
        let flows = generate_synthetic(&spec, 1).unwrap();
        assert_eq!(flows.len(), 10);
        assert!(crate::preprocess::partition(&flows, 1).is_ok());
    }

    #[test]
    fn generated_flows_are_consistent() {
        let flows = generate_synthetic(&SyntheticSpec::desk_default(), 3).unwrap();
        assert!(flows.iter().all(|f| f.is_consistent()));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut spec = SyntheticSpec::desk_default();
        spec.classes[0].count = 1;
        assert!(matches!(
            generate_synthetic(&spec, 0),
            Err(SynthError::InvalidSpec(_))
        ));

        let mut spec = SyntheticSpec::desk_default();
        spec.classes[0].dur = FeatureDist::LogNormal { mean: 2.0, sd: 0.0 };
        assert!(matches!(
            generate_synthetic(&spec, 0),
            Err(SynthError::InvalidSpec(_))
        ));

        let spec = SyntheticSpec { classes: vec![] };
        assert!(matches!(
            generate_synthetic(&spec, 0),
            Err(SynthError::InvalidSpec(_))
        ));
    }
}
