//! Decision fusion over the two-class frame {adversarial, clean}.
//!
//! Two rules are provided. Bayesian fusion is a reliability-weighted
//! average of the per-detector probabilities. Dempster-Shafer fusion first
//! discounts each detector's probabilities into a mass function (the
//! unreliable remainder goes to the whole frame), combines the masses with
//! Dempster's rule, and reads the decision off the pignistic probability.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FusionError {
    #[error("total conflict between combined mass functions")]
    TotalConflict,
    #[error("weighted probabilities sum to zero on both classes")]
    DegenerateDenominator,
}

/// Defense-side label for one flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DefenseLabel {
    Clean,
    Adversarial,
}

impl DefenseLabel {
    pub fn name(self) -> &'static str {
        match self {
            DefenseLabel::Clean => "clean",
            DefenseLabel::Adversarial => "adversarial",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionRule {
    Bayesian,
    DempsterShafer,
}

impl FusionRule {
    pub fn name(self) -> &'static str {
        match self {
            FusionRule::Bayesian => "bayesian",
            FusionRule::DempsterShafer => "dempster_shafer",
        }
    }
}

/// Basic belief assignment over {adversarial}, {clean}, and the full
/// frame; the empty set carries no mass. The three masses sum to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassFunction {
    pub adversarial: f64,
    pub clean: f64,
    pub omega: f64,
}

impl MassFunction {
    pub fn vacuous() -> MassFunction {
        MassFunction {
            adversarial: 0.0,
            clean: 0.0,
            omega: 1.0,
        }
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        self.adversarial >= 0.0
            && self.clean >= 0.0
            && self.omega >= 0.0
            && ((self.adversarial + self.clean + self.omega) - 1.0).abs() <= tol
    }

    /// Pignistic probability of the adversarial class: singleton mass plus
    /// half the mass on the frame.
    pub fn pignistic_adversarial(&self) -> f64 {
        self.adversarial + self.omega / 2.0
    }
}

/// Fused decision with the adversarial/clean probabilities that produced
/// it. `P_a + P_c = 1`; the decision is adversarial iff `P_a > 0.5`, so a
/// tie passes traffic through as clean.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FusionVerdict {
    pub p_adversarial: f64,
    pub p_clean: f64,
    pub decision: DefenseLabel,
    pub rule: FusionRule,
}

fn verdict(p_adversarial: f64, rule: FusionRule) -> FusionVerdict {
    FusionVerdict {
        p_adversarial,
        p_clean: 1.0 - p_adversarial,
        decision: if p_adversarial > 0.5 {
            DefenseLabel::Adversarial
        } else {
            DefenseLabel::Clean
        },
        rule,
    }
}

/// Reliability-weighted average of per-detector probabilities:
/// `P_a = sum(P_ai * w_i) / (sum(P_ai * w_i) + sum(P_ci * w_i))`.
pub fn fuse_bayesian(probs: &[(f64, f64)], weights: &[f64]) -> Result<FusionVerdict, FusionError> {
    assert_eq!(probs.len(), weights.len());
    let weighted_a: f64 = probs.iter().zip(weights).map(|((a, _), w)| a * w).sum();
    let weighted_c: f64 = probs.iter().zip(weights).map(|((_, c), w)| c * w).sum();
    let denom = weighted_a + weighted_c;
    if denom <= 0.0 {
        return Err(FusionError::DegenerateDenominator);
    }
    // P_c is taken as 1 - P_a so the pair sums to one exactly; with the
    // shared denominator the two computations agree algebraically.
    Ok(verdict(weighted_a / denom, FusionRule::Bayesian))
}

/// Classical discounting: a detector of reliability `w` keeps `w` of its
/// committed belief and concedes the rest to the frame.
pub fn discount(p_adversarial: f64, p_clean: f64, weight: f64) -> MassFunction {
    MassFunction {
        adversarial: weight * p_adversarial,
        clean: weight * p_clean,
        omega: 1.0 - weight,
    }
}

/// Dempster's rule over the two-class frame. Conflict (mass assigned to
/// contradictory singletons) is removed by renormalization; total
/// conflict has no defined combination.
pub fn ds_combine(m1: &MassFunction, m2: &MassFunction) -> Result<MassFunction, FusionError> {
    let adversarial = m1.adversarial * m2.adversarial
        + m1.adversarial * m2.omega
        + m1.omega * m2.adversarial;
    let clean = m1.clean * m2.clean + m1.clean * m2.omega + m1.omega * m2.clean;
    let omega = m1.omega * m2.omega;
    let conflict = m1.adversarial * m2.clean + m1.clean * m2.adversarial;
    let scale = 1.0 - conflict;
    if scale <= 1e-12 {
        return Err(FusionError::TotalConflict);
    }
    Ok(MassFunction {
        adversarial: adversarial / scale,
        clean: clean / scale,
        omega: omega / scale,
    })
}

/// Discounts every detector, folds the masses with Dempster's rule, and
/// decides on the pignistic probability.
pub fn fuse_dempster(probs: &[(f64, f64)], weights: &[f64]) -> Result<FusionVerdict, FusionError> {
    assert_eq!(probs.len(), weights.len());
    let mut combined = MassFunction::vacuous();
    for ((p_a, p_c), w) in probs.iter().zip(weights) {
        combined = ds_combine(&combined, &discount(*p_a, *p_c, *w))?;
    }
    Ok(verdict(combined.pignistic_adversarial(), FusionRule::DempsterShafer))
}
