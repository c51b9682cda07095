//! Mass functions over singletons plus the full set Θ, and the Dempster and
//! Yager combination rules.
//!
//! Every mass function here assigns belief only to single classes and to Θ
//! (overall uncertainty). That family is closed under both rules, so the
//! combination reduces to O(N) arithmetic:
//!
//! * singleton `A`: `m1(A)m2(A) + m1(A)m2(Θ) + m1(Θ)m2(A)`
//! * Θ: `m1(Θ)m2(Θ)`
//! * conflict: `Σ_{A≠B} m1(A)m2(B)`
//!
//! Dempster divides everything by `1 - conflict`; Yager leaves the
//! singletons unnormalized and parks the conflict on Θ.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{Frame, Label};

/// Sum-to-one tolerance for a valid mass function.
pub const MASS_TOLERANCE: f64 = 1e-9;

/// Dempster combination is refused once `1 - conflict` drops below this.
pub const TOTAL_CONFLICT_EPSILON: f64 = 1e-12;

/// Basic probability assignment over the singletons of a frame plus Θ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassFunction {
    frame: Frame,
    singletons: Vec<f64>,
    theta: f64,
}

impl MassFunction {
    pub fn new(frame: Frame, singletons: Vec<f64>, theta: f64) -> Result<Self> {
        if singletons.len() != frame.len() {
            return Err(Error::InvalidMass(format!(
                "{} singleton masses for a frame of {}",
                singletons.len(),
                frame.len()
            )));
        }
        if let Some(bad) = singletons
            .iter()
            .chain(std::iter::once(&theta))
            .find(|m| !m.is_finite() || **m < 0.0)
        {
            return Err(Error::InvalidMass(format!("component {bad} is not >= 0")));
        }
        let total: f64 = singletons.iter().sum::<f64>() + theta;
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidMass(format!("masses sum to {total}")));
        }
        Ok(Self {
            frame,
            singletons,
            theta,
        })
    }

    /// Total ignorance: all mass on Θ.
    pub fn vacuous(frame: Frame) -> Self {
        let n = frame.len();
        Self {
            frame,
            singletons: vec![0.0; n],
            theta: 1.0,
        }
    }

    /// All mass on Θ.
    pub fn is_vacuous(&self) -> bool {
        self.theta == 1.0 && self.singletons.iter().all(|&s| s == 0.0)
    }

    /// Construction without validation, for combination outputs whose
    /// invariants hold by construction.
    pub(crate) fn from_parts(frame: Frame, singletons: Vec<f64>, theta: f64) -> Self {
        debug_assert_eq!(frame.len(), singletons.len());
        Self {
            frame,
            singletons,
            theta,
        }
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn singletons(&self) -> &[f64] {
        &self.singletons
    }

    /// Mass on Θ, i.e. the overall uncertainty U.
    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn mass_of(&self, label: Label) -> Option<f64> {
        self.frame.index_of(label).map(|i| self.singletons[i])
    }

    /// Row-vector form `[m(C_1) ... m(C_N) U]`.
    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = self.singletons.clone();
        v.push(self.theta);
        v
    }

    pub fn total(&self) -> f64 {
        self.singletons.iter().sum::<f64>() + self.theta
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CombinationRule {
    Dempster,
    Yager,
}

/// Output of one (or a fold of) pairwise combination(s).
#[derive(Debug, Clone, PartialEq)]
pub struct FusionResult {
    pub fused: MassFunction,
    /// `b_k` for Dempster, `q(∅)` for Yager, of the last pairwise step.
    pub conflict: f64,
    pub rule: CombinationRule,
}

struct Unnormalized {
    singletons: Vec<f64>,
    theta: f64,
    conflict: f64,
}

fn conjunctive(m1: &MassFunction, m2: &MassFunction) -> Result<Unnormalized> {
    if !m1.frame.same_as(&m2.frame) {
        return Err(Error::FrameMismatch);
    }
    let (t1, t2) = (m1.theta, m2.theta);
    let singletons = m1
        .singletons
        .iter()
        .zip(&m2.singletons)
        .map(|(&a, &b)| a * b + a * t2 + t1 * b)
        .collect();
    // Σ_{A≠B} m1(A)m2(B) = Σ_A m1(A)(S2 - m2(A)); each factor is >= 0 in
    // floating point because S2 is a sum of non-negative terms.
    let s2: f64 = m2.singletons.iter().sum();
    let conflict = m1
        .singletons
        .iter()
        .zip(&m2.singletons)
        .map(|(&a, &b)| a * (s2 - b))
        .sum();
    Ok(Unnormalized {
        singletons,
        theta: t1 * t2,
        conflict,
    })
}

pub fn combine_dempster(m1: &MassFunction, m2: &MassFunction) -> Result<FusionResult> {
    let u = conjunctive(m1, m2)?;
    // Total ignorance is an exact identity; renormalizing would otherwise
    // rescale an operand whose total is 1 only up to rounding.
    for (vacuous, other) in [(m1, m2), (m2, m1)] {
        if vacuous.is_vacuous() {
            return Ok(FusionResult {
                fused: other.clone(),
                conflict: 0.0,
                rule: CombinationRule::Dempster,
            });
        }
    }
    // Equal to 1 - b_k for normalized inputs. Summing the retained mass
    // instead avoids the cancellation in 1 - b_k when b_k is close to 1,
    // which otherwise lets long folds drift away from a unit total.
    let norm = u.singletons.iter().sum::<f64>() + u.theta;
    if norm < TOTAL_CONFLICT_EPSILON {
        return Err(Error::TotalConflict {
            conflict: u.conflict,
        });
    }
    let singletons = u.singletons.into_iter().map(|s| s / norm).collect();
    Ok(FusionResult {
        fused: MassFunction::from_parts(m1.frame.clone(), singletons, u.theta / norm),
        conflict: u.conflict,
        rule: CombinationRule::Dempster,
    })
}

pub fn combine_yager(m1: &MassFunction, m2: &MassFunction) -> Result<FusionResult> {
    let u = conjunctive(m1, m2)?;
    Ok(FusionResult {
        fused: MassFunction::from_parts(m1.frame.clone(), u.singletons, u.theta + u.conflict),
        conflict: u.conflict,
        rule: CombinationRule::Yager,
    })
}

pub fn combine(m1: &MassFunction, m2: &MassFunction, rule: CombinationRule) -> Result<FusionResult> {
    match rule {
        CombinationRule::Dempster => combine_dempster(m1, m2),
        CombinationRule::Yager => combine_yager(m1, m2),
    }
}

/// Left fold `((m1 ⊕ m2) ⊕ m3) ...`; the reported conflict is the one of
/// the last pairwise step (0 for a single source).
pub fn combine_many(masses: &[MassFunction], rule: CombinationRule) -> Result<FusionResult> {
    let (first, rest) = masses.split_first().ok_or(Error::EmptyList)?;
    let mut acc = FusionResult {
        fused: first.clone(),
        conflict: 0.0,
        rule,
    };
    for m in rest {
        acc = combine(&acc.fused, m, rule)?;
    }
    Ok(acc)
}

/// Label with the largest singleton mass; Θ is never returned and ties go
/// to the lowest frame index.
pub fn argmax_class(m: &MassFunction) -> Label {
    let mut best = 0;
    for (i, &v) in m.singletons.iter().enumerate().skip(1) {
        if v > m.singletons[best] {
            best = i;
        }
    }
    m.frame.label_at(best)
}
