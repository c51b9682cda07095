//! Turning a crisp prediction into a weighted mass function.
//!
//! The predicted class receives raw mass `k = 1 - 10^-F`, every other class
//! `(1 - k) / (N - 1)`, so no singleton is ever exactly zero. Each raw mass is
//! scaled by its class confidence weight and whatever is left over goes to Θ.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evidence::MassFunction;
use crate::frame::{Frame, Label};

pub const DEFAULT_SENSITIVITY_EXPONENT: u32 = 4;

/// Sensitivity-to-zero factor `k = 1 - 10^-F`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct SensitivityFactor {
    exponent: u32,
    k: f64,
}

impl SensitivityFactor {
    pub fn new(exponent: u32) -> Result<Self> {
        if exponent < 2 {
            return Err(Error::FTooSmall(exponent));
        }
        let exp = i32::try_from(exponent).map_err(|_| Error::FTooSmall(exponent))?;
        Ok(Self {
            exponent,
            k: 1.0 - 10f64.powi(-exp),
        })
    }

    pub fn exponent(&self) -> u32 {
        self.exponent
    }

    pub fn k(&self) -> f64 {
        self.k
    }
}

impl Default for SensitivityFactor {
    fn default() -> Self {
        Self::new(DEFAULT_SENSITIVITY_EXPONENT).expect("default exponent is valid")
    }
}

impl TryFrom<u32> for SensitivityFactor {
    type Error = Error;

    fn try_from(exponent: u32) -> Result<Self> {
        Self::new(exponent)
    }
}

impl From<SensitivityFactor> for u32 {
    fn from(s: SensitivityFactor) -> Self {
        s.exponent
    }
}

/// `k_factor(F)`.
pub fn k_factor(exponent: u32) -> Result<SensitivityFactor> {
    SensitivityFactor::new(exponent)
}

/// Per-class confidence weights of one evidence source, each in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceWeights {
    frame: Frame,
    weights: Vec<f64>,
}

impl ConfidenceWeights {
    pub fn new(frame: Frame, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != frame.len() {
            return Err(Error::InvalidWeight(format!(
                "{} weights for a frame of {}",
                weights.len(),
                frame.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
            return Err(Error::InvalidWeight(format!("{w} outside [0, 1]")));
        }
        Ok(Self { frame, weights })
    }

    pub fn uniform(frame: Frame, weight: f64) -> Result<Self> {
        let n = frame.len();
        Self::new(frame, vec![weight; n])
    }

    /// All weights 1.
    pub fn ones(frame: Frame) -> Self {
        let n = frame.len();
        Self {
            frame,
            weights: vec![1.0; n],
        }
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Raw masses `m'` before weighting.
pub fn raw_masses(active: usize, n: usize, k: SensitivityFactor) -> Vec<f64> {
    let rest = (1.0 - k.k()) / (n - 1) as f64;
    (0..n).map(|j| if j == active { k.k() } else { rest }).collect()
}

pub fn prediction_to_mass(
    pred: Label,
    weights: &ConfidenceWeights,
    k: SensitivityFactor,
) -> Result<MassFunction> {
    let frame = weights.frame();
    let active = frame.index_of(pred).ok_or(Error::LabelNotInFrame(pred))?;
    let singletons: Vec<f64> = raw_masses(active, frame.len(), k)
        .into_iter()
        .zip(weights.weights())
        .map(|(m, w)| m * w)
        .collect();
    let u = (1.0 - singletons.iter().sum::<f64>()).max(0.0);
    Ok(MassFunction::from_parts(frame.clone(), singletons, u))
}

pub fn uncertainty_of(m: &MassFunction) -> f64 {
    m.theta()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f123() -> Frame {
        Frame::new(vec![1, 2, 3]).unwrap()
    }

    #[test]
    fn k_factor_values() {
        assert!((k_factor(4).unwrap().k() - 0.9999).abs() < 1e-15);
        assert!((k_factor(2).unwrap().k() - 0.99).abs() < 1e-15);
        assert!(matches!(k_factor(1), Err(Error::FTooSmall(1))));
        assert!(matches!(k_factor(0), Err(Error::FTooSmall(0))));
        assert_eq!(SensitivityFactor::default().exponent(), 4);
    }

    #[test]
    fn full_weight_prediction() {
        let w = ConfidenceWeights::ones(f123());
        let m = prediction_to_mass(2, &w, k_factor(4).unwrap()).unwrap();
        let expect = [0.00005, 0.9999, 0.00005];
        for (a, b) in m.singletons().iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(uncertainty_of(&m).abs() < 1e-12);
        assert!((m.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scaled_weight_prediction() {
        let w = ConfidenceWeights::uniform(f123(), 0.8).unwrap();
        let m = prediction_to_mass(2, &w, k_factor(4).unwrap()).unwrap();
        let expect = [0.00004, 0.79992, 0.00004];
        for (a, b) in m.singletons().iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((uncertainty_of(&m) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn zero_weights_are_vacuous() {
        let f = Frame::new(vec![1, 2]).unwrap();
        let w = ConfidenceWeights::new(f.clone(), vec![0.0, 0.0]).unwrap();
        let m = prediction_to_mass(1, &w, k_factor(7).unwrap()).unwrap();
        assert_eq!(m, MassFunction::vacuous(f.clone()));
        assert_eq!(uncertainty_of(&MassFunction::vacuous(f)), 1.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let w = ConfidenceWeights::ones(f123());
        assert!(matches!(
            prediction_to_mass(9, &w, SensitivityFactor::default()),
            Err(Error::LabelNotInFrame(9))
        ));
        assert!(ConfidenceWeights::new(f123(), vec![1.0, 1.2, 0.0]).is_err());
        assert!(ConfidenceWeights::new(f123(), vec![1.0]).is_err());
    }
}
