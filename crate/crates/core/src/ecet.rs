//! Ensemble classification by evidential fusion of crisp member predictions.
//!
//! Every member's label becomes a weighted mass function; the masses are
//! folded left to right with Dempster's rule (which decides the label) and,
//! in parallel, with Yager's rule (which keeps conflict visible on Θ).

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bpa::{prediction_to_mass, ConfidenceWeights, SensitivityFactor};
use crate::classifiers::{self, ClassifierModel, ClassifierSpec};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::evidence::{argmax_class, combine_many, CombinationRule, MassFunction};
use crate::frame::{Frame, Label};
use crate::metrics::compute_metrics;

/// How member confidence weights are derived when an ensemble is fitted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum WeightPolicy {
    /// Same scalar weight for every class of every member.
    Uniform { weight: f64 },
    /// Per-class validation F1 of each member.
    ValidationF1,
}

impl Default for WeightPolicy {
    fn default() -> Self {
        WeightPolicy::Uniform { weight: 1.0 }
    }
}

/// An ordered pool of trained classifiers sharing one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleClassifier {
    members: Vec<ClassifierModel>,
    frame: Frame,
    weights: Vec<ConfidenceWeights>,
    k: SensitivityFactor,
    policy: WeightPolicy,
}

/// Result of fusing the members on one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleVerdict {
    pub y_ec: Label,
    /// Θ mass of the Dempster fold.
    pub u_d: f64,
    /// Θ mass of the Yager fold.
    pub u_y: f64,
    /// Conflict `b_k` of the last Dempster step.
    pub conflict_d: f64,
    /// Conflict `q(∅)` of the last Yager step.
    pub conflict_y: f64,
    pub member_predictions: Vec<Label>,
    pub fused_mass: MassFunction,
    pub yager_mass: MassFunction,
}

impl EnsembleClassifier {
    pub fn new(
        members: Vec<ClassifierModel>,
        weights: Vec<ConfidenceWeights>,
        k: SensitivityFactor,
    ) -> Result<Self> {
        Self::with_policy(members, weights, k, WeightPolicy::default())
    }

    fn with_policy(
        members: Vec<ClassifierModel>,
        weights: Vec<ConfidenceWeights>,
        k: SensitivityFactor,
        policy: WeightPolicy,
    ) -> Result<Self> {
        if members.len() < 2 {
            return Err(Error::InvalidConfig(format!(
                "an ensemble needs at least 2 members, got {}",
                members.len()
            )));
        }
        if weights.len() != members.len() {
            return Err(Error::InvalidWeight(format!(
                "{} weight vectors for {} members",
                weights.len(),
                members.len()
            )));
        }
        let frame = members[0].frame().clone();
        let width = members[0].n_features();
        for m in &members {
            if !m.frame().same_as(&frame) {
                return Err(Error::FrameMismatch);
            }
            if m.n_features() != width {
                return Err(Error::FeatureMismatch {
                    expected: width,
                    found: m.n_features(),
                });
            }
        }
        if weights.iter().any(|w| !w.frame().same_as(&frame)) {
            return Err(Error::FrameMismatch);
        }
        Ok(Self {
            members,
            frame,
            weights,
            k,
            policy,
        })
    }

    /// Members sharing one scalar weight on every class.
    pub fn uniform(members: Vec<ClassifierModel>, weight: f64, k: SensitivityFactor) -> Result<Self> {
        let frame = members
            .first()
            .map(|m| m.frame().clone())
            .ok_or_else(|| Error::InvalidConfig("an ensemble needs at least 2 members, got 0".into()))?;
        let weights = (0..members.len())
            .map(|_| ConfidenceWeights::uniform(frame.clone(), weight))
            .collect::<Result<Vec<_>>>()?;
        Self::with_policy(members, weights, k, WeightPolicy::Uniform { weight })
    }

    /// Trains one member per spec (in parallel) and derives weights with
    /// `policy`; `val` is only read by [`WeightPolicy::ValidationF1`].
    pub fn fit(
        specs: &[ClassifierSpec],
        train: &Dataset,
        val: &Dataset,
        frame: &Frame,
        k: SensitivityFactor,
        policy: WeightPolicy,
    ) -> Result<Self> {
        let members = specs
            .par_iter()
            .map(|s| classifiers::train(s, train, frame))
            .collect::<Result<Vec<_>>>()?;
        let weights = members
            .iter()
            .map(|m| derive_weights(m, val, frame, policy))
            .collect::<Result<Vec<_>>>()?;
        Self::with_policy(members, weights, k, policy)
    }

    pub fn members(&self) -> &[ClassifierModel] {
        &self.members
    }

    pub fn specs(&self) -> Vec<ClassifierSpec> {
        self.members.iter().map(|m| m.spec().clone()).collect()
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn weights(&self) -> &[ConfidenceWeights] {
        &self.weights
    }

    pub fn k(&self) -> SensitivityFactor {
        self.k
    }

    pub fn policy(&self) -> WeightPolicy {
        self.policy
    }

    pub fn n_features(&self) -> usize {
        self.members[0].n_features()
    }

    /// Sub-ensemble of the members at `indices`, in that order. A single
    /// index yields a one-member pool, used to score members on their own.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::EmptyList);
        }
        Ok(Self {
            members: indices.iter().map(|&i| self.members[i].clone()).collect(),
            frame: self.frame.clone(),
            weights: indices.iter().map(|&i| self.weights[i].clone()).collect(),
            k: self.k,
            policy: self.policy,
        })
    }
}

fn derive_weights(
    model: &ClassifierModel,
    val: &Dataset,
    frame: &Frame,
    policy: WeightPolicy,
) -> Result<ConfidenceWeights> {
    match policy {
        WeightPolicy::Uniform { weight } => ConfidenceWeights::uniform(frame.clone(), weight),
        WeightPolicy::ValidationF1 => {
            if val.is_empty() {
                return Ok(ConfidenceWeights::ones(frame.clone()));
            }
            let pred = model.predict_all(val)?;
            let report = compute_metrics(val.labels(), &pred, frame)?;
            let w = frame
                .labels()
                .iter()
                .map(|&l| report.f1_of(l).clamp(0.0, 1.0))
                .collect();
            ConfidenceWeights::new(frame.clone(), w)
        }
    }
}

/// Fuses the member predictions for one observation.
pub fn ec_infer(ec: &EnsembleClassifier, observation: &[f64]) -> Result<EnsembleVerdict> {
    let member_predictions = ec
        .members
        .iter()
        .map(|m| m.predict(observation))
        .collect::<Result<Vec<_>>>()?;
    fuse_predictions(ec, member_predictions)
}

/// Fusion step of [`ec_infer`] for already computed member labels.
pub fn fuse_predictions(ec: &EnsembleClassifier, member_predictions: Vec<Label>) -> Result<EnsembleVerdict> {
    let masses = member_predictions
        .iter()
        .zip(&ec.weights)
        .map(|(&p, w)| prediction_to_mass(p, w, ec.k))
        .collect::<Result<Vec<_>>>()?;
    let dempster = combine_many(&masses, CombinationRule::Dempster)
        .expect("strictly positive singleton masses rule out total conflict");
    let yager = combine_many(&masses, CombinationRule::Yager)?;
    Ok(EnsembleVerdict {
        y_ec: argmax_class(&dempster.fused),
        u_d: dempster.fused.theta().clamp(0.0, 1.0),
        u_y: yager.fused.theta().clamp(0.0, 1.0),
        conflict_d: dempster.conflict.clamp(0.0, 1.0),
        conflict_y: yager.conflict.clamp(0.0, 1.0),
        member_predictions,
        fused_mass: dempster.fused,
        yager_mass: yager.fused,
    })
}

/// How a window turns its buffer into one label.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowMode {
    /// Most frequent label; ties go to the label seen most recently.
    #[default]
    Majority,
    /// Arithmetic mean of the label values, snapped to the nearest label in
    /// the buffer (equidistant ties to the smaller label).
    Mean,
}

/// Sliding buffer over the last `capacity + 1` labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionWindow {
    capacity: usize,
    mode: WindowMode,
    buffer: VecDeque<Label>,
}

impl PredictionWindow {
    pub fn new(capacity: usize, mode: WindowMode) -> Self {
        Self {
            capacity,
            mode,
            buffer: VecDeque::with_capacity(capacity + 1),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn mode(&self) -> WindowMode {
        self.mode
    }

    pub fn buffer(&self) -> impl Iterator<Item = Label> + '_ {
        self.buffer.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn clear(&mut self) {
        self.buffer.clear();
    }

    /// Appends `label`, evicts beyond capacity and returns the smoothed label.
    pub fn push(&mut self, label: Label) -> Label {
        self.buffer.push_back(label);
        while self.buffer.len() > self.capacity + 1 {
            self.buffer.pop_front();
        }
        self.smoothed().expect("buffer holds at least the pushed label")
    }

    pub fn smoothed(&self) -> Option<Label> {
        match self.mode {
            WindowMode::Majority => self.majority(),
            WindowMode::Mean => self.mean(),
        }
    }

    fn majority(&self) -> Option<Label> {
        // (label, count, last position)
        let mut tally: Vec<(Label, usize, usize)> = Vec::new();
        for (pos, &l) in self.buffer.iter().enumerate() {
            match tally.iter_mut().find(|t| t.0 == l) {
                Some(t) => {
                    t.1 += 1;
                    t.2 = pos;
                }
                None => tally.push((l, 1, pos)),
            }
        }
        tally
            .into_iter()
            .max_by(|a, b| a.1.cmp(&b.1).then(a.2.cmp(&b.2)))
            .map(|t| t.0)
    }

    fn mean(&self) -> Option<Label> {
        if self.buffer.is_empty() {
            return None;
        }
        let mean = self.buffer.iter().map(|&l| l as f64).sum::<f64>() / self.buffer.len() as f64;
        self.buffer.iter().copied().min_by(|&a, &b| {
            let (da, db) = ((a as f64 - mean).abs(), (b as f64 - mean).abs());
            da.total_cmp(&db).then(a.cmp(&b))
        })
    }
}

/// `window_push`: functional form of [`PredictionWindow::push`].
pub fn window_push(mut w: PredictionWindow, label: Label) -> (PredictionWindow, Label) {
    let s = w.push(label);
    (w, s)
}

/// One row of a streamed inference.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamVerdict {
    pub verdict: EnsembleVerdict,
    pub smoothed: Label,
}

/// Runs [`ec_infer`] over the rows in order, smoothing `y_ec` through one
/// window of capacity `n_w`.
pub fn ec_infer_stream(
    ec: &EnsembleClassifier,
    observations: &Dataset,
    n_w: usize,
    mode: WindowMode,
) -> Result<Vec<StreamVerdict>> {
    let mut window = PredictionWindow::new(n_w, mode);
    observations
        .rows()
        .map(|row| {
            let verdict = ec_infer(ec, row)?;
            let smoothed = window.push(verdict.y_ec);
            Ok(StreamVerdict { verdict, smoothed })
        })
        .collect()
}
