//! Experiment configuration, read from a single JSON document.
//!
//! Every field is optional; missing fields take the defaults below. A
//! minimal synthetic run is `{}`.
//!
//! ```json
//! {
//!   "seed": 7,
//!   "data": { "source": "synthetic", "n_classes": 6, "n_features": 8,
//!             "n_per_class": 400, "separation": 3.0 },
//!   "anomaly_class": 5,
//!   "members": [ { "kind": "gaussian_nb" },
//!                { "kind": "decision_tree", "max_depth": 10, "criterion": "entropy" } ],
//!   "rules": "data/bgs_rules.json",
//!   "update": { "threshold_size": 100, "window_size": 20, "patience": 15 },
//!   "window_sizes": [0, 20, 50],
//!   "sweep": { "threshold_size": [150, 250, 350], "window_size": [20], "patience": [15] },
//!   "out": "out"
//! }
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifiers::{ClassifierSpec, DistanceMetric, SplitCriterion, VoteWeighting};
use crate::data::SplitSpec;
use crate::ecet::WeightPolicy;
use crate::error::{Error, Result};
use crate::frame::Label;
use crate::update::UpdateConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSource {
    /// Gaussian clusters from [`crate::data::synth_clusters`].
    Synthetic(SyntheticSpec),
    Csv {
        path: PathBuf,
        #[serde(default = "default_label_column")]
        label_column: String,
    },
}

fn default_label_column() -> String {
    "label".into()
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic(SyntheticSpec::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_classes: usize,
    pub n_features: usize,
    pub n_per_class: usize,
    pub separation: f64,
    /// Added to the generated labels `0..n_classes`.
    pub label_offset: Label,
    pub feature_names: Option<Vec<String>>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_classes: 6,
            n_features: 8,
            n_per_class: 400,
            separation: 3.0,
            label_offset: 0,
            feature_names: None,
        }
    }
}

/// Shape of the synthetic observation streams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StreamSpec {
    /// Rows per constant-class segment.
    pub segment_length: usize,
    /// How many times every class (and the unknown one) appears.
    pub repeats: usize,
    /// Rows of the single anomaly run in the retraining protocol.
    pub anomaly_length: usize,
    /// Fraction of rows swapped for a row of another known class while the
    /// ground truth stays unchanged.
    pub noise_rate: f64,
}

impl Default for StreamSpec {
    fn default() -> Self {
        Self {
            segment_length: 400,
            repeats: 2,
            anomaly_length: 800,
            noise_rate: 0.05,
        }
    }
}

/// Factorial grid of retraining parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepGrid {
    pub threshold_size: Vec<usize>,
    pub window_size: Vec<usize>,
    pub patience: Vec<usize>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            threshold_size: vec![150, 250, 350],
            window_size: vec![20],
            patience: vec![15],
        }
    }
}

impl SweepGrid {
    /// Cells in row-major order (threshold, window, patience).
    pub fn cells(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for &th in &self.threshold_size {
            for &ws in &self.window_size {
                for &pt in &self.patience {
                    out.push((th, ws, pt));
                }
            }
        }
        out
    }
}

/// Default ensemble: boosting first and the tree last. Trees extrapolate
/// arbitrarily outside the training data, so putting one at the end of the
/// fold makes conflict on unfamiliar observations most visible.
pub fn default_members() -> Vec<ClassifierSpec> {
    vec![
        ClassifierSpec::AdaBoostStumps {
            n_estimators: 50,
            learning_rate: 0.5,
        },
        ClassifierSpec::GaussianNb,
        ClassifierSpec::Knn {
            n_neighbors: 7,
            metric: DistanceMetric::Manhattan,
            weighting: VoteWeighting::Distance,
        },
        ClassifierSpec::DecisionTree {
            max_depth: 10,
            criterion: SplitCriterion::Entropy,
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub data: DataSource,
    /// Class withheld from training and replayed as the unknown condition.
    pub anomaly_class: Option<Label>,
    /// Known classes; defaults to every class in the data except the
    /// anomaly class, in ascending order.
    pub frame: Option<Vec<Label>>,
    pub members: Vec<ClassifierSpec>,
    /// Replace each member by the best of the default grid for its kind.
    pub grid_search: bool,
    pub weights: WeightPolicy,
    pub sensitivity_exponent: u32,
    pub rules: Option<PathBuf>,
    pub kb: Option<PathBuf>,
    pub update: UpdateConfig,
    pub split: SplitSpec,
    pub stream: StreamSpec,
    pub window_sizes: Vec<usize>,
    pub sweep: SweepGrid,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            data: DataSource::default(),
            anomaly_class: Some(5),
            frame: None,
            members: default_members(),
            grid_search: false,
            weights: WeightPolicy::default(),
            sensitivity_exponent: crate::bpa::DEFAULT_SENSITIVITY_EXPONENT,
            rules: None,
            kb: None,
            update: UpdateConfig::default(),
            split: SplitSpec::default(),
            stream: StreamSpec::default(),
            window_sizes: vec![0, 20, 50],
            sweep: SweepGrid::default(),
            out: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| {
            Error::InvalidConfig(format!("line {}, column {}: {e}", e.line(), e.column()))
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Checks that do not need the data.
    pub fn validate(&self) -> Result<()> {
        if self.members.is_empty() && self.rules.is_none() {
            return Err(Error::InvalidConfig(
                "configure at least one evidence source (members or rules)".into(),
            ));
        }
        if self.members.len() == 1 {
            return Err(Error::InvalidConfig(
                "an ensemble needs at least 2 members".into(),
            ));
        }
        for m in &self.members {
            m.validate()?;
        }
        if !(0.0..1.0).contains(&self.stream.noise_rate) {
            return Err(Error::InvalidConfig("noise_rate must lie in [0, 1)".into()));
        }
        if self.stream.segment_length == 0 || self.stream.repeats == 0 {
            return Err(Error::InvalidConfig(
                "segment_length and repeats must be positive".into(),
            ));
        }
        if let DataSource::Synthetic(s) = &self.data {
            if s.n_classes < 2 || s.n_features == 0 || s.n_per_class == 0 {
                return Err(Error::InvalidConfig(
                    "synthetic data needs >= 2 classes, >= 1 feature and >= 1 row per class".into(),
                ));
            }
        }
        self.split.validate()?;
        crate::bpa::SensitivityFactor::new(self.sensitivity_exponent)?;
        Ok(())
    }

    /// Copy with every relative path resolved against `base`.
    pub fn resolve_paths(mut self, base: &Path) -> Self {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let DataSource::Csv { path, .. } = &mut self.data {
            fix(path);
        }
        if let Some(p) = &mut self.rules {
            fix(p);
        }
        if let Some(p) = &mut self.kb {
            fix(p);
        }
        fix(&mut self.out);
        self
    }
}
