use std::path::PathBuf;

use thiserror::Error;

use crate::frame::Label;

/// Errors raised anywhere in the fusion pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("duplicate label {0} in frame of discernment")]
    DuplicateLabel(Label),

    #[error("frame of discernment needs at least 2 labels, got {0}")]
    TooFewLabels(usize),

    #[error("mass functions are defined on different frames")]
    FrameMismatch,

    #[error("total conflict between sources (conflict = {conflict})")]
    TotalConflict { conflict: f64 },

    #[error("empty list of mass functions")]
    EmptyList,

    #[error("invalid mass function: {0}")]
    InvalidMass(String),

    #[error("sensitivity exponent F must be >= 2, got {0}")]
    FTooSmall(u32),

    #[error("label {0} is not in the frame of discernment")]
    LabelNotInFrame(Label),

    #[error("invalid confidence weight: {0}")]
    InvalidWeight(String),

    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("label column {0:?} not found")]
    MissingLabelColumn(String),

    #[error("class {label} has {count} observations, at least {required} required")]
    ClassTooSmall {
        label: Label,
        count: usize,
        required: usize,
    },

    #[error("feature count mismatch: expected {expected}, found {found}")]
    FeatureMismatch { expected: usize, found: usize },

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("training set is empty")]
    EmptyTrainingSet,

    #[error("training label {0} is not part of the frame")]
    UnknownLabel(Label),

    #[error("observation has {found} features, model expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("hyperparameter grid is empty")]
    EmptyGrid,

    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),

    #[error("variable {0:?} referenced by a rule is missing from the observation")]
    MissingVariable(String),

    #[error("rule file error at {field}: {message}")]
    RuleFile { field: String, message: String },

    #[error("knowledge base error at {field}: {message}")]
    KnowledgeBase { field: String, message: String },

    #[error("duplicate knowledge tuple for label {0}")]
    DuplicateTuple(Label),

    #[error("retraining requested in phase {0}, expected RetrainReady")]
    NotReady(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("length mismatch: {0} truth labels vs {1} predictions")]
    LengthMismatch(usize, usize),

    #[error("model file error: {0}")]
    ModelFormat(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Errors caused by bad user input rather than a failure while running.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::TotalConflict { .. } | Error::Io(_) | Error::Csv(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
