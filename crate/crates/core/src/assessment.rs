//! Troubleshooting knowledge base keyed by system prediction.
//!
//! KB file (JSON):
//!
//! ```json
//! {
//!   "format": "EVIFUSE-KB-v1",
//!   "tuples": [
//!     { "process": "conveying", "subprocess": "dosing", "failure_mode": "low quantity",
//!       "causes": ["..."], "effects": ["..."], "recommendations": ["..."],
//!       "rule_label": 1, "weight": 1.0 }
//!   ]
//! }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{Frame, Label};

pub const KB_FORMAT: &str = "EVIFUSE-KB-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeTuple {
    pub process: String,
    pub subprocess: String,
    pub failure_mode: String,
    #[serde(default)]
    pub causes: Vec<String>,
    #[serde(default)]
    pub effects: Vec<String>,
    #[serde(default)]
    pub recommendations: Vec<String>,
    pub rule_label: Label,
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeBase {
    tuples: Vec<KnowledgeTuple>,
}

#[derive(Deserialize, Serialize)]
struct KbFile {
    format: String,
    tuples: Vec<KnowledgeTuple>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Assessment<'a> {
    Matched(&'a KnowledgeTuple),
    NoAssessment,
}

impl KnowledgeBase {
    /// Validates labels against `frame` and uniqueness.
    pub fn new(tuples: Vec<KnowledgeTuple>, frame: &Frame) -> Result<Self> {
        for (i, t) in tuples.iter().enumerate() {
            if !frame.contains(t.rule_label) {
                return Err(Error::UnknownLabel(t.rule_label));
            }
            if tuples[..i].iter().any(|o| o.rule_label == t.rule_label) {
                return Err(Error::DuplicateTuple(t.rule_label));
            }
            if !(0.0..=1.0).contains(&t.weight) {
                return Err(Error::KnowledgeBase {
                    field: format!("tuples[{i}].weight"),
                    message: format!("{} outside [0, 1]", t.weight),
                });
            }
        }
        Ok(Self { tuples })
    }

    pub fn from_json(text: &str, frame: &Frame) -> Result<Self> {
        let file: KbFile = serde_json::from_str(text).map_err(|e| Error::KnowledgeBase {
            field: format!("line {}, column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        if file.format != KB_FORMAT {
            return Err(Error::KnowledgeBase {
                field: "format".into(),
                message: format!("expected {KB_FORMAT:?}, found {:?}", file.format),
            });
        }
        Self::new(file.tuples, frame)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&KbFile {
            format: KB_FORMAT.into(),
            tuples: self.tuples.clone(),
        })?)
    }

    pub fn tuples(&self) -> &[KnowledgeTuple] {
        &self.tuples
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }
}

pub fn kb_load(path: impl AsRef<Path>, frame: &Frame) -> Result<KnowledgeBase> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    KnowledgeBase::from_json(&text, frame)
}

pub fn match_assessment(kb: &KnowledgeBase, y_sys: Label) -> Assessment<'_> {
    kb.tuples
        .iter()
        .find(|t| t.rule_label == y_sys)
        .map_or(Assessment::NoAssessment, Assessment::Matched)
}
