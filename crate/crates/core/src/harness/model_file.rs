//! Trained-ensemble persistence.
//!
//! A model file is the line `EVIFUSE-MODEL-v1` followed by one JSON
//! document holding the ensemble and the training and validation data it
//! was fitted on, so a loaded model can still be retrained.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::ecet::EnsembleClassifier;
use crate::error::{Error, Result};
use crate::update::UpdateConfig;

pub const MODEL_MAGIC: &str = "EVIFUSE-MODEL-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub ensemble: EnsembleClassifier,
    pub train: Dataset,
    pub val: Dataset,
    pub update: UpdateConfig,
}

impl ModelFile {
    pub fn to_text(&self) -> Result<String> {
        Ok(format!("{MODEL_MAGIC}\n{}\n", serde_json::to_string(self)?))
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let (magic, body) = text.split_once('\n').unwrap_or((text, ""));
        if magic.trim_end() != MODEL_MAGIC {
            return Err(Error::ModelFormat(format!(
                "expected first line {MODEL_MAGIC:?}, found {:?}",
                magic.chars().take(40).collect::<String>()
            )));
        }
        serde_json::from_str(body).map_err(|e| Error::ModelFormat(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::from_text(&text)
    }
}
