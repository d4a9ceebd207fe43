//! Versioned JSON model files.
//!
//! ```json
//! { "format": "hornets-model", "version": 1,
//!   "feature_names": [...], "class_names": [...],
//!   "model": { "config": ..., "lin_att": ..., "cat_int": ..., ... },
//!   "report": { "epoch_losses": [...], ... } }
//! ```
//!
//! Floats are written in shortest round-trip form and parsed exactly, so a
//! load/save cycle is bit-identical.

use std::path::Path;

use hornets_core::{HorNetsModel, TrainReport};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};

pub const MODEL_FORMAT: &str = "hornets-model";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub feature_names: Vec<String>,
    pub class_names: Vec<String>,
    pub model: HorNetsModel,
    pub report: TrainReport,
}

impl ModelFile {
    pub fn new(model: HorNetsModel, report: TrainReport, feature_names: Vec<String>, class_names: Vec<String>) -> Self {
        Self {
            format: MODEL_FORMAT.into(),
            version: MODEL_FORMAT_VERSION,
            feature_names,
            class_names,
            model,
            report,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self).map_err(|e| AppError::Format {
            origin: "model".into(),
            message: e.to_string(),
        })?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let fail = |message: String| AppError::Format {
            origin: origin.to_owned(),
            message,
        };
        let file: ModelFile = serde_json::from_str(text).map_err(|e| fail(e.to_string()))?;
        if file.format != MODEL_FORMAT {
            return Err(fail(format!("not a model file (format '{}')", file.format)));
        }
        if file.version != MODEL_FORMAT_VERSION {
            return Err(fail(format!(
                "unsupported model format version {} (expected {MODEL_FORMAT_VERSION})",
                file.version
            )));
        }
        Ok(file)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| AppError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }
}
