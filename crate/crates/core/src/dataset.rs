use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::datagen::GateSpec;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Feature matrix with integer class labels.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub feature_names: Vec<String>,
    /// Display names of the classes, indexed by label id.
    pub class_names: Vec<String>,
    pub provenance: Option<GateSpec>,
}

impl Dataset {
    /// Builds a dataset with default names (`f{i}` and the class id).
    pub fn new(features: Matrix, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        let feature_names = (0..features.cols()).map(|i| format!("f{i}")).collect();
        let class_names = (0..class_count).map(|c| c.to_string()).collect();
        let ds = Self {
            features,
            labels,
            feature_names,
            class_names,
            provenance: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.labels.len() != self.features.rows() {
            return Err(Error::Input(format!(
                "{} labels for {} samples",
                self.labels.len(),
                self.features.rows()
            )));
        }
        if self.feature_names.len() != self.features.cols() {
            return Err(Error::Input(format!(
                "{} feature names for {} columns",
                self.feature_names.len(),
                self.features.cols()
            )));
        }
        if let Some(&bad) = self.labels.iter().find(|&&y| y >= self.class_count()) {
            return Err(Error::Input(format!(
                "label {bad} outside [0, {})",
                self.class_count()
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn feature_count(&self) -> usize {
        self.features.cols()
    }

    /// Number of samples per class id.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = alloc::vec![0; self.class_count()];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Subset of samples, keeping names and class metadata.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            feature_names: self.feature_names.clone(),
            class_names: self.class_names.clone(),
            provenance: self.provenance.clone(),
        }
    }
}
