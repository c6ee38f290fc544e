//! Trained model stacks as JSON files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use beltwatch_core::classifiers::{Classifier, Family, HyperParams, Model};
use beltwatch_core::pipeline::PipelineConfig;
use beltwatch_core::quantize::QuantizedModel;
use beltwatch_core::training::TrainedModel;

use crate::error::FormatError;
use crate::io::{read_json, write_json};

pub const ARTIFACT_FORMAT: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StoredModel {
    Float(Model),
    Int8(QuantizedModel),
}

impl StoredModel {
    pub fn classifier(&self) -> &dyn Classifier {
        match self {
            StoredModel::Float(m) => m,
            StoredModel::Int8(m) => m,
        }
    }

    pub fn is_quantized(&self) -> bool {
        matches!(self, StoredModel::Int8(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredClassifier {
    pub family: Family,
    pub hyper: HyperParams,
    /// Seed the model was fitted with.
    pub seed: u64,
    /// Cross-validated score per grid point when a search was run.
    pub grid_scores: Vec<(HyperParams, f64)>,
    pub model: StoredModel,
}

impl StoredClassifier {
    pub fn from_trained(t: TrainedModel, seed: u64) -> Self {
        StoredClassifier {
            family: t.family,
            hyper: t.hyper,
            seed,
            grid_scores: t.grid_scores,
            model: StoredModel::Float(t.model),
        }
    }
}

/// Everything needed to run one approach end to end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub format: u32,
    pub pipeline: PipelineConfig,
    pub train_months: Vec<String>,
    pub mode: StoredClassifier,
    /// Approach 3 only.
    pub duty: Option<StoredClassifier>,
}

impl ModelArtifact {
    pub fn read(path: &Path) -> Result<Self, FormatError> {
        let a: ModelArtifact = read_json(path)?;
        if a.format != ARTIFACT_FORMAT {
            return Err(FormatError::invalid(path, format!("unsupported artifact format {}", a.format)));
        }
        if a.pipeline.approach.needs_duty_model() != a.duty.is_some() {
            return Err(FormatError::invalid(
                path,
                format!("approach {} with{} a duty model", a.pipeline.approach, if a.duty.is_some() { "" } else { "out" }),
            ));
        }
        Ok(a)
    }

    pub fn write(&self, path: &Path) -> Result<(), FormatError> {
        write_json(path, self)
    }

    pub fn mode_classifier(&self) -> &dyn Classifier {
        self.mode.model.classifier()
    }

    pub fn duty_classifier(&self) -> Option<&dyn Classifier> {
        self.duty.as_ref().map(|d| d.model.classifier())
    }

    pub fn is_quantized(&self) -> bool {
        self.mode.model.is_quantized()
    }
}
