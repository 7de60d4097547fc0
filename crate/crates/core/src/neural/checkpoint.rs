//! JSON model checkpoints.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::data::Scaler;
use super::layers::LayerSpec;
use super::model::{Architecture, NetworkModel};
use super::train::TrainedDetector;
use crate::error::{Error, Result};
use crate::numerics::Rng;

pub const CHECKPOINT_FORMAT: &str = "otfs-mimo-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub architecture: Architecture,
    pub q: usize,
    pub seed: u64,
    pub input_shape: [usize; 2],
    pub layers: Vec<LayerSpec>,
    pub parameters: Vec<Vec<f64>>,
    pub scaler: Scaler,
}

impl Checkpoint {
    pub fn from_detector(det: &TrainedDetector) -> Self {
        let (c, l) = det.model.architecture().input_shape();
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            architecture: det.model.architecture(),
            q: det.model.q(),
            seed: det.seed,
            input_shape: [c, l],
            layers: det.model.specs(),
            parameters: det.model.parameters(),
            scaler: det.scaler,
        }
    }

    pub fn into_detector(self) -> Result<TrainedDetector> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(Error::Parse(format!("unsupported checkpoint {} v{}", self.format, self.version)));
        }
        let mut model = NetworkModel::build(self.architecture, self.q, &mut Rng::new(0, 0))?;
        let (c, l) = self.architecture.input_shape();
        if model.specs() != self.layers || self.input_shape != [c, l] {
            return Err(Error::Config(format!("checkpoint layers do not match the {} architecture", self.architecture)));
        }
        if self.parameters.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Parse("checkpoint holds non-finite parameters".into()));
        }
        model.set_parameters(&self.parameters)?;
        if !(self.scaler.sigma.iter().all(|&s| s > 0.0) && self.scaler.mu.iter().all(|m| m.is_finite())) {
            return Err(Error::Parse("checkpoint scaler is invalid".into()));
        }
        Ok(TrainedDetector { model, scaler: self.scaler, seed: self.seed })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("checkpoint: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
