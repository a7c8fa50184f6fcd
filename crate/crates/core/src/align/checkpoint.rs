use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::head::{AlignmentModel, HeadWeights, ProjectionHead};
use super::train::TrainConfig;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

/// JSON checkpoint of a trained model and the config that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub image_head: HeadWeights,
    pub text_head: HeadWeights,
    pub temperature: f64,
    pub beta: f64,
    pub config: TrainConfig,
    pub config_hash: String,
}

/// SHA-256 of the canonical JSON encoding of any serializable config.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let bytes = serde_json::to_vec(config).expect("config serializes");
    hex::encode(Sha256::digest(&bytes))
}

impl Checkpoint {
    pub fn new(model: &AlignmentModel, config: &TrainConfig) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            image_head: HeadWeights::from(&model.image_head),
            text_head: HeadWeights::from(&model.text_head),
            temperature: model.temperature,
            beta: model.beta,
            config: config.clone(),
            config_hash: config_hash(config),
        }
    }

    pub fn model(&self) -> Result<AlignmentModel> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint version {}",
                self.version
            )));
        }
        if config_hash(&self.config) != self.config_hash {
            return Err(Error::Config("checkpoint config hash does not match its config".into()));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::Config(format!(
                "checkpoint temperature must be positive, got {}",
                self.temperature
            )));
        }
        let image_head = ProjectionHead::try_from(&self.image_head)?;
        let text_head = ProjectionHead::try_from(&self.text_head)?;
        if image_head.output_dim() != text_head.output_dim() {
            return Err(Error::shape(
                format!("text head output {}", image_head.output_dim()),
                format!("{}", text_head.output_dim()),
            ));
        }
        Ok(AlignmentModel {
            image_head,
            text_head,
            temperature: self.temperature,
            beta: self.beta,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
