use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ModelConfig, ModelParams};
use crate::error::{Error, Result};
use crate::features::FeatureSchema;
use crate::tensor::{TensorFile, TENSOR_FILE_VERSION};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Model parameters plus everything needed to use them safely: the model
/// config and the hash of the feature schema they were trained against.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: ModelConfig,
    pub schema_hash: String,
    pub feature_names: Vec<String>,
    pub params: TensorFile,
}

impl Checkpoint {
    pub fn new(config: &ModelConfig, schema: &FeatureSchema, params: &ModelParams) -> Self {
        let feature_names: Vec<String> = schema.features.iter().map(|f| f.name.clone()).collect();
        let tensors: BTreeMap<String, _> = params
            .names(&feature_names)
            .into_iter()
            .zip(params.tensors().into_iter().cloned())
            .collect();
        Checkpoint {
            version: CHECKPOINT_VERSION,
            config: config.clone(),
            schema_hash: schema.hash(),
            feature_names,
            params: TensorFile::new(tensors),
        }
    }

    pub fn params(&self) -> Result<ModelParams> {
        // A throwaway skeleton supplies the canonical name order.
        let skeleton = ModelParams::init(&self.config, &vec![1; self.feature_names.len()], 1, 0)?;
        let tensors = skeleton
            .names(&self.feature_names)
            .iter()
            .map(|n| self.params.get(n).cloned())
            .collect::<Result<Vec<_>>>()?;
        if tensors.len() != self.params.tensors.len() {
            return Err(Error::Data("checkpoint has unexpected tensors".into()));
        }
        ModelParams::from_tensors(&self.config, self.feature_names.len(), tensors)
    }

    /// Refuses schemas other than the one the model was trained with.
    pub fn check_schema(&self, schema: &FeatureSchema) -> Result<()> {
        let found = schema.hash();
        if found != self.schema_hash {
            return Err(Error::SchemaMismatch {
                expected: self.schema_hash.clone(),
                found,
            });
        }
        Ok(())
    }

    /// Content hash used as the model version in score stores.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("checkpoint serializes");
        hex::encode(&Sha256::digest(&json)[..16])
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string(self)?;
        std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_str(&text)?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                expected: CHECKPOINT_VERSION,
                found: ckpt.version,
            });
        }
        if ckpt.params.version != TENSOR_FILE_VERSION {
            return Err(Error::Version {
                expected: TENSOR_FILE_VERSION,
                found: ckpt.params.version,
            });
        }
        Ok(ckpt)
    }
}
