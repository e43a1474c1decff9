//! Versioned parameter checkpoints.
//!
//! JSON with shortest round-trip float formatting, which is lossless for
//! `f64`, so save/load is exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::Tensor;
use crate::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Ordered list of scoped parameter names and their tensors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensors {
    pub entries: Vec<NamedTensor>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: Tensor,
}

impl NamedTensors {
    pub fn new(names: &[String], tensors: &[&Tensor]) -> Self {
        assert_eq!(names.len(), tensors.len());
        NamedTensors {
            entries: names
                .iter()
                .zip(tensors)
                .map(|(n, t)| NamedTensor {
                    name: n.clone(),
                    tensor: (*t).clone(),
                })
                .collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .map(|e| &e.tensor)
    }
}

/// One model (parameters plus optimizer state) inside a checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub params: NamedTensors,
    pub adam: AdamState,
}

/// Full training checkpoint: agent and critic at a given epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub epoch: usize,
    pub policy: ModelState,
    pub critic: ModelState,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            source: e,
        })?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            source: e,
        })?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Validation {
                path: path.to_path_buf(),
                message: format!("unsupported checkpoint version {}", ck.version),
            });
        }
        Ok(ck)
    }
}
