//! JSON parameter checkpoints.
//!
//! ```json
//! { "version": 1,
//!   "params":  [ { "name": "proj.weight", "shape": [3, 4], "values": [...] } ],
//!   "buffers": [ { "name": "proj.bn.running_mean", "shape": [1, 4], "values": [...] } ] }
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: [usize; 2],
    pub values: Vec<f64>,
}

impl NamedTensor {
    pub fn new(name: impl Into<String>, t: &Tensor) -> Self {
        Self {
            name: name.into(),
            shape: [t.rows(), t.cols()],
            values: t.data().to_vec(),
        }
    }

    pub fn to_tensor(&self) -> Result<Tensor> {
        Tensor::from_vec(self.shape[0], self.shape[1], self.values.clone())
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", self.name)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub params: Vec<NamedTensor>,
    #[serde(default)]
    pub buffers: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self)?;
        fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let ckpt: Checkpoint = serde_json::from_str(&text)?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {} (expected {CHECKPOINT_VERSION})",
                ckpt.version
            )));
        }
        Ok(ckpt)
    }
}
