//! Checkpoint container: a JSON document with a format tag, a version, the
//! hash and body of the run configuration, every parameter tensor by name and
//! the optimizer state.
//!
//! ```json
//! { "format": "tidformer-checkpoint", "version": 1,
//!   "config_hash": "<sha256 hex>", "config": { ... },
//!   "params": [ { "name": "input_proj.weight", "tensor": { "rows": r, "cols": c, "data": [...] } } ],
//!   "optimizer": { "step": t, "first_moment": [...], "second_moment": [...] } }
//! ```
//!
//! Floats are written in shortest round-trip form, so a save/load cycle is
//! bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::params::ParamStore;
use super::tensor::Tensor2;
use crate::error::{Error, Result};

pub const FORMAT: &str = "tidformer-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: Tensor2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub params: Vec<NamedTensor>,
    pub optimizer: Option<AdamState>,
}

impl Checkpoint {
    pub fn capture(
        params: &ParamStore,
        optimizer: Option<&AdamState>,
        config: serde_json::Value,
        config_hash: &str,
    ) -> Result<Self> {
        let params = params
            .iter()
            .map(|(name, t)| {
                t.check_finite(name)?;
                Ok(NamedTensor {
                    name: name.to_string(),
                    tensor: t.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            format: FORMAT.into(),
            version: VERSION,
            config_hash: config_hash.into(),
            config,
            params,
            optimizer: optimizer.cloned(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Self = serde_json::from_str(text)?;
        if ck.format != FORMAT {
            return Err(Error::Checkpoint(format!("unknown format tag {:?}", ck.format)));
        }
        if ck.version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", ck.version)));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// Copies the stored tensors into `params`; names, order and shapes must match.
    pub fn restore_into(&self, params: &mut ParamStore) -> Result<()> {
        if self.params.len() != params.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} tensors, model has {}",
                self.params.len(),
                params.len()
            )));
        }
        for (id, nt) in params.ids().collect::<Vec<_>>().into_iter().zip(&self.params) {
            if params.name(id) != nt.name {
                return Err(Error::Checkpoint(format!(
                    "tensor {:?} where {:?} was expected",
                    nt.name,
                    params.name(id)
                )));
            }
            let dst = params.get_mut(id);
            if dst.shape() != nt.tensor.shape() {
                return Err(Error::Checkpoint(format!("shape mismatch for {}", nt.name)));
            }
            dst.as_mut_slice().copy_from_slice(nt.tensor.as_slice());
        }
        Ok(())
    }
}
