//! Named parameter tensors and their gradient slots.

use serde::{Deserialize, Serialize};

use super::tensor::Tensor2;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor2>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: impl Into<String>, value: Tensor2) -> ParamId {
        let name = name.into();
        debug_assert!(
            !self.names.contains(&name),
            "duplicate parameter name {name}"
        );
        self.names.push(name);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    #[inline]
    pub fn get(&self, id: ParamId) -> &Tensor2 {
        &self.values[id.0]
    }

    #[inline]
    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor2 {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor2)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    /// Total number of scalar entries.
    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|t| t.as_slice().len()).sum()
    }

    pub fn zero_grads(&self) -> GradStore {
        GradStore {
            grads: self
                .values
                .iter()
                .map(|t| Tensor2::zeros(t.rows(), t.cols()))
                .collect(),
        }
    }

    /// Replaces every value with the tensors of `other`; names and shapes must match.
    pub fn copy_from(&mut self, other: &ParamStore) -> Result<()> {
        if self.names != other.names {
            return Err(Error::Shape("parameter sets have different layouts".into()));
        }
        for (dst, src) in self.values.iter_mut().zip(&other.values) {
            if dst.shape() != src.shape() {
                return Err(Error::Shape("parameter shape mismatch".into()));
            }
            dst.as_mut_slice().copy_from_slice(src.as_slice());
        }
        Ok(())
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }
}

/// Gradient buffers, one per parameter, with identical shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct GradStore {
    grads: Vec<Tensor2>,
}

impl GradStore {
    #[inline]
    pub fn get(&self, id: ParamId) -> &Tensor2 {
        &self.grads[id.0]
    }

    #[inline]
    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor2 {
        &mut self.grads[id.0]
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tensor2> {
        self.grads.iter()
    }

    pub fn zero(&mut self) {
        self.grads.iter_mut().for_each(|g| g.fill(0.0));
    }

    pub fn scale(&mut self, factor: f64) {
        self.grads.iter_mut().for_each(|g| g.scale(factor));
    }

    /// Adds `other` in parameter order; the reduction order is fixed.
    pub fn accumulate(&mut self, other: &GradStore) -> Result<()> {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            a.add_assign(b)?;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.grads.iter().all(Tensor2::is_finite)
    }
}
