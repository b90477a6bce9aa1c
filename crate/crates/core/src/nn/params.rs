use indexmap::IndexMap;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// A trainable matrix with its gradient buffer and AdamW moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub grad: Tensor,
    pub first_moment: Tensor,
    pub second_moment: Tensor,
    pub step: u64,
}

impl Param {
    pub fn new(value: Tensor) -> Self {
        let (r, c) = value.shape();
        Self {
            value,
            grad: Tensor::zeros(r, c),
            first_moment: Tensor::zeros(r, c),
            second_moment: Tensor::zeros(r, c),
            step: 0,
        }
    }
}

/// Named parameters in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: IndexMap<String, Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<()> {
        let name = name.into();
        if self.params.contains_key(&name) {
            return Err(Error::InvalidArgument(format!(
                "duplicate parameter name `{name}`"
            )));
        }
        self.params.insert(name, Param::new(value));
        Ok(())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn param(&self, name: &str) -> Result<&Param> {
        self.params
            .get(name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn param_mut(&mut self, name: &str) -> Result<&mut Param> {
        self.params
            .get_mut(name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn value(&self, name: &str) -> Result<&Tensor> {
        Ok(&self.param(name)?.value)
    }

    /// Replaces a value, keeping its shape.
    pub fn set_value(&mut self, name: &str, value: Tensor) -> Result<()> {
        let p = self.param_mut(name)?;
        value.ensure_shape("set_value", p.value.shape())?;
        p.value = value;
        Ok(())
    }

    pub fn grad(&self, name: &str) -> Result<&Tensor> {
        Ok(&self.param(name)?.grad)
    }

    /// Adds into the gradient buffer of `name`.
    pub fn accumulate(&mut self, name: &str, grad: &Tensor) -> Result<()> {
        let p = self.param_mut(name)?;
        p.grad.add_assign(grad)
    }

    pub fn zero_grad(&mut self) {
        for p in self.params.values_mut() {
            p.grad.data_mut().fill(0.0);
        }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }
}
