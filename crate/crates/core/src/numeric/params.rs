use std::collections::BTreeMap;

use crate::error::{Error, Result};

use super::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub tensor: Tensor,
    pub trainable: bool,
}

/// Named tensors with a per-entry trainable flag. Names are kept sorted so
/// iteration order (and therefore serialization) is deterministic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParameterSet {
    entries: BTreeMap<String, Param>,
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor, trainable: bool) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(Error::InvalidArgument(format!("duplicate parameter `{name}`")));
        }
        self.entries.insert(name, Param { tensor, trainable });
        Ok(())
    }

    /// Replaces the tensor of an existing entry, keeping its trainable flag.
    pub fn replace(&mut self, name: &str, tensor: Tensor) -> Result<()> {
        let entry = self
            .entries
            .get_mut(name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))?;
        if entry.tensor.shape() != tensor.shape() {
            return Err(Error::Shape(format!(
                "`{name}` has shape {:?}, replacement has {:?}",
                entry.tensor.shape(),
                tensor.shape()
            )));
        }
        entry.tensor = tensor;
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.entries.get_mut(name)
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.entries
            .get(name)
            .map(|p| &p.tensor)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn data(&self, name: &str) -> Result<&[f64]> {
        self.tensor(name).map(Tensor::data)
    }

    pub fn is_trainable(&self, name: &str) -> bool {
        self.entries.get(name).is_some_and(|p| p.trainable)
    }

    pub fn set_trainable(&mut self, name: &str, trainable: bool) -> Result<()> {
        self.entries
            .get_mut(name)
            .map(|p| p.trainable = trainable)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar values across all entries.
    pub fn scalar_count(&self) -> usize {
        self.entries.values().map(|p| p.tensor.len()).sum()
    }

    /// Raw little-endian bytes of every entry, in name order. Used for
    /// bit-identity assertions.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for (name, p) in &self.entries {
            out.extend_from_slice(name.as_bytes());
            out.push(p.trainable as u8);
            for v in p.tensor.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }
}

/// Gradient accumulator keyed by parameter name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradients {
    entries: BTreeMap<String, Vec<f64>>,
}

impl Gradients {
    pub fn new() -> Self {
        Self::default()
    }

    /// Mutable buffer for `name`, zero-initialized to `len` on first use.
    pub fn slot(&mut self, name: &str, len: usize) -> &mut [f64] {
        let buf = self
            .entries
            .entry(name.to_string())
            .or_insert_with(|| vec![0.0; len]);
        debug_assert_eq!(buf.len(), len);
        buf
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.entries.get(name).map(Vec::as_slice)
    }

    pub fn insert(&mut self, name: impl Into<String>, values: Vec<f64>) {
        self.entries.insert(name.into(), values);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (name, values) in &other.entries {
            let buf = self
                .entries
                .entry(name.clone())
                .or_insert_with(|| vec![0.0; values.len()]);
            for (a, b) in buf.iter_mut().zip(values) {
                *a += scale * b;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for values in self.entries.values_mut() {
            values.iter_mut().for_each(|v| *v *= factor);
        }
    }

    /// Drops every entry whose name does not satisfy `keep`.
    pub fn retain(&mut self, mut keep: impl FnMut(&str) -> bool) {
        self.entries.retain(|k, _| keep(k));
    }

    pub fn check_finite(&self) -> Result<()> {
        for (name, values) in &self.entries {
            if let Some(i) = values.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("gradient {name}[{i}]")));
            }
        }
        Ok(())
    }
}
