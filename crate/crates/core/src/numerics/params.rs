use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{NumericsError, Tensor};

/// Tensors addressed by stable string paths, iterated in path order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    entries: BTreeMap<String, Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, path: impl Into<String>, value: Tensor) {
        self.entries.insert(path.into(), value);
    }

    pub fn get(&self, path: &str) -> Result<&Tensor, NumericsError> {
        self.entries
            .get(path)
            .ok_or_else(|| NumericsError::UnknownParam(path.to_string()))
    }

    pub fn get_mut(&mut self, path: &str) -> Result<&mut Tensor, NumericsError> {
        self.entries
            .get_mut(path)
            .ok_or_else(|| NumericsError::UnknownParam(path.to_string()))
    }

    pub fn contains(&self, path: &str) -> bool {
        self.entries.contains_key(path)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar values across all tensors.
    pub fn num_values(&self) -> usize {
        self.entries.values().map(Tensor::len).sum()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|(k, v)| (k.clone(), Tensor::zeros(v.shape())))
                .collect(),
        }
    }

    /// Elementwise `self += other`; both sets must share paths and shapes.
    pub fn accumulate(&mut self, other: &ParamSet) -> Result<(), NumericsError> {
        if self.entries.len() != other.entries.len() {
            return Err(NumericsError::ParamMismatch(format!(
                "{} paths vs {} paths",
                self.entries.len(),
                other.entries.len()
            )));
        }
        for (path, value) in self.entries.iter_mut() {
            let rhs = other.get(path)?;
            if rhs.shape() != value.shape() {
                return Err(NumericsError::ParamMismatch(format!(
                    "{path}: {:?} vs {:?}",
                    value.shape(),
                    rhs.shape()
                )));
            }
            value.add_assign(rhs);
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self.entries.values_mut() {
            for x in v.data_mut() {
                *x *= factor;
            }
        }
    }

    /// Euclidean norm over every value in the set.
    pub fn global_norm(&self) -> f64 {
        self.entries
            .values()
            .flat_map(|t| t.data().iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.entries.values().all(Tensor::all_finite)
    }
}

impl FromIterator<(String, Tensor)> for ParamSet {
    fn from_iter<I: IntoIterator<Item = (String, Tensor)>>(iter: I) -> Self {
        Self {
            entries: iter.into_iter().collect(),
        }
    }
}
