use serde::{Deserialize, Serialize};

use super::{CycleSet, Reading, FEATURE_NAMES, NUM_FEATURES};
use crate::error::{Error, Result};

/// Per-feature min/max fitted on the training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub min: Reading,
    pub max: Reading,
}

impl NormalizationStats {
    pub fn from_bounds(min: Reading, max: Reading) -> Result<Self> {
        for f in 0..NUM_FEATURES {
            if !(max[f] > min[f]) {
                return Err(Error::DegenerateFeature(FEATURE_NAMES[f]));
            }
        }
        Ok(Self { min, max })
    }

    pub fn fit(train: &CycleSet) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Config(
                "cannot fit normalization on an empty training set".into(),
            ));
        }
        let mut min = [f64::INFINITY; NUM_FEATURES];
        let mut max = [f64::NEG_INFINITY; NUM_FEATURES];
        for r in train.cycles().flat_map(|c| c.readings.iter()) {
            for f in 0..NUM_FEATURES {
                min[f] = min[f].min(r[f]);
                max[f] = max[f].max(r[f]);
            }
        }
        Self::from_bounds(min, max)
    }

    /// Min-max scale one value, clamped to `[0, 1]`.
    pub fn apply(&self, feature: usize, value: f64) -> f64 {
        ((value - self.min[feature]) / (self.max[feature] - self.min[feature])).clamp(0.0, 1.0)
    }

    pub fn apply_reading(&self, r: &Reading) -> Reading {
        std::array::from_fn(|f| self.apply(f, r[f]))
    }

    pub fn invert(&self, feature: usize, scaled: f64) -> f64 {
        self.min[feature] + scaled * (self.max[feature] - self.min[feature])
    }
}
