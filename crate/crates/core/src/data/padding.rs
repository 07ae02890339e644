use super::{Cycle, NormalizationStats, MAX_SOH, NUM_FEATURES};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Value written into every padded feature and timestamp slot.
pub const PAD_SENTINEL: f64 = -1.0;

/// Fixed-length, model-ready view of one cycle.
#[derive(Clone, Debug, PartialEq)]
pub struct PaddedCycle {
    pub battery_id: String,
    pub cycle_index: u32,
    /// Number of real samples, `T_i`.
    pub len: usize,
    /// `T×d`, valid rows in `[0, 1]`, padded rows all [`PAD_SENTINEL`].
    pub features: Tensor,
    /// `T_i` leading `true`s then `false`.
    pub mask: Vec<bool>,
    /// Per-cycle min-max normalized timestamps, padded with [`PAD_SENTINEL`].
    pub tau: Vec<f64>,
    pub soh: f64,
    /// Previous SoH labels, most recent first.
    pub history: Vec<f64>,
}

impl PaddedCycle {
    pub fn pad_len(&self) -> usize {
        self.mask.len()
    }

    /// Replace the history vector (autoregressive evaluation).
    pub fn with_history(&self, history: Vec<f64>) -> Self {
        Self {
            history,
            ..self.clone()
        }
    }
}

pub fn pad_and_mask(
    cycle: &Cycle,
    soh: f64,
    stats: &NormalizationStats,
    pad_len: usize,
    history: Vec<f64>,
) -> Result<PaddedCycle> {
    let n = cycle.len();
    if n > pad_len {
        return Err(Error::OverlongCycle {
            battery: cycle.battery_id.clone(),
            cycle: cycle.cycle_index,
            len: n,
            pad_len,
        });
    }
    let label_ok = |v: f64| v > 0.0 && v <= MAX_SOH;
    if !label_ok(soh) {
        return Err(Error::InvalidCycle {
            battery: cycle.battery_id.clone(),
            cycle: cycle.cycle_index,
            message: format!("SoH {soh} outside (0, {MAX_SOH}]"),
        });
    }
    if let Some(h) = history.iter().find(|&&h| !label_ok(h)) {
        return Err(Error::InvalidCycle {
            battery: cycle.battery_id.clone(),
            cycle: cycle.cycle_index,
            message: format!("history value {h} outside (0, {MAX_SOH}]"),
        });
    }

    let mut features = vec![PAD_SENTINEL; pad_len * NUM_FEATURES];
    for (j, r) in cycle.readings.iter().enumerate() {
        features[j * NUM_FEATURES..(j + 1) * NUM_FEATURES].copy_from_slice(&stats.apply_reading(r));
    }

    let t0 = cycle.timestamps[0];
    let span = cycle.timestamps[n - 1] - t0;
    let mut tau = vec![PAD_SENTINEL; pad_len];
    for (slot, &t) in tau.iter_mut().zip(&cycle.timestamps) {
        *slot = (t - t0) / span;
    }
    // exact endpoints regardless of rounding in the division
    tau[0] = 0.0;
    tau[n - 1] = 1.0;

    Ok(PaddedCycle {
        battery_id: cycle.battery_id.clone(),
        cycle_index: cycle.cycle_index,
        len: n,
        features: Tensor::new(vec![pad_len, NUM_FEATURES], features)?,
        mask: (0..pad_len).map(|j| j < n).collect(),
        tau,
        soh,
        history,
    })
}
