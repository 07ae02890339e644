//! Discharge cycles, SoH labels, and the model-ready padded view.

mod io;
mod normalize;
mod padding;
mod synth;

pub use io::{load_cycles, load_cycles_with, sidecar_path, write_cycles, LoadOptions};
pub use normalize::NormalizationStats;
pub use padding::{pad_and_mask, PaddedCycle, PAD_SENTINEL};
pub use synth::{generate_synthetic, generate_synthetic_fleet, synthetic_soh, SYNTH_RATED_CAPACITY_AH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sensor channels per reading, in column order.
pub const FEATURE_NAMES: [&str; NUM_FEATURES] = ["voltage_v", "current_a", "temperature_c"];
pub const NUM_FEATURES: usize = 3;

/// Upper bound accepted for SoH labels; early cycles can sit slightly above rated capacity.
pub const MAX_SOH: f64 = 1.2;

/// Voltage, current, temperature.
pub type Reading = [f64; NUM_FEATURES];

/// One discharge cycle: irregular timestamps, readings, and measured capacity.
#[derive(Clone, Debug, PartialEq)]
pub struct Cycle {
    pub battery_id: String,
    pub cycle_index: u32,
    /// Seconds since cycle start, strictly increasing.
    pub timestamps: Vec<f64>,
    pub readings: Vec<Reading>,
    /// Measured discharge capacity in Ah.
    pub capacity_ah: f64,
}

impl Cycle {
    pub fn new(
        battery_id: impl Into<String>,
        cycle_index: u32,
        timestamps: Vec<f64>,
        readings: Vec<Reading>,
        capacity_ah: f64,
    ) -> Result<Self> {
        let cycle = Self {
            battery_id: battery_id.into(),
            cycle_index,
            timestamps,
            readings,
            capacity_ah,
        };
        cycle.validate()?;
        Ok(cycle)
    }

    fn invalid(&self, message: String) -> Error {
        Error::InvalidCycle {
            battery: self.battery_id.clone(),
            cycle: self.cycle_index,
            message,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.timestamps.len() < 2 {
            return Err(self.invalid(format!("needs at least 2 samples, has {}", self.timestamps.len())));
        }
        if self.readings.len() != self.timestamps.len() {
            return Err(self.invalid(format!(
                "{} readings for {} timestamps",
                self.readings.len(),
                self.timestamps.len()
            )));
        }
        if let Some(j) = self.timestamps.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(self.invalid(format!("timestamps not strictly increasing at sample {}", j + 1)));
        }
        if self
            .timestamps
            .iter()
            .chain(self.readings.iter().flatten())
            .any(|v| !v.is_finite())
        {
            return Err(self.invalid("non-finite value".into()));
        }
        if !(self.capacity_ah > 0.0) {
            return Err(self.invalid(format!("capacity {} must be positive", self.capacity_ah)));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }
}

/// All cycles of one battery, in increasing cycle order.
#[derive(Clone, Debug, PartialEq)]
pub struct Battery {
    pub id: String,
    pub rated_capacity_ah: f64,
    pub cycles: Vec<Cycle>,
}

impl Battery {
    /// SoH label of every cycle, in order.
    pub fn soh_labels(&self) -> Result<Vec<f64>> {
        self.cycles
            .iter()
            .map(|c| compute_soh(c.capacity_ah, self.rated_capacity_ah))
            .collect()
    }
}

/// Cycles grouped by battery, batteries in insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CycleSet {
    batteries: Vec<Battery>,
}

impl CycleSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add a battery, validating cycle order and every cycle.
    pub fn push_battery(&mut self, battery: Battery) -> Result<()> {
        if self.battery(&battery.id).is_some() {
            return Err(Error::Config(format!("battery {} appears twice", battery.id)));
        }
        if !(battery.rated_capacity_ah > 0.0) {
            return Err(Error::Domain(format!(
                "battery {} rated capacity {} must be positive",
                battery.id, battery.rated_capacity_ah
            )));
        }
        for c in &battery.cycles {
            c.validate()?;
            if c.battery_id != battery.id {
                return Err(Error::InvalidCycle {
                    battery: battery.id.clone(),
                    cycle: c.cycle_index,
                    message: format!("cycle tagged with battery {}", c.battery_id),
                });
            }
        }
        if let Some(w) = battery.cycles.windows(2).find(|w| w[1].cycle_index <= w[0].cycle_index) {
            return Err(Error::InvalidCycle {
                battery: battery.id.clone(),
                cycle: w[1].cycle_index,
                message: format!("cycle index not increasing after {}", w[0].cycle_index),
            });
        }
        self.batteries.push(battery);
        Ok(())
    }

    pub fn batteries(&self) -> &[Battery] {
        &self.batteries
    }

    pub fn battery(&self, id: &str) -> Option<&Battery> {
        self.batteries.iter().find(|b| b.id == id)
    }

    pub fn battery_ids(&self) -> Vec<&str> {
        self.batteries.iter().map(|b| b.id.as_str()).collect()
    }

    pub fn cycles(&self) -> impl Iterator<Item = &Cycle> {
        self.batteries.iter().flat_map(|b| b.cycles.iter())
    }

    pub fn num_cycles(&self) -> usize {
        self.batteries.iter().map(|b| b.cycles.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.num_cycles() == 0
    }

    pub fn max_cycle_len(&self) -> usize {
        self.cycles().map(Cycle::len).max().unwrap_or(0)
    }

    /// Union of two sets with disjoint battery ids.
    pub fn merge(mut self, other: CycleSet) -> Result<CycleSet> {
        for b in other.batteries {
            self.push_battery(b)?;
        }
        Ok(self)
    }
}

/// `SoH = C_current / C_rated`.
pub fn compute_soh(c_current: f64, c_rated: f64) -> Result<f64> {
    if !(c_rated > 0.0) {
        return Err(Error::Domain(format!("rated capacity {c_rated} must be positive")));
    }
    if !(c_current >= 0.0) {
        return Err(Error::Domain(format!(
            "current capacity {c_current} must be non-negative"
        )));
    }
    Ok(c_current / c_rated)
}

/// Fill value for history slots before the first cycle (a fresh cell).
pub const HISTORY_FILL: f64 = 1.0;

/// Source of the history vector at evaluation time. Training always uses ground truth.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HistoryMode {
    #[default]
    GroundTruth,
    /// Feed the model's own earlier predictions back as history.
    Autoregressive,
}

impl HistoryMode {
    pub fn as_str(self) -> &'static str {
        match self {
            HistoryMode::GroundTruth => "ground-truth",
            HistoryMode::Autoregressive => "autoregressive",
        }
    }
}

impl std::fmt::Display for HistoryMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for HistoryMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ground-truth" => Ok(HistoryMode::GroundTruth),
            "autoregressive" => Ok(HistoryMode::Autoregressive),
            other => Err(Error::Config(format!(
                "unknown history mode `{other}` (expected ground-truth or autoregressive)"
            ))),
        }
    }
}

/// `[y(i-1), …, y(i-p)]`, most recent first, padded with [`HISTORY_FILL`].
pub fn build_history(soh_sequence: &[f64], i: usize, p: usize) -> Vec<f64> {
    (1..=p)
        .map(|k| {
            i.checked_sub(k)
                .and_then(|j| soh_sequence.get(j).copied())
                .unwrap_or(HISTORY_FILL)
        })
        .collect()
}

/// Partition by battery id, preserving per-battery cycle order.
pub fn split_by_battery(set: &CycleSet, train_ids: &[String], test_ids: &[String]) -> Result<(CycleSet, CycleSet)> {
    if train_ids.is_empty() || test_ids.is_empty() {
        return Err(Error::Config(
            "train and test battery lists must both be non-empty".into(),
        ));
    }
    if let Some(id) = train_ids.iter().find(|id| test_ids.contains(id)) {
        return Err(Error::Config(format!(
            "battery {id} is in both the train and test lists"
        )));
    }
    let pick = |ids: &[String]| -> Result<CycleSet> {
        let mut out = CycleSet::new();
        for id in ids {
            let b = set
                .battery(id)
                .ok_or_else(|| Error::Config(format!("unknown battery {id}; available: {:?}", set.battery_ids())))?;
            out.push_battery(b.clone())?;
        }
        Ok(out)
    };
    Ok((pick(train_ids)?, pick(test_ids)?))
}

/// Ground-truth-history padded view of every cycle in `set`.
pub fn prepare(
    set: &CycleSet,
    stats: &NormalizationStats,
    pad_len: usize,
    history_len: usize,
) -> Result<Vec<PaddedCycle>> {
    let mut out = Vec::with_capacity(set.num_cycles());
    for battery in set.batteries() {
        let labels = battery.soh_labels()?;
        for (i, cycle) in battery.cycles.iter().enumerate() {
            let history = build_history(&labels, i, history_len);
            out.push(pad_and_mask(cycle, labels[i], stats, pad_len, history)?);
        }
    }
    Ok(out)
}

/// Hold out the last `fraction` of each battery's samples (temporally contiguous).
pub fn tail_holdout(samples: Vec<PaddedCycle>, fraction: f64) -> (Vec<PaddedCycle>, Vec<PaddedCycle>) {
    if fraction <= 0.0 {
        return (samples, Vec::new());
    }
    let mut order: Vec<String> = Vec::new();
    for s in &samples {
        if !order.contains(&s.battery_id) {
            order.push(s.battery_id.clone());
        }
    }
    let mut train = Vec::new();
    let mut val = Vec::new();
    for id in order {
        let group: Vec<PaddedCycle> = samples.iter().filter(|s| s.battery_id == id).cloned().collect();
        let n_val = ((group.len() as f64) * fraction).round() as usize;
        let cut = group.len() - n_val.min(group.len().saturating_sub(1));
        for (k, s) in group.into_iter().enumerate() {
            if k < cut {
                train.push(s);
            } else {
                val.push(s);
            }
        }
    }
    (train, val)
}
