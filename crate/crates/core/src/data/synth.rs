//! Seeded synthetic degradation data with a known, learnable SoH signal.
//!
//! SoH follows `1 - 0.3·(k/n)^1.2` for cycle `k = 1..n` plus small noise.
//! Cycles shorten as the cell degrades, sampling is jittered, and the
//! voltage/current/temperature traces are smooth functions of SoH and
//! normalized time.

use super::{Battery, Cycle, CycleSet};
use crate::error::{Error, Result};
use crate::numerics::{streams, RngStream};

pub const SYNTH_RATED_CAPACITY_AH: f64 = 2.0;
const FADE: f64 = 0.3;
const FADE_EXPONENT: f64 = 1.2;
const LABEL_NOISE: f64 = 0.002;

/// Noise-free SoH of cycle position `k` (1-based) out of `n`.
pub fn synthetic_soh(k: usize, n: usize) -> f64 {
    1.0 - FADE * (k as f64 / n as f64).powf(FADE_EXPONENT)
}

/// One synthetic battery `SYN<seed>` with `n_cycles` cycles of length in `[t_min, t_max]`.
pub fn generate_synthetic(n_cycles: usize, t_min: usize, t_max: usize, seed: u64) -> Result<CycleSet> {
    let mut set = CycleSet::new();
    set.push_battery(synthetic_battery(&format!("SYN{seed}"), n_cycles, t_min, t_max, seed)?)?;
    Ok(set)
}

/// `count` independent synthetic batteries seeded `seed, seed+1, …`.
pub fn generate_synthetic_fleet(
    count: usize,
    n_cycles: usize,
    t_min: usize,
    t_max: usize,
    seed: u64,
) -> Result<CycleSet> {
    let mut set = CycleSet::new();
    for b in 0..count as u64 {
        let s = seed.wrapping_add(b);
        set.push_battery(synthetic_battery(&format!("SYN{s}"), n_cycles, t_min, t_max, s)?)?;
    }
    Ok(set)
}

fn synthetic_battery(id: &str, n_cycles: usize, t_min: usize, t_max: usize, seed: u64) -> Result<Battery> {
    if t_min < 2 || t_min > t_max {
        return Err(Error::Config(format!("need 2 <= t_min <= t_max, got {t_min}..{t_max}")));
    }
    if n_cycles == 0 {
        return Err(Error::Config("n_cycles must be positive".into()));
    }
    let root = RngStream::new(seed, streams::SYNTH);
    // per-battery ambient offset so batteries are not identical
    let ambient = 24.0 + root.substream(u64::MAX).uniform_range(-1.0, 1.0);

    let mut cycles = Vec::with_capacity(n_cycles);
    for k in 0..n_cycles {
        let mut rng = root.substream(k as u64);
        let clean = synthetic_soh(k + 1, n_cycles);
        let soh = clean + rng.uniform_range(-LABEL_NOISE, LABEL_NOISE);

        let health = ((clean - (1.0 - FADE)) / FADE).clamp(0.0, 1.0);
        let jitter = rng.below(3) as f64 - 1.0;
        let len = ((t_min as f64 + (t_max - t_min) as f64 * health).round() + jitter).clamp(t_min as f64, t_max as f64)
            as usize;

        let duration = 3600.0 * clean;
        let steps: Vec<f64> = (1..len).map(|_| rng.uniform_range(0.4, 1.6)).collect();
        let total: f64 = steps.iter().sum();
        let mut timestamps = Vec::with_capacity(len);
        let mut t = 0.0;
        timestamps.push(t);
        for s in &steps {
            t += s / total * duration;
            timestamps.push(t);
        }

        let wear = 1.0 - clean;
        let readings = timestamps
            .iter()
            .map(|&t| {
                let s = t / duration;
                let v = 4.2 - 0.5 * s - (0.3 + 1.5 * wear) * s.powi(3) + rng.uniform_range(-0.005, 0.005);
                let i = -2.0 + 0.02 * (6.0 * s).sin() - 0.05 * wear + rng.uniform_range(-0.002, 0.002);
                let temp = ambient + (6.0 + 10.0 * wear) * s + rng.uniform_range(-0.05, 0.05);
                [v, i, temp]
            })
            .collect();

        cycles.push(Cycle::new(
            id,
            k as u32,
            timestamps,
            readings,
            soh * SYNTH_RATED_CAPACITY_AH,
        )?);
    }
    Ok(Battery {
        id: id.to_string(),
        rated_capacity_ah: SYNTH_RATED_CAPACITY_AH,
        cycles,
    })
}
