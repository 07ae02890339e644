//! Canonical cycle file format.
//!
//! Measurements live in a comma-delimited file with the header
//! `battery_id,cycle_index,t_seconds,voltage_v,current_a,temperature_c`, one
//! row per sample, rows of a cycle contiguous. Capacities come either from a
//! sidecar `<stem>.meta` file of `key = value` lines
//!
//! ```text
//! B0005.rated_capacity_ah = 2.0
//! B0005.1.capacity_ah = 1.8564
//! ```
//!
//! or from `capacity_ah` / `rated_capacity_ah` columns repeated on every row.
//! Column values take precedence over the sidecar.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{Battery, Cycle, CycleSet, Reading};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

pub const REQUIRED_COLUMNS: [&str; 6] = [
    "battery_id",
    "cycle_index",
    "t_seconds",
    "voltage_v",
    "current_a",
    "temperature_c",
];

#[derive(Clone, Debug, Default)]
pub struct LoadOptions {
    /// Rated capacity for batteries that have none in the files.
    pub default_rated_capacity_ah: Option<f64>,
    /// Give cycles without a capacity the rated capacity (SoH 1.0, like the
    /// history fill) instead of failing. Meant for prediction inputs.
    pub missing_capacity_as_rated: bool,
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta")
}

pub fn load_cycles(path: &Path) -> Result<CycleSet> {
    load_cycles_with(path, &LoadOptions::default())
}

struct CycleRows {
    index: u32,
    first_line: u64,
    timestamps: Vec<f64>,
    readings: Vec<Reading>,
    capacity: Option<f64>,
}

struct BatteryRows {
    id: String,
    rated: Option<f64>,
    cycles: Vec<CycleRows>,
}

pub fn load_cycles_with(path: &Path, opts: &LoadOptions) -> Result<CycleSet> {
    let file = path.display().to_string();
    let parse_err = |line: u64, message: String| Error::Parse {
        file: file.clone(),
        line,
        message,
    };

    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => parse_err(1, format!("{other:?}")),
        })?;

    let headers = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let mut idx = [0usize; 6];
    for (slot, name) in idx.iter_mut().zip(REQUIRED_COLUMNS) {
        *slot = column(name).ok_or_else(|| parse_err(1, format!("missing column `{name}`")))?;
    }
    let cap_col = column("capacity_ah");
    let rated_col = column("rated_capacity_ah");

    let mut batteries: Vec<BatteryRows> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize, name: &str| {
            record
                .get(i)
                .filter(|s| !s.is_empty())
                .ok_or_else(|| parse_err(line, format!("missing value for `{name}`")))
        };
        let number = |i: usize, name: &str| -> Result<f64> {
            let raw = field(i, name)?;
            let v: f64 = raw
                .parse()
                .map_err(|_| parse_err(line, format!("`{name}` is not a number: {raw:?}")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(parse_err(line, format!("`{name}` is not finite")))
            }
        };

        let battery_id = field(idx[0], "battery_id")?.to_string();
        let raw_index = field(idx[1], "cycle_index")?;
        let cycle_index: u32 = raw_index.parse().map_err(|_| {
            parse_err(
                line,
                format!("`cycle_index` is not a non-negative integer: {raw_index:?}"),
            )
        })?;
        let t = number(idx[2], "t_seconds")?;
        let reading = [
            number(idx[3], "voltage_v")?,
            number(idx[4], "current_a")?,
            number(idx[5], "temperature_c")?,
        ];
        let capacity = cap_col.map(|i| number(i, "capacity_ah")).transpose()?;
        let rated = rated_col.map(|i| number(i, "rated_capacity_ah")).transpose()?;

        let pos = match batteries.iter().position(|b| b.id == battery_id) {
            Some(p) => p,
            None => {
                batteries.push(BatteryRows {
                    id: battery_id.clone(),
                    rated: None,
                    cycles: Vec::new(),
                });
                batteries.len() - 1
            }
        };
        let battery = &mut batteries[pos];
        if let Some(r) = rated {
            match battery.rated {
                Some(prev) if prev != r => {
                    return Err(parse_err(
                        line,
                        format!("rated capacity changes from {prev} to {r} within battery"),
                    ))
                }
                _ => battery.rated = Some(r),
            }
        }

        let starts_new = battery.cycles.last().is_none_or(|c| c.index != cycle_index);
        if starts_new {
            if let Some(prev) = battery.cycles.last() {
                if cycle_index <= prev.index {
                    return Err(parse_err(
                        line,
                        format!(
                            "cycle {cycle_index} of {battery_id} follows cycle {}; cycles must be increasing and contiguous",
                            prev.index
                        ),
                    ));
                }
            }
            battery.cycles.push(CycleRows {
                index: cycle_index,
                first_line: line,
                timestamps: Vec::new(),
                readings: Vec::new(),
                capacity,
            });
        }
        let cycle = battery.cycles.last_mut().expect("pushed above");
        if let Some(&prev_t) = cycle.timestamps.last() {
            if !(t > prev_t) {
                return Err(parse_err(
                    line,
                    format!("timestamp {t} does not increase (previous {prev_t})"),
                ));
            }
        }
        if capacity != cycle.capacity {
            return Err(parse_err(line, "capacity_ah changes within a cycle".into()));
        }
        cycle.timestamps.push(t);
        cycle.readings.push(reading);
    }

    let meta_path = sidecar_path(path);
    let meta = if meta_path.exists() {
        parse_sidecar(&meta_path)?
    } else {
        Sidecar::default()
    };

    let mut set = CycleSet::new();
    for b in batteries {
        let rated = b
            .rated
            .or_else(|| meta.rated.get(&b.id).copied())
            .or(opts.default_rated_capacity_ah)
            .ok_or_else(|| {
                parse_err(
                    b.cycles.first().map_or(0, |c| c.first_line),
                    format!("no rated capacity for battery {}", b.id),
                )
            })?;
        let mut cycles = Vec::with_capacity(b.cycles.len());
        for c in b.cycles {
            let capacity = c
                .capacity
                .or_else(|| meta.capacity.get(&(b.id.clone(), c.index)).copied())
                .or(opts.missing_capacity_as_rated.then_some(rated))
                .ok_or_else(|| {
                    parse_err(
                        c.first_line,
                        format!("no capacity for battery {} cycle {}", b.id, c.index),
                    )
                })?;
            let cycle = Cycle::new(b.id.clone(), c.index, c.timestamps, c.readings, capacity)
                .map_err(|e| parse_err(c.first_line, e.to_string()))?;
            cycles.push(cycle);
        }
        set.push_battery(Battery {
            id: b.id,
            rated_capacity_ah: rated,
            cycles,
        })?;
    }
    Ok(set)
}

#[derive(Default)]
struct Sidecar {
    rated: HashMap<String, f64>,
    capacity: HashMap<(String, u32), f64>,
}

fn parse_sidecar(path: &Path) -> Result<Sidecar> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file = path.display().to_string();
    let mut out = Sidecar::default();
    for (n, raw) in text.lines().enumerate() {
        let line = (n + 1) as u64;
        let err = |message: String| Error::Parse {
            file: file.clone(),
            line,
            message,
        };
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| err(format!("expected key = value, got {content:?}")))?;
        let (key, value) = (key.trim(), value.trim());
        let v: f64 = value
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| err(format!("value for {key} is not a number: {value:?}")))?;
        if let Some(battery) = key.strip_suffix(".rated_capacity_ah") {
            out.rated.insert(battery.to_string(), v);
        } else if let Some(rest) = key.strip_suffix(".capacity_ah") {
            let (battery, cycle) = rest
                .rsplit_once('.')
                .ok_or_else(|| err(format!("expected <battery>.<cycle>.capacity_ah, got {key}")))?;
            let cycle: u32 = cycle
                .parse()
                .map_err(|_| err(format!("cycle index in {key} is not an integer")))?;
            out.capacity.insert((battery.to_string(), cycle), v);
        } else {
            return Err(err(format!("unknown key {key}")));
        }
    }
    Ok(out)
}

/// Measurement CSV and sidecar text for `set`.
pub fn render_cycles(set: &CycleSet) -> (String, String) {
    let mut csv = REQUIRED_COLUMNS.join(",");
    csv.push('\n');
    let mut meta = String::new();
    for b in set.batteries() {
        let _ = writeln!(meta, "{}.rated_capacity_ah = {}", b.id, b.rated_capacity_ah);
        for c in &b.cycles {
            let _ = writeln!(meta, "{}.{}.capacity_ah = {}", b.id, c.cycle_index, c.capacity_ah);
            for (t, r) in c.timestamps.iter().zip(&c.readings) {
                let _ = writeln!(csv, "{},{},{},{},{},{}", b.id, c.cycle_index, t, r[0], r[1], r[2]);
            }
        }
    }
    (csv, meta)
}

/// Write `set` to `path` plus its sidecar, each atomically.
pub fn write_cycles(set: &CycleSet, path: &Path) -> Result<()> {
    let (csv, meta) = render_cycles(set);
    write_atomic(path, csv.as_bytes()).map_err(|e| Error::io(path, e))?;
    let meta_path = sidecar_path(path);
    write_atomic(&meta_path, meta.as_bytes()).map_err(|e| Error::io(&meta_path, e))?;
    Ok(())
}
