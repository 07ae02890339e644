//! RMSE metrics, evaluation reports, the ablation runner, and plot data.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{HistoryMode, PaddedCycle, HISTORY_FILL, MAX_SOH};
use crate::error::{Error, Result};
use crate::model::{AblationSwitches, ModelParams};
use crate::training::{train, TrainConfig, TrainOptions};

fn check_pair(pred: &[f64], target: &[f64], what: &str) -> Result<()> {
    if pred.is_empty() || pred.len() != target.len() {
        return Err(Error::Contract(format!(
            "{what} needs equal non-empty lengths, got {} and {}",
            pred.len(),
            target.len()
        )));
    }
    Ok(())
}

/// `sqrt(mean((pred - target)²))`.
pub fn rmse(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_pair(pred, target, "rmse")?;
    let ss: f64 = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((ss / pred.len() as f64).sqrt())
}

/// Relative RMSE in percent: `100·sqrt(mean(((pred - target)/target)²))`.
pub fn rmse_percent(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_pair(pred, target, "rmse_percent")?;
    if let Some(t) = target.iter().find(|&&t| !(t > 0.0)) {
        return Err(Error::Domain(format!("rmse_percent needs positive targets, got {t}")));
    }
    let ss: f64 = pred.iter().zip(target).map(|(p, t)| ((p - t) / t).powi(2)).sum();
    Ok(100.0 * (ss / pred.len() as f64).sqrt())
}

pub const RMSE_PERCENT_DEFINITION: &str = "100 * sqrt(mean(((pred - true) / true)^2))";

/// Anything that maps a padded cycle to an SoH estimate.
pub trait SohPredictor: Sync {
    fn history_len(&self) -> usize;
    fn predict(&self, sample: &PaddedCycle) -> Result<f64>;
}

impl SohPredictor for ModelParams {
    fn history_len(&self) -> usize {
        self.config.history_len
    }

    fn predict(&self, sample: &PaddedCycle) -> Result<f64> {
        ModelParams::predict(self, sample)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub battery_id: String,
    pub cycle_index: u32,
    pub soh_true: f64,
    pub soh_pred: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub rmse: f64,
    pub rmse_percent: f64,
    pub rmse_percent_definition: String,
    pub history_mode: HistoryMode,
    pub config_hash: String,
    /// Kept out of the serialized report so reruns are byte-identical.
    #[serde(skip)]
    pub wall_seconds: f64,
}

impl EvalReport {
    pub fn from_rows(rows: Vec<EvalRow>, history_mode: HistoryMode, config_hash: &str) -> Result<Self> {
        let pred: Vec<f64> = rows.iter().map(|r| r.soh_pred).collect();
        let target: Vec<f64> = rows.iter().map(|r| r.soh_true).collect();
        Ok(Self {
            rmse: rmse(&pred, &target)?,
            rmse_percent: rmse_percent(&pred, &target)?,
            rows,
            rmse_percent_definition: RMSE_PERCENT_DEFINITION.into(),
            history_mode,
            config_hash: config_hash.into(),
            wall_seconds: 0.0,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Contract(e.to_string()))
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        crate::fsutil::write_atomic(path, text.as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn summary(&self) -> String {
        let batteries: Vec<&str> = {
            let mut ids: Vec<&str> = Vec::new();
            for r in &self.rows {
                if !ids.contains(&r.battery_id.as_str()) {
                    ids.push(&r.battery_id);
                }
            }
            ids
        };
        format!(
            "evaluation ({} history)\n  batteries     {}\n  cycles        {}\n  RMSE          {:.6}\n  RMSE%         {:.4}\n  wall seconds  {:.2}\n  config hash   {}\n",
            self.history_mode,
            batteries.join(", "),
            self.rows.len(),
            self.rmse,
            self.rmse_percent,
            self.wall_seconds,
            self.config_hash
        )
    }
}

fn row(sample: &PaddedCycle, soh_pred: f64) -> EvalRow {
    EvalRow {
        battery_id: sample.battery_id.clone(),
        cycle_index: sample.cycle_index,
        soh_true: sample.soh,
        soh_pred,
    }
}

/// Predict every cycle of `test_set` and aggregate.
///
/// In autoregressive mode each battery is walked in order and the history is
/// built from the model's own earlier predictions, clamped into `(0, 1.2]`.
pub fn evaluate(
    model: &dyn SohPredictor,
    test_set: &[PaddedCycle],
    history_mode: HistoryMode,
    config_hash: &str,
) -> Result<EvalReport> {
    let started = Instant::now();
    let rows = match history_mode {
        HistoryMode::GroundTruth => test_set
            .par_iter()
            .map(|s| Ok(row(s, model.predict(s)?)))
            .collect::<Result<Vec<_>>>()?,
        HistoryMode::Autoregressive => {
            let p = model.history_len();
            let mut rows = Vec::with_capacity(test_set.len());
            let mut previous: Vec<f64> = Vec::new();
            for (k, s) in test_set.iter().enumerate() {
                if k > 0 && test_set[k - 1].battery_id != s.battery_id {
                    previous.clear();
                }
                let history = (0..p)
                    .map(|j| previous.iter().rev().nth(j).copied().unwrap_or(HISTORY_FILL))
                    .collect();
                let pred = model.predict(&s.with_history(history))?;
                previous.push(pred.clamp(f64::MIN_POSITIVE, MAX_SOH));
                rows.push(row(s, pred));
            }
            rows
        }
    };
    let mut report = EvalReport::from_rows(rows, history_mode, config_hash)?;
    report.wall_seconds = started.elapsed().as_secs_f64();
    Ok(report)
}

/// `cycle_index,soh_true,soh_pred`, one row per evaluated cycle.
pub fn plot_data_csv(report: &EvalReport) -> String {
    let mut out = String::from("cycle_index,soh_true,soh_pred\n");
    for r in &report.rows {
        out.push_str(&format!("{},{},{}\n", r.cycle_index, r.soh_true, r.soh_pred));
    }
    out
}

pub fn emit_plot_data(report: &EvalReport, path: &Path) -> Result<()> {
    if report.rows.is_empty() {
        return Err(Error::Contract("cannot emit plot data for an empty report".into()));
    }
    crate::fsutil::write_atomic(path, plot_data_csv(report).as_bytes()).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub name: &'static str,
    pub switches: AblationSwitches,
    pub report: EvalReport,
    pub train_seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    /// Deterministic metrics table (no timing).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("configuration,rmse,rmse_percent\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{}\n", r.name, r.report.rmse, r.report.rmse_percent));
        }
        out
    }

    pub fn timing_csv(&self) -> String {
        let mut out = String::from("configuration,train_seconds\n");
        for r in &self.rows {
            out.push_str(&format!("{},{:.3}\n", r.name, r.train_seconds));
        }
        out
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "{:<32} {:>10} {:>8} {:>14}\n",
            "configuration", "RMSE", "RMSE%", "train seconds"
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:<32} {:>10.6} {:>8.4} {:>14.1}\n",
                r.name, r.report.rmse, r.report.rmse_percent, r.train_seconds
            ));
        }
        out
    }

    pub fn get(&self, name: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.name == name)
    }
}

/// Train and evaluate the full model and each single-removal variant under
/// identical seeds.
pub fn run_ablation(
    train_set: &[PaddedCycle],
    val_set: &[PaddedCycle],
    test_set: &[PaddedCycle],
    base_config: &TrainConfig,
    verbose: bool,
) -> Result<AblationTable> {
    let mut rows = Vec::with_capacity(5);
    for (name, switches) in AblationSwitches::ablation_variants() {
        let cfg = base_config.with_switches(switches);
        if verbose {
            eprintln!("ablation: training `{name}`");
        }
        let started = Instant::now();
        let outcome = train(
            train_set,
            val_set,
            &cfg,
            &TrainOptions {
                verbose,
                ..TrainOptions::default()
            },
        )?;
        let train_seconds = started.elapsed().as_secs_f64();
        let report = evaluate(&outcome.model, test_set, cfg.eval_history, &cfg.config_hash())?;
        rows.push(AblationRow {
            name,
            switches,
            report,
            train_seconds,
        });
    }
    Ok(AblationTable { rows })
}
