//! The `tidsit` command line.
//!
//! Every subcommand prints its resolved configuration and seed to stderr, so
//! two runs with the same printed configuration produce the same files.
//! Exit codes: 0 success, 2 configuration or usage, 3 data, 4 numeric, 5 I/O.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::data::{
    build_history, generate_synthetic_fleet, load_cycles_with, pad_and_mask, prepare, write_cycles, CycleSet,
    HistoryMode, LoadOptions, HISTORY_FILL,
};
use crate::evaluation::{emit_plot_data, evaluate, run_ablation};
use crate::model::{init_params, Checkpoint};
use crate::training::{gradient_check, prepare_split, train, TrainConfig, TrainOptions};
use crate::{Error, Result};

/// Environment variable naming the directory that holds `discharge.csv`.
pub const DATA_DIR_ENV: &str = "TIDSIT_DATA_DIR";
/// File looked up inside [`DATA_DIR_ENV`] when `--data` is omitted.
pub const DEFAULT_DATA_FILE: &str = "discharge.csv";
/// Exit code for unparseable command lines; shared with configuration errors.
pub const USAGE_EXIT_CODE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "tidsit",
    version,
    about = "Battery state-of-health estimation with a time-informed inverted transformer"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model and write the best-validation checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint and write reports and plot data.
    Eval(EvalArgs),
    /// Retrain with each component removed and tabulate test RMSE.
    Ablate(AblateArgs),
    /// Predict the SoH of one cycle.
    Predict(PredictArgs),
    /// Write a synthetic degradation dataset.
    Synth(SynthArgs),
    /// Compare backpropagated gradients with finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// TOML file of training settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one setting, e.g. `--set epochs=50`. Repeatable; wins over the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Cycle CSV; defaults to `$TIDSIT_DATA_DIR/discharge.csv`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Checkpoint path, rewritten after every epoch.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch training log (CSV).
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Suppress per-epoch progress lines.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Split {
    Train,
    Test,
    All,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum HistoryChoice {
    GroundTruth,
    Autoregressive,
    Both,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Cycle CSV; defaults to `$TIDSIT_DATA_DIR/discharge.csv`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Which batteries of the checkpoint's split to evaluate.
    #[arg(long, value_enum, default_value = "test")]
    pub split: Split,
    /// History source; defaults to the checkpoint's `eval_history`.
    #[arg(long, value_enum)]
    pub history: Option<HistoryChoice>,
    /// Output directory for `<mode>.report.json` and `<mode>.plot.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Cycle CSV; defaults to `$TIDSIT_DATA_DIR/discharge.csv`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Output directory for `ablation.csv` and `ablation_timing.csv`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Cycle CSV holding the target cycle and optionally its predecessors.
    /// Capacities are only needed for cycles used as history.
    #[arg(long)]
    pub cycle_file: PathBuf,
    /// Battery to pick; defaults to the first in the file.
    #[arg(long)]
    pub battery: Option<String>,
    /// Cycle index to predict; defaults to the battery's last cycle.
    #[arg(long)]
    pub cycle: Option<u32>,
    /// Previous SoH values, most recent first, comma separated. Overrides the
    /// labels of earlier cycles in the file.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub history: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Cycles per battery.
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV; a `.meta` sidecar is written next to it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub batteries: usize,
    #[arg(long, default_value_t = 16)]
    pub t_min: usize,
    #[arg(long, default_value_t = 64)]
    pub t_max: usize,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Settings layered over the toy model (T=16, H=8, p=4, 2 heads, dropout 0).
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Seed for parameters and the synthetic batch.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of synthetic cycles in the batch.
    #[arg(long, default_value_t = 3)]
    pub cycles: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub eps: f64,
    /// Maximum accepted relative error.
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { USAGE_EXIT_CODE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.category().exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
    }
}

fn data_path(explicit: Option<PathBuf>) -> Result<PathBuf> {
    if let Some(p) = explicit {
        return Ok(p);
    }
    match std::env::var_os(DATA_DIR_ENV) {
        Some(dir) => Ok(Path::new(&dir).join(DEFAULT_DATA_FILE)),
        None => Err(Error::Config(format!(
            "no dataset given; pass --data or set {DATA_DIR_ENV} to a directory containing {DEFAULT_DATA_FILE}"
        ))),
    }
}

fn load(path: &Path, config: &TrainConfig) -> Result<CycleSet> {
    load_cycles_with(
        path,
        &LoadOptions {
            default_rated_capacity_ah: Some(config.rated_capacity_ah),
            ..LoadOptions::default()
        },
    )
}

fn print_config(config: &TrainConfig) {
    eprintln!("# resolved configuration (hash {})", config.config_hash());
    eprint!("{}", config.to_toml());
    eprintln!("# seed {}", config.seed);
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let config = TrainConfig::resolve(a.config.config.as_deref(), &a.config.overrides)?;
    print_config(&config);
    let data = data_path(a.data)?;
    let split = prepare_split(&load(&data, &config)?, &config)?;
    eprintln!(
        "data: {} train / {} validation / {} test cycles",
        split.train.len(),
        split.val.len(),
        split.test.len()
    );
    let outcome = train(
        &split.train,
        &split.val,
        &config,
        &TrainOptions {
            stats: Some(&split.stats),
            checkpoint: Some(&a.out),
            verbose: !a.quiet,
        },
    )?;
    if let Some(log) = &a.log {
        outcome.log.write(log)?;
    }
    eprintln!(
        "best epoch {} (validation RMSE {}); checkpoint {}",
        outcome.best_epoch,
        outcome.best_val_rmse.map_or("n/a".into(), |v| format!("{v:.6}")),
        a.out.display()
    );
    let report = evaluate(&outcome.model, &split.test, config.eval_history, &config.config_hash())?;
    eprintln!("test: {}", report.summary());
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&a.ckpt)?;
    let config = &ckpt.train_config;
    print_config(config);
    let set = load(&data_path(a.data)?, config)?;
    let ids: Vec<String> = match a.split {
        Split::Train => config.train_batteries.clone(),
        Split::Test => config.test_batteries.clone(),
        Split::All => set.battery_ids().into_iter().map(String::from).collect(),
    };
    let mut chosen = CycleSet::new();
    for id in &ids {
        let b = set
            .battery(id)
            .ok_or_else(|| Error::Config(format!("unknown battery {id}; available: {:?}", set.battery_ids())))?;
        chosen.push_battery(b.clone())?;
    }
    let samples = prepare(&chosen, &ckpt.stats, config.pad_len, config.history_len)?;
    let modes = match a.history {
        None => vec![config.eval_history],
        Some(HistoryChoice::GroundTruth) => vec![HistoryMode::GroundTruth],
        Some(HistoryChoice::Autoregressive) => vec![HistoryMode::Autoregressive],
        Some(HistoryChoice::Both) => vec![HistoryMode::GroundTruth, HistoryMode::Autoregressive],
    };
    for mode in modes {
        let report = evaluate(&ckpt.model, &samples, mode, &ckpt.meta.config_hash)?;
        let json = a.out.join(format!("{mode}.report.json"));
        let plot = a.out.join(format!("{mode}.plot.csv"));
        report.write_json(&json)?;
        emit_plot_data(&report, &plot)?;
        println!("{}", report.summary());
        eprintln!("wrote {} and {}", json.display(), plot.display());
    }
    Ok(())
}

fn cmd_ablate(a: AblateArgs) -> Result<()> {
    let config = TrainConfig::resolve(a.config.config.as_deref(), &a.config.overrides)?;
    print_config(&config);
    let split = prepare_split(&load(&data_path(a.data)?, &config)?, &config)?;
    let table = run_ablation(&split.train, &split.val, &split.test, &config, !a.quiet)?;
    let csv = a.out.join("ablation.csv");
    let timing = a.out.join("ablation_timing.csv");
    crate::fsutil::write_atomic(&csv, table.to_csv().as_bytes()).map_err(|e| Error::io(&csv, e))?;
    crate::fsutil::write_atomic(&timing, table.timing_csv().as_bytes()).map_err(|e| Error::io(&timing, e))?;
    print!("{}", table.render());
    Ok(())
}

fn cmd_predict(a: PredictArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&a.ckpt)?;
    let config = &ckpt.train_config;
    print_config(config);
    let set = load_cycles_with(
        &a.cycle_file,
        &LoadOptions {
            default_rated_capacity_ah: Some(config.rated_capacity_ah),
            missing_capacity_as_rated: true,
        },
    )?;
    let battery = match &a.battery {
        Some(id) => set
            .battery(id)
            .ok_or_else(|| Error::Config(format!("unknown battery {id}; available: {:?}", set.battery_ids())))?,
        None => set
            .batteries()
            .first()
            .ok_or_else(|| Error::Config(format!("{} holds no cycles", a.cycle_file.display())))?,
    };
    let pos = match a.cycle {
        Some(k) => battery
            .cycles
            .iter()
            .position(|c| c.cycle_index == k)
            .ok_or_else(|| Error::Config(format!("battery {} has no cycle {k}", battery.id)))?,
        None => battery.cycles.len() - 1,
    };
    let p = config.history_len;
    let history = match a.history {
        Some(h) if h.len() != p => {
            return Err(Error::Config(format!("--history needs {p} values, got {}", h.len())));
        }
        Some(h) => h,
        None => build_history(&battery.soh_labels()?, pos, p),
    };
    // the target's own label is never read by the model
    let padded = pad_and_mask(&battery.cycles[pos], HISTORY_FILL, &ckpt.stats, config.pad_len, history)?;
    println!("{}", ckpt.model.predict(&padded)?);
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    eprintln!(
        "# synthetic fleet: batteries {} cycles {} t_min {} t_max {}",
        a.batteries, a.n, a.t_min, a.t_max
    );
    eprintln!("# seed {}", a.seed);
    if a.batteries == 0 {
        return Err(Error::Config("--batteries must be positive".into()));
    }
    let set = generate_synthetic_fleet(a.batteries, a.n, a.t_min, a.t_max, a.seed)?;
    write_cycles(&set, &a.out)?;
    eprintln!("wrote {} cycles to {}", set.num_cycles(), a.out.display());
    Ok(())
}

/// Base settings for `gradcheck`: small enough for finite differences over
/// every parameter.
pub fn gradcheck_base() -> TrainConfig {
    TrainConfig {
        pad_len: 16,
        hidden: 8,
        encoder_heads: 2,
        ffn_dim: 32,
        history_len: 4,
        dropout: 0.0,
        ..TrainConfig::default()
    }
}

fn cmd_gradcheck(a: GradcheckArgs) -> Result<()> {
    let mut config = TrainConfig::resolve_over(&gradcheck_base(), a.config.config.as_deref(), &a.config.overrides)?;
    config.seed = a.seed;
    print_config(&config);
    if a.cycles == 0 {
        return Err(Error::Config("--cycles must be positive".into()));
    }
    let set = generate_synthetic_fleet(1, a.cycles, 2.min(config.pad_len), config.pad_len, a.seed)?;
    let samples = prepare(
        &set,
        &crate::data::NormalizationStats::fit(&set)?,
        config.pad_len,
        config.history_len,
    )?;
    let model = init_params(&config.model_config(), a.seed)?;
    let report = gradient_check(&model, &samples, a.eps)?;
    for (path, err) in &report.per_path {
        eprintln!("{path:<28} {err:.3e}");
    }
    println!(
        "max relative error {:.3e} ({})",
        report.max,
        report.worst_path.as_deref().unwrap_or("-")
    );
    if report.max < a.tolerance {
        Ok(())
    } else {
        Err(Error::Contract(format!(
            "max relative error {:.3e} exceeds tolerance {:.1e}",
            report.max, a.tolerance
        )))
    }
}
