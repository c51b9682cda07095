//! Command-line runner.
//!
//! Exit codes: 0 on success, 1 for invalid input (configuration, data, rule
//! or model files), 2 for runtime failures.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use evifuse::harness::config::DataSource;
use evifuse::harness::experiments::{
    run_fuse, run_fusion_ablation, run_infer, run_report, run_retrain_sweep, run_train, run_window_ablation,
    InferOptions,
};
use evifuse::harness::{ExperimentConfig, ModelFile};
use evifuse::update::UpdateConfig;
use evifuse::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "evifuse", version, about = "Evidential fusion of classifier ensembles and expert rules")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit the ensemble and write a model file.
    Train(Common),
    /// Stream a CSV file through a saved model with anomaly detection and retraining.
    Infer(Common),
    /// Fuse a saved model with a rule file and attach troubleshooting content.
    Fuse(Common),
    /// Compare detection quality across prediction-window sizes.
    WindowAblation(Common),
    /// Run the retraining protocol over a grid of threshold, window and patience values.
    RetrainSweep(Common),
    /// Score the rule model, each member, member pairs, the ensemble and the system fusion.
    FusionAblation(Common),
    /// Score a predictions table against its truth column.
    Report(Common),
}

#[derive(Args, Debug, Default)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input CSV: training data for experiments, the stream for infer and
    /// fuse, a predictions table for report.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Label column of --data (name or zero-based index).
    #[arg(long)]
    label_column: Option<String>,
    /// Rule file (JSON).
    #[arg(long)]
    rules: Option<PathBuf>,
    /// Knowledge base (JSON).
    #[arg(long)]
    kb: Option<PathBuf>,
    /// Model file written by `train`.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for splits, streams and synthetic data
    #[arg(long)]
    seed: Option<u64>,
    /// Prediction-window size; a comma list for window-ablation and retrain-sweep.
    #[arg(long, value_delimiter = ',')]
    window: Vec<usize>,
    /// Retraining threshold; a comma list for retrain-sweep.
    #[arg(long, value_delimiter = ',')]
    threshold_size: Vec<usize>,
    /// Consecutive anomalous rows before buffering commits; a comma list for retrain-sweep.
    #[arg(long, value_delimiter = ',')]
    patience: Vec<usize>,
    /// Dempster conflict above which a row counts as anomalous
    #[arg(long)]
    tr_d_max: Option<f64>,
    /// Yager conflict above which a row counts as anomalous
    #[arg(long)]
    tr_y_max: Option<f64>,
    /// Require confirmation before retraining.
    #[arg(long)]
    semi_auto: bool,
    /// Confirm the first retrain in semi-automatic mode.
    #[arg(long)]
    confirm: bool,
    /// Prediction column for `report`.
    #[arg(long)]
    column: Option<String>,
}

fn single(name: &str, v: &[usize]) -> Result<Option<usize>> {
    match v {
        [] => Ok(None),
        [x] => Ok(Some(*x)),
        _ => Err(Error::InvalidConfig(format!("--{name} takes a single value here"))),
    }
}

fn apply_update(u: &mut UpdateConfig, c: &Common, allow_lists: bool) -> Result<()> {
    if !allow_lists {
        if let Some(w) = single("window", &c.window)? {
            u.window_size = w;
        }
        if let Some(t) = single("threshold-size", &c.threshold_size)? {
            u.threshold_size = t;
        }
        if let Some(p) = single("patience", &c.patience)? {
            u.patience = p;
        }
    }
    if let Some(x) = c.tr_d_max {
        u.tr_d_max = x;
    }
    if let Some(x) = c.tr_y_max {
        u.tr_y_max = x;
    }
    if c.semi_auto {
        u.semi_automatic = true;
    }
    Ok(())
}

/// Configuration file (relative paths resolved against its directory) with
/// the command-line overrides applied.
fn load_config(c: &Common, allow_lists: bool) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => {
            let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
            ExperimentConfig::load(p)?.resolve_paths(&base)
        }
        None => ExperimentConfig::default(),
    };
    if let Some(d) = &c.data {
        cfg.data = DataSource::Csv {
            path: d.clone(),
            label_column: c.label_column.clone().unwrap_or_else(|| "label".into()),
        };
    }
    if let Some(r) = &c.rules {
        cfg.rules = Some(r.clone());
    }
    if let Some(k) = &c.kb {
        cfg.kb = Some(k.clone());
    }
    if let Some(o) = &c.out {
        cfg.out = o.clone();
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    apply_update(&mut cfg.update, c, allow_lists)?;
    Ok(cfg)
}

fn require<'a>(p: &'a Option<PathBuf>, flag: &str, cmd: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::InvalidConfig(format!("{cmd} requires --{flag}")))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(c) => {
            let cfg = load_config(&c, false)?;
            let o = run_train(&cfg)?;
            println!(
                "model written to {} (test macro-F1 {:.4})",
                o.model_path.display(),
                o.test_metrics.macro_f1
            );
        }
        Command::WindowAblation(c) => {
            let mut cfg = load_config(&c, true)?;
            if !c.window.is_empty() {
                cfg.window_sizes = c.window.clone();
            }
            let sizes = cfg.window_sizes.clone();
            let o = run_window_ablation(&cfg, &sizes)?;
            for (ws, r) in &o.rows {
                println!("window {ws:>4}: macro-F1 {:.4}", r.macro_f1);
            }
        }
        Command::RetrainSweep(c) => {
            let mut cfg = load_config(&c, true)?;
            if !c.threshold_size.is_empty() {
                cfg.sweep.threshold_size = c.threshold_size.clone();
            }
            if !c.window.is_empty() {
                cfg.sweep.window_size = c.window.clone();
            }
            if !c.patience.is_empty() {
                cfg.sweep.patience = c.patience.clone();
            }
            let o = run_retrain_sweep(&cfg)?;
            for cell in &o.cells {
                let status = match (cell.retrained_at, cell.awaiting_confirmation) {
                    (Some(i), _) => format!("retrained at {i}"),
                    (None, true) => "awaiting confirmation".into(),
                    (None, false) => "not retrained".into(),
                };
                println!(
                    "th {:>4} ws {:>3} pt {:>3}: {status}, macro-F1 {:.4}",
                    cell.threshold_size, cell.window_size, cell.patience, cell.metrics.macro_f1
                );
            }
        }
        Command::FusionAblation(c) => {
            let cfg = load_config(&c, false)?;
            let o = run_fusion_ablation(&cfg)?;
            for n in &o.notices {
                eprintln!("notice: {n}");
            }
            for (name, r) in &o.rows {
                println!("{name:<10} macro-F1 {:.4}", r.macro_f1);
            }
        }
        Command::Infer(c) => {
            let model = require(&c.model, "model", "infer")?;
            let data = require(&c.data, "data", "infer")?;
            let mut update = ModelFile::load(model)?.update;
            apply_update(&mut update, &c, false)?;
            let opts = InferOptions {
                rules: c.rules.clone(),
                label_column: c.label_column.clone(),
                update: Some(update),
                confirm_retrain: c.confirm,
            };
            let out = c.out.clone().unwrap_or_else(|| PathBuf::from("out"));
            let o = run_infer(model, data, &out, &opts)?;
            println!("{} rows, {} retrain(s), {} notification(s)", o.rows, o.retrains, o.notifications);
            if o.awaiting_confirmation {
                eprintln!("notice: retraining is ready and awaits confirmation (rerun with --confirm)");
            }
        }
        Command::Fuse(c) => {
            let model = require(&c.model, "model", "fuse")?;
            let rules = require(&c.rules, "rules", "fuse")?;
            let data = require(&c.data, "data", "fuse")?;
            let out = c.out.clone().unwrap_or_else(|| PathBuf::from("out"));
            let p = run_fuse(model, rules, c.kb.as_deref(), data, c.label_column.as_deref(), &out)?;
            println!("fused verdicts written to {}", p.display());
        }
        Command::Report(c) => {
            let data = require(&c.data, "data", "report")?;
            let out = c.out.clone().unwrap_or_else(|| PathBuf::from("out"));
            let r = run_report(data, c.column.as_deref(), &out)?;
            println!("macro-F1 {:.4}  accuracy {:.4}", r.macro_f1, r.accuracy);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
