//! Command-line frontend: synthetic dataset generation, training,
//! evaluation, attention overlays and causal filtering.

mod commands;
mod config;

use std::path::PathBuf;

use anyhow::bail;
use clap::{Parser, Subcommand, ValueEnum};

use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "steerviz",
    version,
    about = "Attention-based steering prediction with causal saliency filtering"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration; omitted fields take desk-scale defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed recorded in outputs and propagated to every stage.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Dataset directory (frames/, frames.csv, telemetry.csv).
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,

    /// Parameter checkpoint (.capt with model.json next to it).
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,

    /// Attention-spread penalty coefficient.
    #[arg(long, global = true)]
    lambda: Option<f64>,

    /// Penalty form.
    #[arg(long, global = true, value_enum)]
    penalty: Option<PenaltyArg>,

    /// Exponential smoothing factor for telemetry.
    #[arg(long = "alpha-s", global = true)]
    alpha_s: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PenaltyArg {
    Squared,
    Literal,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with ground-truth masks.
    Synth,
    /// Train the attention model on a dataset.
    Train,
    /// Report MAE/SD in degrees for a checkpoint on a dataset.
    Evaluate {
        /// Also sweep the smoothing factor and write alpha_sweep.csv.
        #[arg(long)]
        alpha_sweep: bool,
    },
    /// Write per-frame attention overlay images.
    Attend,
    /// Causality-filter attention blobs; write refined overlays and the
    /// JSONL report.
    Causal,
}

fn build_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(lambda) = cli.lambda {
        if lambda < 0.0 {
            bail!("--lambda must be >= 0");
        }
        cfg.train.loss.lambda = lambda;
    }
    if let Some(penalty) = cli.penalty {
        cfg.train.loss.penalty_form = match penalty {
            PenaltyArg::Squared => steerviz::training::PenaltyForm::Squared,
            PenaltyArg::Literal => steerviz::training::PenaltyForm::Literal,
        };
    }
    if let Some(alpha) = cli.alpha_s {
        if !(0.0..=1.0).contains(&alpha) {
            bail!("--alpha-s must be within [0, 1]");
        }
        cfg.set_alpha_s(alpha);
    }
    cfg.finalize()?;
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = build_config(&cli)?;
    let need = |opt: &Option<PathBuf>, flag: &str| -> anyhow::Result<PathBuf> {
        opt.clone()
            .ok_or_else(|| anyhow::anyhow!("this subcommand requires {flag}"))
    };
    match cli.command {
        Command::Synth => {
            let out = need(&cli.out, "--out")?;
            commands::cmd_synth(&cfg, &out)
        }
        Command::Train => {
            let dataset = need(&cli.dataset, "--dataset")?;
            let out = need(&cli.out, "--out")?;
            commands::cmd_train(&cfg, &dataset, &out)
        }
        Command::Evaluate { alpha_sweep } => {
            let dataset = need(&cli.dataset, "--dataset")?;
            let checkpoint = need(&cli.checkpoint, "--checkpoint")?;
            commands::cmd_evaluate(&cfg, &dataset, &checkpoint, cli.out.as_deref(), alpha_sweep)
        }
        Command::Attend => {
            let dataset = need(&cli.dataset, "--dataset")?;
            let checkpoint = need(&cli.checkpoint, "--checkpoint")?;
            let out = need(&cli.out, "--out")?;
            commands::cmd_attend(&cfg, &dataset, &checkpoint, &out)
        }
        Command::Causal => {
            let dataset = need(&cli.dataset, "--dataset")?;
            let checkpoint = need(&cli.checkpoint, "--checkpoint")?;
            let out = need(&cli.out, "--out")?;
            commands::cmd_causal(&cfg, &dataset, &checkpoint, &out)
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
