use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use swag_cli::commands::{cmd_evaluate, cmd_extract_priors, cmd_report, cmd_ribbon, cmd_simulate, cmd_train};
use swag_cli::config::RunConfig;
use swag_cli::exit_code;
use swag_core::{Result, SwagError};

#[derive(Parser)]
#[command(name = "swag", version, about = "Surgical workflow anticipation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic dataset into <out>/data
    Simulate,
    /// Count transition priors over the training split
    ExtractPriors,
    /// Train the configured method and write its checkpoint and log
    Train,
    /// Evaluate a method on the test split and write its report
    Evaluate,
    /// Render one video's predictions as CSV and SVG
    Ribbon,
    /// Summarize every report under <out>/reports
    Report,
}

#[derive(Args)]
struct Common {
    /// Flat key = value config file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Evaluation worker threads
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    method: Option<String>,
    /// Minutes: the model horizon for extract-priors and train, the scored
    /// horizon for evaluate and ribbon
    #[arg(long, global = true)]
    horizon: Option<usize>,
    /// Video rendered by ribbon
    #[arg(long, global = true)]
    video: Option<String>,
    /// Ribbon minutes as FROM:TO
    #[arg(long, global = true)]
    range: Option<String>,
    /// Extra key=value overrides, applied last
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let c = &cli.common;
    let mut cfg = match &c.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(jobs) = c.jobs {
        cfg.jobs = jobs;
    }
    if let Some(out) = &c.out {
        cfg.out = out.clone();
    }
    if let Some(method) = &c.method {
        cfg.set("method", method)?;
    }
    if let Some(h) = c.horizon {
        match cli.command {
            Command::Evaluate | Command::Ribbon => cfg.eval_horizon = Some(h),
            _ => cfg.model.horizon = h,
        }
    }
    if let Some(video) = &c.video {
        cfg.ribbon_video = Some(video.clone());
    }
    if let Some(range) = &c.range {
        let (from, to) = range
            .split_once(':')
            .ok_or_else(|| SwagError::Config(format!("range `{range}` is not FROM:TO")))?;
        cfg.set("ribbon_from", from)?;
        cfg.set("ribbon_to", to)?;
    }
    for kv in &c.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| SwagError::Config(format!("override `{kv}` is not KEY=VALUE")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = resolve(cli)?;
    match cli.command {
        Command::Simulate => {
            let m = cmd_simulate(&cfg)?;
            println!("wrote {} videos to {}", m.videos.len(), cfg.data_dir().display());
        }
        Command::ExtractPriors => {
            let p = cmd_extract_priors(&cfg)?;
            println!(
                "priors over {} minutes, {} unobserved rows -> {}",
                p.horizon(),
                p.unobserved().len(),
                cfg.priors_path().display()
            );
        }
        Command::Train => {
            let (_, log) = cmd_train(&cfg)?;
            println!(
                "{}: best epoch {} score {:.4} -> {}",
                cfg.method.as_str(),
                log.best_epoch,
                log.best_score,
                cfg.checkpoint_path().display()
            );
        }
        Command::Evaluate => {
            let r = cmd_evaluate(&cfg)?;
            println!(
                "{}: recognition F1 {:.4}, mean F1 {:.4}, SegF1 {:.4}",
                r.method, r.recognition.f1, r.mean_f1, r.seg_f1
            );
        }
        Command::Ribbon => {
            let r = cmd_ribbon(&cfg)?;
            println!("{}: {} x {} ribbon -> {}", r.video_id, r.times.len(), r.horizon, cfg.ribbons_dir().display());
        }
        Command::Report => {
            let reports = cmd_report(&cfg)?;
            println!("summarized {} reports in {}", reports.len(), cfg.reports_dir().display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
