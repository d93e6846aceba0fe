//! Thin CLI over the pipeline: simulate, fit, classify, evaluate.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use trajinr::pipeline::{
    cmd_classify, cmd_evaluate, cmd_fit, cmd_simulate, exit_code, load_config, PipelineConfig,
};
use trajinr::trajectory::Scheme;
use trajinr::Result;

#[derive(Parser)]
#[command(name = "trajinr", about = "Longitudinal phantom INR fitting and weight-space trajectory classification", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// TOML pipeline configuration (must set the master seed).
    #[arg(long)]
    config: PathBuf,
    /// Output directory override.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Finetune worker pool size (0 = all logical cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Configuration preset override.
    #[arg(long, value_parser = ["paper", "desk"])]
    preset: Option<String>,
    /// Acquisition scheme override.
    #[arg(long, value_parser = ["regular", "irregular"])]
    scheme: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the longitudinal phantom cohort and its manifest.
    Simulate(CommonArgs),
    /// Pretrain the shared INR initialization and finetune every record.
    Fit(CommonArgs),
    /// Train stream-selection classifiers and report test accuracies.
    Classify(CommonArgs),
    /// Reconstruct the yearly grid and report grouped image quality.
    Evaluate(CommonArgs),
}

fn build_config(args: &CommonArgs) -> Result<PipelineConfig> {
    let mut config = load_config(&args.config, args.preset.as_deref())?;
    if let Some(out) = &args.out {
        config.out_dir = out.clone();
    }
    if let Some(workers) = args.workers {
        config.workers = workers;
    }
    if let Some(scheme) = &args.scheme {
        config.scheme = match scheme.as_str() {
            "regular" => Scheme::Regular,
            _ => Scheme::Irregular,
        };
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(args) => cmd_simulate(&build_config(args)?).map(|_| ()),
        Command::Fit(args) => cmd_fit(&build_config(args)?),
        Command::Classify(args) => cmd_classify(&build_config(args)?).map(|_| ()),
        Command::Evaluate(args) => cmd_evaluate(&build_config(args)?).map(|_| ()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err) as u8)
        }
    }
}
