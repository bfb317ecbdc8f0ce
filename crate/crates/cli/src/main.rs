use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use ppgage_cli::{run_stage, ExperimentConfig, Overrides, Stage};
use ppgage_core::nn::LossKind;
use ppgage_core::survival::ThresholdMode;

/// Log verbosity, in `env_logger` syntax (e.g. `debug`, `ppgage_core=trace`).
const LOG_ENV: &str = "PPGAGE_LOG";

#[derive(Parser)]
#[command(name = "ppgage", version, about = "PPG age regression with Dist Loss and age-gap survival analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML experiment config; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// `dist` or `mae`.
    #[arg(long, global = true)]
    loss: Option<LossKind>,
    /// Gap stratification threshold in years, or `sd`.
    #[arg(long, global = true)]
    threshold: Option<ThresholdMode>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the synthetic cohort and its train/selection/holdout split.
    Generate,
    /// Train the regressor with the configured loss.
    Train {
        /// Continue the training checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Predict every recording and score each partition.
    Evaluate,
    /// Cox, Kaplan-Meier, spline, serial-group and logistic analyses of the gap.
    Analyze,
    /// Mean saliency maps at the probe ages.
    Saliency,
    /// Summarize all artifacts into one text report.
    Report,
    /// All stages in order.
    Run,
    /// Print the effective config as TOML.
    Config,
}

fn load(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    config.apply(&Overrides { seed: cli.seed, out_dir: cli.out.clone(), loss: cli.loss, threshold: cli.threshold })?;
    Ok(config)
}

fn execute(cli: &Cli) -> anyhow::Result<()> {
    let config = load(cli)?;
    let stages: Vec<Stage> = match cli.command {
        Command::Config => {
            print!("{}", config.to_toml());
            return Ok(());
        }
        Command::Generate => vec![Stage::Generate],
        Command::Train { resume } => vec![Stage::Train { resume }],
        Command::Evaluate => vec![Stage::Evaluate],
        Command::Analyze => vec![Stage::Analyze],
        Command::Saliency => vec![Stage::Saliency],
        Command::Report => vec![Stage::Report],
        Command::Run => Stage::PIPELINE.to_vec(),
    };
    for stage in stages {
        let outcome = run_stage(&config, stage).with_context(|| format!("stage {}", stage.name()))?;
        for path in &outcome.artifacts {
            println!("{}", path.display());
        }
        for name in &outcome.missing {
            println!("missing {name}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "info")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (code, status) = match err.downcast_ref::<ppgage_cli::Error>() {
                Some(e) => (e.code(), e.exit_code()),
                None => ("internal", 1),
            };
            // One machine-parsable line: code, then the full context chain.
            eprintln!("error[{code}]: {err:#}");
            ExitCode::from(status as u8)
        }
    }
}
