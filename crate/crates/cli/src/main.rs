use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use borderlab_cli::config::RunConfig;
use borderlab_cli::pipeline::run_pipeline;
use borderlab_cli::report::Format;
use borderlab_cli::run::{self, CommandOutput};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "borderlab", version, about = "Synthetic worker panels, DiD and synthetic-control estimators")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = "BORDERLAB_OUT")]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    format: Format,
    /// Worker threads for parallel sections.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Args, Default)]
struct Inputs {
    /// Worker-year panel CSV.
    #[arg(long)]
    panel: Option<PathBuf>,
    /// Municipal immigrant-share CSV.
    #[arg(long)]
    vz_ratio: Option<PathBuf>,
    /// Ground-truth JSON from `simulate`; adds truth and bias columns.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a panel with known effects.
    Simulate,
    /// Fit the configured estimator.
    Estimate(Inputs),
    /// Per-year treatment coefficients.
    EventStudy(Inputs),
    /// Synthetic control on state-year mean log wages.
    Scm(Inputs),
    /// Synthetic difference-in-differences.
    Sdid(Inputs),
    /// In-space and in-time placebo runs.
    Placebo(Inputs),
    /// Every stage from simulation to SDID, with a manifest.
    Pipeline,
    /// Structural wage multipliers and border-town equilibrium.
    Economy,
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply_seed(common.seed);
    Ok(cfg)
}

fn with_inputs(mut cfg: RunConfig, inputs: Inputs) -> RunConfig {
    cfg.input.panel = inputs.panel.or(cfg.input.panel);
    cfg.input.vz_ratio = inputs.vz_ratio.or(cfg.input.vz_ratio);
    cfg.input.truth = inputs.truth.or(cfg.input.truth);
    cfg
}

fn execute(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.common)?;
    let out = cfg.out_dir(cli.common.out.as_deref());
    let format = cli.common.format;
    let run_cmd = |cfg: RunConfig, f: fn(&RunConfig, &Path, Format) -> Result<CommandOutput>| -> Result<()> {
        cfg.validate()?;
        let output = f(&cfg, &out, format)?;
        print!("{}", output.stdout);
        Ok(())
    };
    match cli.command {
        Command::Simulate => run_cmd(cfg, run::cmd_simulate),
        Command::Estimate(i) => run_cmd(with_inputs(cfg, i), run::cmd_estimate),
        Command::EventStudy(i) => run_cmd(with_inputs(cfg, i), run::cmd_event_study),
        Command::Scm(i) => run_cmd(with_inputs(cfg, i), run::cmd_scm),
        Command::Sdid(i) => run_cmd(with_inputs(cfg, i), run::cmd_sdid),
        Command::Placebo(i) => run_cmd(with_inputs(cfg, i), run::cmd_placebo),
        Command::Economy => run_cmd(cfg, run::cmd_economy),
        Command::Pipeline => {
            cfg.validate()?;
            let report = run_pipeline(&cfg, &out)?;
            let text = match format {
                Format::Json => serde_json::to_string_pretty(&report.manifest)? + "\n",
                Format::Csv => report.comparison.to_csv()?,
                Format::Table => report.comparison.to_text(),
            };
            print!("{text}");
            if let Some(stage) = report.failure() {
                bail!(
                    "stage {} ({}) failed: {}",
                    stage.index,
                    stage.name,
                    stage.error.as_deref().unwrap_or("unknown error")
                );
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.common.threads.unwrap_or(0))
        .build()
        .context("building thread pool");
    let result = pool.and_then(|pool| pool.install(|| execute(cli)));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
