use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rcm_core::config::{ExperimentConfig, Stage};
use rcm_core::harness::{execute, load_config, report, resolve_out_dir, OUT_ROOT_VAR};
use rcm_core::Error;
use serde_json::json;

/// Random conductance model experiments: environments, walks, heat kernels and LIL statistics.
#[derive(Parser)]
#[command(name = "rcm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the stages listed in the config (`stages = ...`).
    Run(Common),
    /// Sample environments and write cluster summaries and sidecars.
    Env(Common),
    /// Simulate walk ensembles and write checkpoint summaries.
    Walk(Common),
    /// Heat kernel tables, on-diagonal exponent and envelope fits.
    Hk(Common),
    /// Exit-time records and normalized exit-time scaling.
    Exit(Common),
    /// Walk ensembles reduced to LIL statistics.
    Lil(Common),
    /// Confinement probabilities against the (1+k)^{-2/3} target.
    Corollary(Common),
    /// Survival of the volume-regularity scale over seeds.
    Regularity(Common),
    /// Merge prior run directories into dispersion and envelope summaries.
    Report {
        /// Run directories, or directories containing run directories.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, env = OUT_ROOT_VAR, default_value = "rcm-out")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// Config file, or a manifest.json from an earlier run.
    #[arg(long)]
    config: PathBuf,
    /// Overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; overrides `jobs`.
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory; defaults to `$RCM_OUT_ROOT/<command>-<config hash>`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Accept exponents that differ from the model catalog.
    #[arg(long)]
    override_exponents: bool,
}

fn prepare(common: &Common, stage: Option<Stage>) -> Result<ExperimentConfig, Error> {
    let mut config = load_config(&common.config)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(jobs) = common.jobs {
        config.jobs = jobs;
    }
    if common.override_exponents {
        config.override_exponents = true;
    }
    if let Some(stage) = stage {
        config.stages = vec![stage];
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> Result<serde_json::Value, Error> {
    let (name, common, stage) = match &cli.command {
        Command::Run(c) => ("run", c, None),
        Command::Env(c) => ("env", c, Some(Stage::Env)),
        Command::Walk(c) => ("walk", c, Some(Stage::Walk)),
        Command::Hk(c) => ("hk", c, Some(Stage::Hk)),
        Command::Exit(c) => ("exit", c, Some(Stage::Exit)),
        Command::Lil(c) => ("lil", c, Some(Stage::Lil)),
        Command::Corollary(c) => ("corollary", c, Some(Stage::Corollary)),
        Command::Regularity(c) => ("regularity", c, Some(Stage::Regularity)),
        Command::Report { inputs, out } => {
            let written = report(inputs, out)?;
            return Ok(json!({ "out": out, "files": written }));
        }
    };
    let config = prepare(common, stage)?;
    let dest = resolve_out_dir(common.out.as_deref(), &config, name);
    let manifest = execute(&config, name, &dest)?;
    Ok(json!({
        "out": dest,
        "config_sha256": manifest.config_sha256,
        "files": manifest.files.len(),
    }))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let kind = e.kind();
            let field = match &e {
                Error::InvalidParameter { field, .. } => Some(field.clone()),
                _ => None,
            };
            let body = json!({
                "error": {
                    "kind": kind.as_str(),
                    "exit_code": kind.exit_code(),
                    "field": field,
                    "message": e.to_string(),
                }
            });
            eprintln!("{body}");
            ExitCode::from(kind.exit_code() as u8)
        }
    }
}
