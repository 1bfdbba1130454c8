use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use log::info;

use qpmix::config::{parse_config, Scenario, ScenarioSpec};
use qpmix::nn::Checkpoint;
use qpmix::runner::{default_workers, run_checkpoint_eval, run_convlab, run_scenario};

/// Channel-access experiments: train, evaluate and run the convergence lab.
#[derive(Parser)]
#[command(name = "qpmix", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every roster and seed of a scenario file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Evaluate a stored checkpoint under a scenario's test traffic.
    Eval {
        checkpoint: PathBuf,
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run the linear actor-critic lab of a scenario file.
    Convlab {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[derive(Args)]
struct Overrides {
    /// Comma-separated seed list.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Training slots (lab iterations for `convlab`).
    #[arg(long)]
    slots: Option<u64>,
    /// Worker threads.
    #[arg(long, env = "QPMIX_WORKERS")]
    workers: Option<usize>,
}

fn load(path: &Path, o: &Overrides) -> anyhow::Result<ScenarioSpec> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut spec = parse_config(&text).with_context(|| format!("parsing {}", path.display()))?;
    if let Some(seeds) = &o.seeds {
        spec.seeds = seeds.clone();
    }
    if let Some(dir) = &o.out_dir {
        spec.out_dir = dir.display().to_string();
    }
    if let Some(slots) = o.slots {
        if spec.scenario == Scenario::Convlab {
            spec.convlab.iterations = slots;
        } else {
            spec.slots = slots;
            spec.tail = spec.tail.min(slots);
        }
    }
    spec.validate().context("after command-line overrides")?;
    Ok(spec)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match real_main(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run { config, overrides } => {
            let spec = load(&config, &overrides)?;
            let workers = overrides.workers.unwrap_or_else(default_workers);
            if spec.scenario == Scenario::Convlab {
                return lab(&spec, workers);
            }
            let report = run_scenario(&spec, workers)?;
            info!("wrote {}", spec.out_dir);
            if report.failures() > 0 {
                bail!("{} of {} seed runs failed; see error.txt files", report.failures(), report.seeds.len());
            }
        }
        Command::Eval { checkpoint, config, overrides } => {
            let spec = load(&config, &overrides)?;
            let ck = Checkpoint::load(&checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
            let report = run_checkpoint_eval(&spec, &ck, overrides.workers.unwrap_or_else(default_workers))?;
            info!("wrote {}/eval", spec.out_dir);
            if report.failures() > 0 {
                bail!("{} of {} evaluations failed; see error.txt files", report.failures(), report.seeds.len());
            }
        }
        Command::Convlab { config, overrides } => {
            let spec = load(&config, &overrides)?;
            lab(&spec, overrides.workers.unwrap_or_else(default_workers))?;
        }
    }
    Ok(())
}

fn lab(spec: &ScenarioSpec, workers: usize) -> anyhow::Result<()> {
    let results = run_convlab(spec, workers)?;
    let failed = results.iter().filter(|(_, r)| r.is_err()).count();
    info!("wrote {}/convlab", spec.out_dir);
    if failed > 0 {
        bail!("{failed} of {} lab runs failed; see summary.csv", results.len());
    }
    Ok(())
}
