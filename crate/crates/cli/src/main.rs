use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use sdeim::assimilation::{das_deim, relative_error_series, vanilla_trajectory};
use sdeim::experiment::{self, ExperimentConfig};
use sdeim::properties::{self, PropertyOptions};
use sdeim::sensing::build_deim_core;
use sdeim::{io, Error};

#[derive(Parser)]
#[command(name = "sdeim", version, about = "Sparse DEIM reconstruction experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the training and test trajectories.
    Generate(RunArgs),
    /// Generate, then extract the POD basis.
    Pod(RunArgs),
    /// Up to sensor placement.
    Place(RunArgs),
    /// Up to the vanilla DEIM baseline on the test observations.
    Reconstruct(RunArgs),
    /// Up to DAS-DEIM kernel assimilation.
    Assimilate(RunArgs),
    /// Every stage plus prefactor curves and summary.json.
    Pipeline(RunArgs),
    /// Run the invariant suites and print a JSON report.
    Properties(PropertyArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON configuration file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration (lorenz63-m1, lorenz63, lorenz63-noisy, lorenz96).
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the configured one.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    noise_std: Option<f64>,
}

#[derive(Args)]
struct PropertyArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the report to this directory as properties.json.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, hide = true)]
    corrupt_basis: bool,
}

impl RunArgs {
    fn config(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), None) => ExperimentConfig::load(path)?,
            (None, Some(name)) => experiment::preset(name)?,
            (None, None) => bail!("one of --config or --preset is required"),
            (Some(_), Some(_)) => unreachable!("clap rejects both"),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(std) = self.noise_std {
            cfg.noise_std = std;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(PartialEq, Clone, Copy)]
enum Stage {
    Generate,
    Pod,
    Place,
    Reconstruct,
    Assimilate,
}

fn run_stages(cfg: &ExperimentConfig, last: Stage) -> sdeim::Result<()> {
    let dir = cfg.output_dir.as_path();
    let (train, test) = experiment::generate(cfg).map_err(|e| e.in_stage("generate"))?;
    experiment::write_trajectories(dir, &train, &test)?;
    if last == Stage::Generate {
        return Ok(());
    }
    let basis = experiment::build_basis(cfg, &train).map_err(|e| e.in_stage("pod"))?;
    experiment::write_basis(dir, &basis)?;
    if last == Stage::Pod {
        return Ok(());
    }
    let sel = experiment::place(cfg, &basis).map_err(|e| e.in_stage("place"))?;
    io::write_indices(&dir.join("sensors.csv"), sel.indices())?;
    if last == Stage::Place {
        return Ok(());
    }
    let core = build_deim_core(&basis, &sel).map_err(|e| e.in_stage("place"))?;
    let obs = experiment::observe_test(cfg, &test, &sel).map_err(|e| e.in_stage("observe"))?;
    io::write_series(&dir.join("observations.csv"), obs.times(), obs.samples())?;
    let vanilla = vanilla_trajectory(&core, &obs).map_err(|e| e.in_stage("reconstruct"))?;
    let errors = relative_error_series(&vanilla, &test).map_err(|e| e.in_stage("reconstruct"))?;
    io::write_trajectory(&dir.join("reconstruction_vanilla.csv"), &vanilla)?;
    io::write_scalar_series(&dir.join("errors_vanilla.csv"), &errors.times, &errors.values)?;
    if last == Stage::Reconstruct {
        return Ok(());
    }
    let f = cfg.vector_field()?;
    let run = das_deim(&core, f.as_ref(), &obs, &DVector::zeros(core.kernel_dim()), cfg.kernel_dt())
        .and_then(|r| r.with_truth(&test))
        .map_err(|e| e.in_stage("assimilate"))?;
    io::write_series(&dir.join("xi_path.csv"), &run.times, &run.xi_path)?;
    io::write_trajectory(&dir.join("reconstruction_dasdeim.csv"), &run.reconstruction)?;
    if let Some(e) = &run.error_series {
        io::write_scalar_series(&dir.join("errors_dasdeim.csv"), &e.times, &e.values)?;
    }
    Ok(())
}

fn prepare(args: &RunArgs) -> anyhow::Result<ExperimentConfig> {
    let cfg = args.config()?;
    create_dir(&cfg.output_dir)?;
    Ok(cfg)
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let stage = match &cli.command {
        Command::Generate(a) => Some((a, Stage::Generate)),
        Command::Pod(a) => Some((a, Stage::Pod)),
        Command::Place(a) => Some((a, Stage::Place)),
        Command::Reconstruct(a) => Some((a, Stage::Reconstruct)),
        Command::Assimilate(a) => Some((a, Stage::Assimilate)),
        _ => None,
    };
    if let Some((args, last)) = stage {
        let cfg = prepare(args)?;
        run_stages(&cfg, last)?;
        eprintln!("wrote {}", cfg.output_dir.display());
        return Ok(ExitCode::SUCCESS);
    }
    match cli.command {
        Command::Pipeline(args) => {
            let cfg = prepare(&args)?;
            let result = experiment::cmd_pipeline(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&result.summary)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Properties(args) => {
            let report = properties::run_all(&PropertyOptions {
                seed: args.seed,
                corrupt_basis: args.corrupt_basis,
            });
            let json = serde_json::to_string_pretty(&report)?;
            if let Some(dir) = &args.out {
                create_dir(dir)?;
                let path = dir.join("properties.json");
                std::fs::write(&path, &json).with_context(|| format!("writing {}", path.display()))?;
            }
            println!("{json}");
            for s in &report.suites {
                let tag = if s.passed { "ok" } else { "FAILED" };
                eprintln!("{:<28} {:>6} cases {:>4} failures  {tag}", s.name, s.cases, s.failures);
            }
            Ok(if report.passed { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        _ => unreachable!("stage commands handled above"),
    }
}
