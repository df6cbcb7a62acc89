use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tdefie::config::ExperimentConfig;
use tdefie::experiments;
use tdefie::{Error, Result};

/// Time-domain EFIE scattering studies on closed PEC surfaces.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `run.output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for randomized probes; recorded in the manifest.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Condition number of the step-zero matrix across time steps.
    CondVsDt,
    /// Condition number of the step-zero matrix across icosphere refinements.
    CondVsH,
    /// Plane-wave scattering run with probe currents and DC reports.
    Scatter,
    /// Decay tables and binary dumps of the convolution weights.
    WeightsInspect,
    /// Mesh statistics and validation.
    MeshInfo,
}

fn execute(cli: &Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let out = cli.out.clone().unwrap_or_else(|| cfg.run.output_dir.clone());
    match cli.command {
        Command::CondVsDt => {
            for r in experiments::run_cond_vs_dt(&cfg, &out, cli.seed)? {
                println!("dt = {:.3e} s  {:<20} cond = {:.4e}", r.dt, r.kind.name(), r.cond);
            }
        }
        Command::CondVsH => {
            for r in experiments::run_cond_vs_h(&cfg, &out, cli.seed)? {
                println!("N_s = {:<5} h = {:.4e} m  {:<20} cond = {:.4e}", r.n_s, r.h, r.kind.name(), r.cond);
            }
        }
        Command::Scatter => {
            let outcome = experiments::run_scatter(&cfg, &out, cli.seed)?;
            println!("{} steps of {:.3e} s", outcome.steps, outcome.dt);
            for r in &outcome.runs {
                println!(
                    "{:<20} peak = {:.4e} A/m  rho_dc = {:.3e}  {}",
                    r.kind.name(),
                    r.report.peak,
                    r.report.rho_dc,
                    r.report.verdict()
                );
            }
        }
        Command::WeightsInspect => {
            for s in experiments::run_weights_inspect(&cfg, &out, cli.seed)? {
                println!(
                    "{:<20} {:<7} {} weights, last/first = {:.3e}",
                    s.kind.name(),
                    s.sequence,
                    s.count,
                    s.last_relative
                );
            }
        }
        Command::MeshInfo => println!("{}", experiments::run_mesh_info(&cfg, &out, cli.seed)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
