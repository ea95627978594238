use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mixea::commands::{curve_csv, SimulateOverrides};
use mixea::config::CurveOptions;
use mixea::report::write_file;
use mixea::{
    cmd_analyze, cmd_curve, cmd_design, cmd_simulate, ExperimentConfig, FailureKind, Outcome,
};

/// Exact analysis, simulation and design of pure and mixed strategy (1+1) EAs.
#[derive(Parser)]
#[command(name = "mixea", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Spectral radius, convergence rate and hitting times per strategy.
    Analyze(Common),
    /// Monte Carlo replicas, cross-validated against the exact analysis.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long = "max-gens")]
        max_gens: Option<u64>,
        /// Run replicas on one thread.
        #[arg(long)]
        serial: bool,
    },
    /// Mutual-complementarity certificate and the designed mixed strategy.
    Design(Common),
    /// Rate/hitting-time curve over a range of spectral radii.
    Curve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        rho_min: Option<f64>,
        #[arg(long)]
        rho_max: Option<f64>,
        #[arg(long)]
        step: Option<f64>,
    },
}

fn finish(outcome: Outcome, out: &Path) -> anyhow::Result<i32> {
    outcome.bundle.write(out)?;
    Ok(outcome.exit_code())
}

fn run(cli: Cli) -> anyhow::Result<i32> {
    match cli.command {
        Command::Analyze(c) => finish(cmd_analyze(&ExperimentConfig::load(&c.config)?)?, &c.out),
        Command::Design(c) => finish(cmd_design(&ExperimentConfig::load(&c.config)?)?, &c.out),
        Command::Simulate {
            common,
            runs,
            seed,
            max_gens,
            serial,
        } => {
            let cfg = ExperimentConfig::load(&common.config)?;
            let overrides = SimulateOverrides {
                runs,
                seed,
                max_generations: max_gens,
                serial,
            };
            finish(cmd_simulate(&cfg, &overrides)?, &common.out)
        }
        Command::Curve {
            config,
            out,
            rho_min,
            rho_max,
            step,
        } => {
            let mut opts = match config {
                Some(p) => ExperimentConfig::load(&p)?.curve.unwrap_or_default(),
                None => CurveOptions::default(),
            };
            opts.rho_min = rho_min.unwrap_or(opts.rho_min);
            opts.rho_max = rho_max.unwrap_or(opts.rho_max);
            opts.step = step.unwrap_or(opts.step);
            let points = cmd_curve(&opts)?;
            std::fs::create_dir_all(&out)?;
            write_file(&out.join("curve.csv"), &curve_csv(&points)?)?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            let kind = FailureKind::of(&err);
            eprintln!("error: {err:#}");
            ExitCode::from(kind.exit_code() as u8)
        }
    }
}
