use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use homograd::analysis::classify;
use homograd::experiment::{self, SweepField};
use homograd::{load_scenario, Error, Scenario};

#[derive(Parser)]
#[command(
    name = "homograd",
    version,
    about = "Homogeneous gradient parameter estimators"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate every estimator and check the applicable bounds.
    Run {
        config: PathBuf,
        /// Output directory; overrides `outputs.directory`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Certify persistence of excitation of the regressor.
    Pe { config: PathBuf },
    /// Print convergence-time bounds and convergence classes without simulating.
    Bounds { config: PathBuf },
    /// Re-run the scenario over a list of values of one field.
    Sweep {
        config: PathBuf,
        /// One of p, L, x0, dwell.
        #[arg(long)]
        vary: String,
        #[arg(long, num_args = 1.., required = true, allow_negative_numbers = true)]
        values: Vec<f64>,
        /// Write the rows as CSV to this file.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Write the Lyapunov values of all estimators on a shared grid as CSV.
    Compare {
        config: PathBuf,
        /// Defaults to standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn print_json<T: Serialize>(value: &T) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn output_dir(scenario: &Scenario, cfg: &Path, out: Option<PathBuf>) -> Option<PathBuf> {
    out.or_else(|| {
        scenario.config.outputs.directory.as_ref().map(|d| {
            let d = PathBuf::from(d);
            if d.is_absolute() {
                d
            } else {
                cfg.parent().unwrap_or(Path::new(".")).join(d)
            }
        })
    })
}

fn execute(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Run { config, out } => {
            let scenario = load_scenario(&config)?;
            let dir = output_dir(&scenario, &config, out);
            let (summary, _) = experiment::run(&scenario, dir.as_deref())?;
            print_json(&summary)
        }
        Command::Pe { config } => {
            let scenario = load_scenario(&config)?;
            let cert = experiment::certify_scenario(&scenario)?;
            print_json(
                &json!({ "scenario": scenario.name(), "pe": cert.is_pe(), "certificate": cert }),
            )
        }
        Command::Bounds { config } => {
            let scenario = load_scenario(&config)?;
            let cert = experiment::certify_scenario(&scenario)?;
            let mut rows = Vec::new();
            for spec in &scenario.estimators {
                rows.push(json!({
                    "label": spec.label(),
                    "class": classify(spec, scenario.dimension(), &cert),
                    "bound": experiment::applicable_bound(&scenario, spec, &cert)?,
                }));
            }
            print_json(
                &json!({ "scenario": scenario.name(), "certificate": cert, "estimators": rows }),
            )
        }
        Command::Sweep {
            config,
            vary,
            values,
            csv,
        } => {
            let scenario = load_scenario(&config)?;
            let field: SweepField = vary.parse()?;
            let rows = experiment::sweep(&scenario, field, &values)?;
            if let Some(path) = csv {
                let mut w = BufWriter::new(
                    File::create(&path).with_context(|| path.display().to_string())?,
                );
                experiment::write_sweep_csv(&rows, &mut w)?;
                w.flush()?;
            }
            print_json(&json!({ "scenario": scenario.name(), "field": field, "rows": rows }))
        }
        Command::Compare { config, out } => {
            let scenario = load_scenario(&config)?;
            let trajectories = experiment::simulate(&scenario)?;
            match out {
                Some(path) => {
                    if let Some(parent) = path.parent() {
                        fs::create_dir_all(parent)?;
                    }
                    let mut w = BufWriter::new(File::create(&path)?);
                    experiment::write_comparison(&trajectories, &mut w)?;
                    w.flush()?;
                }
                None => {
                    let stdout = std::io::stdout();
                    experiment::write_comparison(&trajectories, BufWriter::new(stdout.lock()))?;
                }
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let numerical = err.downcast_ref::<Error>().is_some_and(Error::is_numerical);
            ExitCode::from(if numerical { 2 } else { 1 })
        }
    }
}
