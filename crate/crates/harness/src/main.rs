use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use pwa_harness::curve::replication_file;
use pwa_harness::{aggregate_dir, preset, run, ExperimentConfig, ReplicationFailure, RunError, PRESET_NAMES};

#[derive(Parser)]
#[command(name = "pwa", version, about = "Viapoint-task experiments with CEM, CMA-ES and PI² variants")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config and write a learning curve per replication.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        replications: Option<usize>,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Write the configs of a figure's experiment matrix.
    Preset {
        /// One of fig3, fig5, fig6.
        name: String,
        #[arg(long)]
        out: PathBuf,
        /// Also run every written config into the same directory.
        #[arg(long)]
        run: bool,
    },
    /// Average `<name>_rep<r>.csv` curves in a directory per experiment.
    Aggregate { dir: PathBuf },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            seed,
            replications,
            out,
        } => {
            let mut c = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                c.seed = s;
            }
            if let Some(r) = replications {
                c.replications = r;
            }
            c.validate()?;
            run_config(&c, &out)
        }
        Command::Preset { name, out, run } => {
            let Some(configs) = preset(&name) else {
                bail!("unknown preset {name:?}; expected one of {}", PRESET_NAMES.join(", "));
            };
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            for c in &configs {
                let path = out.join(format!("{}.toml", c.name));
                std::fs::write(&path, c.to_toml()).with_context(|| format!("writing {}", path.display()))?;
                println!("{}", path.display());
            }
            if run {
                for c in &configs {
                    run_config(c, &out)?;
                }
            }
            Ok(())
        }
        Command::Aggregate { dir } => {
            let written = aggregate_dir(&dir).with_context(|| format!("aggregating {}", dir.display()))?;
            if written.is_empty() {
                bail!("no *_rep<r>.csv files in {}", dir.display());
            }
            for p in written {
                println!("{}", p.display());
            }
            Ok(())
        }
    }
}

fn run_config(config: &ExperimentConfig, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let results = run(config)?;
    let mut failures = Vec::new();
    for (r, result) in results.into_iter().enumerate() {
        let path = out.join(replication_file(&config.name, r));
        let curve = match &result {
            Ok(curve) => curve,
            Err(f) => &f.partial,
        };
        curve.save(&path).with_context(|| format!("writing {}", path.display()))?;
        match result {
            Ok(curve) => println!(
                "{}: initial cost {:.6e}, final cost {:.6e}, final lambda {:.6e}",
                path.display(),
                curve.initial_cost().unwrap_or(f64::NAN),
                curve.final_cost().unwrap_or(f64::NAN),
                curve.final_lambda().unwrap_or(f64::NAN),
            ),
            Err(f) => failures.push(f),
        }
    }
    if failures.is_empty() {
        return Ok(());
    }
    let path = out.join(format!("{}_diagnostics.csv", config.name));
    std::fs::write(&path, diagnostics_csv(&failures)?).with_context(|| format!("writing {}", path.display()))?;
    bail!(
        "{} of {} replications of {} aborted; see {}",
        failures.len(),
        config.replications,
        config.name,
        path.display()
    )
}

fn diagnostics_csv(failures: &[ReplicationFailure]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["replication", "seed", "update", "rollout", "value", "message"])?;
    for f in failures {
        let (update, rollout, value) = match &f.error {
            RunError::NonFiniteCost { update, rollout, value } => (
                update.to_string(),
                rollout.map_or_else(|| "noise_free".to_string(), |k| k.to_string()),
                format!("{value:e}"),
            ),
            RunError::Core(_) => (f.partial.rows.len().to_string(), String::new(), String::new()),
        };
        w.write_record([
            f.replication.to_string(),
            f.seed.to_string(),
            update,
            rollout,
            value,
            f.error.to_string(),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}
