use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use passivity_cert::commands::{self, Consistency};
use passivity_cert::{load_config, ConfigFile, EXIT_CONFIG, EXIT_NOT_PASSIVE, EXIT_PASSIVE};

#[derive(Parser)]
#[command(
    name = "passivity-cert",
    version,
    about = "Strict-passivity certificates and simulation for static AC loads"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Certify every load at one voltage amplitude. Exit 0 if all are strictly passive, 1 otherwise.
    Certify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        voltage: f64,
        /// Also write the certificates as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed of the monotonicity sampling; overrides `analysis.seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Voltage intervals of strict passivity per load, as CSV.
    Limits {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the scenario, write the trace CSV and print a per-segment summary.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Run only this entry of a scenario suite.
        #[arg(long)]
        scenario: Option<String>,
    },
    /// Passive windows over a range of one load parameter, as CSV.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// `<load id>.<parameter>`, e.g. `load_zip.y_p`.
        #[arg(long)]
        param: String,
        /// `lo:hi:n`
        #[arg(long)]
        range: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// `trace.csv` becomes `trace.<name>.csv` for suite entries.
fn suffixed(path: &Path, name: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let file = match path.extension() {
        Some(ext) => format!("{stem}.{name}.{}", ext.to_string_lossy()),
        None => format!("{stem}.{name}"),
    };
    path.with_file_name(file)
}

fn simulate(file: &ConfigFile, out: &Path, only: Option<&str>) -> Result<()> {
    let docs: Vec<_> = file
        .documents()
        .into_iter()
        .filter(|(name, _)| only.is_none() || *name == only)
        .collect();
    if docs.is_empty() {
        bail!("no scenario named `{}`", only.unwrap_or_default());
    }
    for (name, doc) in docs {
        let sim = commands::simulate(doc)?;
        let path = match name {
            Some(n) if only.is_none() => suffixed(out, n),
            _ => out.to_path_buf(),
        };
        fs::write(&path, sim.trace.to_csv_string()).with_context(|| format!("writing {}", path.display()))?;
        if let Some(n) = name {
            println!("scenario {n}");
        }
        print!("{}", commands::summary_table(&sim.verdicts));
        let unguaranteed = sim
            .verdicts
            .iter()
            .filter(|v| v.consistency == Consistency::NotGuaranteed)
            .count();
        println!("trace: {} rows -> {}", sim.trace.len(), path.display());
        if unguaranteed > 0 {
            println!("{unguaranteed} segment(s) left the certified window during the transient");
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<i32> {
    let config = match &cli.command {
        Command::Certify { config, .. }
        | Command::Limits { config, .. }
        | Command::Simulate { config, .. }
        | Command::Sweep { config, .. } => config,
    };
    let file = load_config(config)?;
    match cli.command {
        Command::Certify { voltage, out, seed, .. } => {
            let rows = commands::certify_loads(&file, voltage, seed)?;
            print!("{}", commands::certify_table(&rows));
            if let Some(p) = out {
                emit(Some(&p), &commands::certify_csv(&rows))?;
            }
            Ok(if commands::all_passive(&rows) {
                EXIT_PASSIVE
            } else {
                EXIT_NOT_PASSIVE
            })
        }
        Command::Limits { out, .. } => {
            let limits = commands::limits(&file)?;
            for w in &limits.warnings {
                eprintln!("warning: {w}");
            }
            emit(out.as_deref(), &commands::limits_csv(&limits))?;
            Ok(0)
        }
        Command::Simulate { out, scenario, .. } => {
            simulate(&file, &out, scenario.as_deref())?;
            Ok(0)
        }
        Command::Sweep { param, range, out, .. } => {
            let values = commands::parse_range(&range)?;
            let rows = commands::sweep(&file, &param, &values)?;
            emit(out.as_deref(), &commands::sweep_csv(&rows))?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_CONFIG as u8)
        }
    }
}
