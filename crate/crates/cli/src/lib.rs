//! Experiment harness around `wiedlab-core`: JSON configs, the run pipeline
//! (reference solve, epsilon sweep, diagnostics), artifact trees with hashed
//! manifests, calibration and the acceptance suite.

pub mod calibration;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod verify;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::{DiagnosticKind, Experiment};
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "wiedlab", version, about = "WIED approximation experiments for weighted combustion problems")]
pub struct Cli {
    /// Worker thread cap.
    #[arg(long, global = true, env = "WIEDLAB_THREADS")]
    pub threads: Option<usize>,
    /// Output directory (overrides the config's).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Require the initial trace to vanish on the lateral boundary.
    #[arg(long, global = true)]
    pub strict_support: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Full pipeline: reference, sweep, diagnostics.
    Run { config: PathBuf },
    /// One cold-started WIED level.
    Wied {
        config: PathBuf,
        #[arg(long)]
        eps: f64,
    },
    /// Parabolic reference only.
    Parabolic { config: PathBuf },
    /// Diagnostics on a stored field.
    Diagnose {
        config: PathBuf,
        #[arg(long)]
        field: PathBuf,
        /// Comma separated diagnostic names.
        #[arg(long, value_delimiter = ',')]
        which: Vec<String>,
        /// `eps` of the stored field, for `energy` and `truncation`.
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Acceptance suite; prints one row per criterion.
    Verify { config: PathBuf },
    /// Recomputes the calibration constants for a config.
    Calibrate {
        config: PathBuf,
        #[arg(long, default_value = "calibration")]
        id: String,
    },
}

fn load(cli: &Cli, path: &Path) -> CliResult<Experiment> {
    let mut exp = Experiment::load(path)?;
    if cli.strict_support && !exp.config.strict_support {
        let mut config = exp.config.clone();
        config.strict_support = true;
        exp = Experiment::from_config(config, exp.base_dir.clone(), exp.source.clone())?;
    }
    Ok(exp)
}

fn out_dir(cli: &Cli, exp: &Experiment) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| exp.output_dir())
}

fn configure_threads(threads: Option<usize>) -> CliResult<()> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        // A pool may already exist when embedded; the cap then stays as set.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

pub fn execute(cli: &Cli) -> CliResult<i32> {
    configure_threads(cli.threads)?;
    match &cli.command {
        Command::Run { config } => {
            let exp = load(cli, config)?;
            let out = out_dir(cli, &exp);
            let run = pipeline::run_experiment(&exp, &out)?;
            for s in &run.summary {
                println!("{:<18} {} value {:.4e} threshold {:.4e}", s.name, if s.pass { "pass" } else { "FAIL" }, s.value, s.threshold);
            }
            println!("artifacts in {}", out.display());
        }
        Command::Wied { config, eps } => {
            let exp = load(cli, config)?;
            let out = out_dir(cli, &exp);
            pipeline::run_single_level(&exp, *eps, &out)?;
            println!("artifacts in {}", out.display());
        }
        Command::Parabolic { config } => {
            let exp = load(cli, config)?;
            let out = out_dir(cli, &exp);
            pipeline::run_reference(&exp, &out)?;
            println!("artifacts in {}", out.display());
        }
        Command::Diagnose { config, field, which, eps } => {
            let exp = load(cli, config)?;
            let out = cli.out.clone().unwrap_or_else(|| exp.output_dir().join("diagnose"));
            let kinds = which.iter().map(|w| DiagnosticKind::parse(w.trim())).collect::<CliResult<Vec<_>>>()?;
            if kinds.is_empty() {
                return Err(CliError::Config("--which needs at least one diagnostic".into()));
            }
            for s in pipeline::diagnose(&exp, field, &kinds, *eps, &out)? {
                println!("{:<18} {} value {:.4e} threshold {:.4e}", s.name, if s.pass { "pass" } else { "FAIL" }, s.value, s.threshold);
            }
        }
        Command::Verify { config } => {
            let exp = load(cli, config)?;
            let out = cli.out.clone().unwrap_or_else(|| exp.output_dir().join("verify"));
            let rows = verify::run_verify(&exp, &out)?;
            for r in &rows {
                println!("{r}");
            }
            let failed = rows.iter().filter(|r| !r.pass).count();
            println!("{} of {} criteria pass", rows.len() - failed, rows.len());
            return Ok(if failed == 0 { 0 } else { 1 });
        }
        Command::Calibrate { config, id } => {
            let exp = load(cli, config)?;
            let path = match (&cli.out, exp.calibration_path()) {
                (Some(p), _) => p.clone(),
                (None, Some(p)) => p,
                (None, None) => return Err(CliError::Config("no calibration path in config; pass --out".into())),
            };
            let cal = calibration::calibrate(&exp, id)?;
            cal.save(&path)?;
            println!("{}", serde_json::to_string_pretty(&cal).map_err(|e| CliError::Io(e.to_string()))?);
        }
    }
    Ok(0)
}

/// Parses `args` and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
