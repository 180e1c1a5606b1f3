//! Command-line harness: `run` reproduces the empirical-size study, with
//! JSON sweep configs, flag overrides, CSV/markdown output, and
//! replication-level checkpointing; `diagnose` emits the reference-theory
//! diagnostics; `default-config` prints the bundled presets.
//!
//! Exit codes: 0 success, 2 configuration error, 3 runtime failure.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use kboot_cli::config::{CaseName, Design, ExperimentConfig, Method, SweepConfig};
use kboot_cli::diagnostics::run_diagnostics;
use kboot_cli::driver::run_sweep;
use kboot_cli::HarnessError;

#[derive(Parser)]
#[command(name = "kboot-cli", version, about = "Bootstrap size study for k-th order statistics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OutFormat {
    Csv,
    Markdown,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Preset {
    /// d=100, n=200, B1=299, B2=49, reps=2000 (under 30 minutes on 8 cores).
    Desk,
    /// d=400, B1=499, B2=99, full method set: the long-running study grid.
    Paper,
}

#[derive(Args, Clone, Debug)]
struct Overrides {
    /// JSON sweep config file (see `default-config`); flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in preset used when no --config is given.
    #[arg(long, value_enum, default_value = "desk")]
    preset: Preset,
    #[arg(long)]
    design: Option<Design>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    case: Option<CaseName>,
    /// Gamma shape; defaults to 1 (asymmetric) or 1/2 (symmetric).
    #[arg(long)]
    theta: Option<f64>,
    /// Comma-separated subset of EB,GB,MB,RB,BB,DB.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    b1: Option<usize>,
    #[arg(long)]
    b2: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 = all cores.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the Monte Carlo size study and emit the table.
    Run {
        #[command(flatten)]
        overrides: Overrides,
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: OutFormat,
        /// Checkpoint file enabling resume of interrupted runs.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Run the reference-theory diagnostics for one configuration cell.
    Diagnose {
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: OutFormat,
    },
    /// Print a preset sweep config as JSON.
    DefaultConfig {
        #[arg(long, value_enum, default_value = "desk")]
        preset: Preset,
    },
}

impl Overrides {
    fn sweep(&self) -> Result<SweepConfig, HarnessError> {
        let mut sweep = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| HarnessError::Config(format!("config read: {e}")))?;
                serde_json::from_str(&text)
                    .map_err(|e| HarnessError::Config(format!("config parse: {e}")))?
            }
            None => match self.preset {
                Preset::Desk => SweepConfig::desk_preset(),
                Preset::Paper => SweepConfig::paper_preset(),
            },
        };
        if let Some(v) = self.design {
            sweep.designs = vec![v];
        }
        if let Some(v) = self.rho {
            sweep.rhos = vec![v];
        }
        if let Some(v) = self.n {
            sweep.ns = vec![v];
        }
        if let Some(v) = self.d {
            sweep.d = v;
        }
        if let Some(v) = self.k {
            sweep.ks = vec![v];
        }
        if let Some(v) = self.case {
            sweep.cases = vec![v];
        }
        if self.theta.is_some() {
            sweep.theta = self.theta;
        }
        if let Some(v) = &self.methods {
            sweep.methods = v.clone();
        }
        if let Some(v) = self.alpha {
            sweep.alpha = v;
        }
        if let Some(v) = self.b1 {
            sweep.b1 = v;
        }
        if let Some(v) = self.b2 {
            sweep.b2 = v;
        }
        if let Some(v) = self.reps {
            sweep.reps = v;
        }
        if let Some(v) = self.seed {
            sweep.master_seed = v;
        }
        if let Some(v) = self.threads {
            sweep.threads = v;
        }
        Ok(sweep)
    }

    fn cells(&self) -> Result<Vec<ExperimentConfig>, HarnessError> {
        self.sweep()?.expand()
    }
}

fn write_output(path: &Option<PathBuf>, content: &str) -> Result<(), HarnessError> {
    match path {
        Some(p) => fs::write(p, content)
            .map_err(|e| HarnessError::Runtime(format!("write {}: {e}", p.display()))),
        None => {
            print!("{content}");
            std::io::stdout().flush().ok();
            Ok(())
        }
    }
}

fn execute(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run { overrides, out, format, checkpoint } => {
            let cells = overrides.cells()?;
            eprintln!(
                "running {} cell(s), {} replications each (DB levels: {:?}/{:?})",
                cells.len(),
                cells[0].reps,
                cells[0].db_law1,
                cells[0].db_law2,
            );
            let table = run_sweep(&cells, checkpoint.as_deref())?;
            let content = match format {
                OutFormat::Csv => table.to_csv_string(),
                OutFormat::Markdown => {
                    let mut buf = Vec::new();
                    table
                        .emit_markdown(&mut buf, &cells[0].methods)
                        .map_err(|e| HarnessError::Runtime(e.to_string()))?;
                    String::from_utf8(buf).expect("ascii output")
                }
            };
            write_output(&out, &content)
        }
        Command::Diagnose { overrides, out, format } => {
            let cells = overrides.cells()?;
            let report = run_diagnostics(&cells[0])?;
            let content = match format {
                OutFormat::Csv => report.to_csv_string(),
                OutFormat::Markdown => {
                    let mut buf = Vec::new();
                    report
                        .emit_markdown(&mut buf)
                        .map_err(|e| HarnessError::Runtime(e.to_string()))?;
                    String::from_utf8(buf).expect("ascii output")
                }
            };
            write_output(&out, &content)
        }
        Command::DefaultConfig { preset } => {
            let sweep = match preset {
                Preset::Desk => SweepConfig::desk_preset(),
                Preset::Paper => SweepConfig::paper_preset(),
            };
            let text = serde_json::to_string_pretty(&sweep)
                .map_err(|e| HarnessError::Runtime(e.to_string()))?;
            println!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(HarnessError::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(HarnessError::Runtime(msg)) => {
            eprintln!("runtime error: {msg}");
            ExitCode::from(3)
        }
    }
}
