//! Command-line front end: `run`, `compare`, `gen-data`, `calibrate` and
//! `partition-inspect`.
//!
//! Exit codes: 0 on success, 2 for configuration and usage errors, 1 for
//! runtime failures.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::experiment::{self, ExperimentConfig, ExperimentData};
use crate::logs::{self, TableFormat};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "fedsq", version, about = "Federated learning simulator with structural/quantitative dual copies")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Experiment TOML file.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the experiment seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the number of client worker threads.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Calibrate, then federate every configured strategy.
    Run(ConfigArgs),
    /// Best validation accuracy and its round for each round log.
    Compare {
        #[arg(required = true)]
        logs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = TableFormat::Table)]
        format: TableFormat,
    },
    /// Write the source, probe, target and validation datasets.
    GenData(ConfigArgs),
    /// Pretrain and select the freezing schedule.
    Calibrate(ConfigArgs),
    /// Draw the client partition and report its statistics.
    PartitionInspect {
        #[command(flatten)]
        args: ConfigArgs,
        #[arg(long, value_enum, default_value_t = TableFormat::Table)]
        format: TableFormat,
    },
}

fn load(args: &ConfigArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    cfg.override_with(args.seed, args.out.clone(), args.workers)?;
    Ok(cfg)
}

/// Executes a parsed command, writing human-readable output to `out`.
pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let io = |e: std::io::Error| Error::Internal(format!("stdout: {e}"));
    match cli.command {
        Command::Run(args) => {
            let cfg = load(&args)?;
            let outcome = experiment::run(&cfg)?;
            writeln!(out, "schedule {}", outcome.summary.schedule).map_err(io)?;
            write!(out, "{}", outcome.summary.to_csv()).map_err(io)?;
            writeln!(out, "wrote {}", cfg.out_dir.display()).map_err(io)?;
        }
        Command::Compare { logs, format } => {
            write!(out, "{}", logs::compare(&logs, format)?).map_err(io)?;
        }
        Command::GenData(args) => {
            let cfg = load(&args)?;
            let data = ExperimentData::generate(&cfg)?;
            for path in data.store(&cfg.out_dir)? {
                writeln!(out, "wrote {}", path.display()).map_err(io)?;
            }
        }
        Command::Calibrate(args) => {
            let cfg = load(&args)?;
            let data = ExperimentData::generate(&cfg)?;
            let cal = experiment::calibrate(&cfg, &data)?;
            experiment::store_calibration(&cal, &cfg.out_dir)?;
            if let Some(report) = &cal.report {
                for c in &report.candidates {
                    writeln!(out, "{}  {:.4}", c.schedule, c.accuracy).map_err(io)?;
                }
                writeln!(out, "stop: {:?}", report.stop_reason).map_err(io)?;
            }
            writeln!(out, "selected {}", cal.schedule).map_err(io)?;
        }
        Command::PartitionInspect { args, format } => {
            let cfg = load(&args)?;
            let (plan, report) = experiment::inspect_partition(&cfg)?;
            std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
            plan.save(cfg.out_dir.join("partition.json"))?;
            match format {
                TableFormat::Csv => {
                    writeln!(out, "client,size,histogram").map_err(io)?;
                    for (i, (n, h)) in report.sizes.iter().zip(&report.histograms).enumerate() {
                        let h: Vec<String> = h.iter().map(usize::to_string).collect();
                        writeln!(out, "{i},{n},{}", h.join(";")).map_err(io)?;
                    }
                }
                TableFormat::Table => {
                    writeln!(
                        out,
                        "{}  seed {}  attempts {}  heterogeneity {:.4}",
                        report.scheme, report.seed, report.attempts, report.heterogeneity_index
                    )
                    .map_err(io)?;
                    for (i, (n, h)) in report.sizes.iter().zip(&report.histograms).enumerate() {
                        writeln!(out, "client {i:>3}  n={n:<6} {h:?}").map_err(io)?;
                    }
                }
            }
        }
    }
    Ok(())
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let stdout = std::io::stdout();
    match execute(cli, &mut stdout.lock()) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
