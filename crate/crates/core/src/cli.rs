//! The `newsrec` command line.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use log::info;

use crate::config::{ConfigError, RunConfig};
use crate::harness::{write_long_csv, EvalReport, HarnessError};
use crate::pipeline::{self, sweep_beta, write_sweep_csv, PipelineError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "newsrec", version, about = "Session-based news recommendation lab")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a click log and an article catalog into a sessionized dataset.
    Ingest {
        /// Click log, one JSON object per line.
        clicks: PathBuf,
        /// Article catalog, one JSON object per line.
        catalog: PathBuf,
        /// Output dataset file.
        #[arg(long, default_value = "dataset.json")]
        out: PathBuf,
    },
    /// Evaluate the configured algorithms on the stream.
    Run(RunArgs),
    /// Evaluate the neural model once per novelty weight.
    SweepBeta {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated novelty weights.
        #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.2,0.3,0.4,0.5")]
        betas: Vec<f64>,
    },
    /// Merge hourly reports into one long-format table.
    Report {
        /// Hourly or long-format CSV files.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value = "report.csv")]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML file layered over the profile.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "quick")]
    pub profile: String,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; defaults to `output_dir` of the config, then `out`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Report(#[from] HarnessError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Pipeline(PipelineError::Config(_)) => EXIT_USAGE,
            CliError::Pipeline(e) if e.is_data_error() => EXIT_DATA,
            CliError::Io { .. } | CliError::Report(HarnessError::Report(_) | HarnessError::Csv(_)) => EXIT_DATA,
            _ => EXIT_RUNTIME,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Pipeline(e.into())
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io(dir))?;
    }
    File::create(path).map(BufWriter::new).map_err(io(path))
}

fn resolve(args: &RunArgs) -> Result<(RunConfig, PathBuf), CliError> {
    let mut cfg = RunConfig::load(&args.profile, args.config.as_deref())?;
    if let Some(seed) = args.seed {
        cfg = cfg.with_seed(seed);
    }
    cfg.validate()?;
    let out = args.out.clone().or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&out).map_err(io(&out))?;
    fs::write(out.join("config.toml"), cfg.to_toml()).map_err(io(&out))?;
    Ok((cfg, out))
}

fn write_report(report: &EvalReport, out: &Path) -> Result<(), CliError> {
    report.write_hourly_csv(create(&out.join("hourly.csv"))?)?;
    report.write_summary_csv(create(&out.join("summary.csv"))?)?;
    Ok(())
}

/// Runs one parsed command.
pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Ingest { clicks, catalog, out } => {
            let c = File::open(&clicks).map_err(io(&clicks))?;
            let a = File::open(&catalog).map_err(io(&catalog))?;
            let d = pipeline::ingest(c, a)?;
            info!("{:?}", d.stats);
            info!("{:?}", d.sessionize);
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(io(dir))?;
            }
            d.save(&out)?;
            println!(
                "{} sessions, {} clicks, {} articles, gini {:.4} -> {}",
                d.stats.n_sessions,
                d.stats.n_clicks,
                d.stats.n_articles,
                d.stats.gini,
                out.display()
            );
        }
        Command::Run(args) => {
            let (cfg, out) = resolve(&args)?;
            let t = Instant::now();
            let data = pipeline::prepare(&cfg)?;
            let report = pipeline::evaluate(&cfg, &data)?;
            write_report(&report, &out)?;
            info!("run finished in {:.1?}", t.elapsed());
            for s in report.summary.iter().filter(|s| s.best) {
                println!("best {}: {} {:.4}", s.metric.column(report.cutoff), s.algorithm, s.mean.unwrap_or(f64::NAN));
            }
            println!("wrote {}", out.display());
        }
        Command::SweepBeta { run, betas } => {
            if betas.is_empty() {
                return Err(CliError::Usage("--betas needs at least one value".into()));
            }
            let (cfg, out) = resolve(&run)?;
            let data = pipeline::prepare(&cfg)?;
            let rows = sweep_beta(&cfg, &data, &betas)?;
            write_sweep_csv(&rows, cfg.harness.cutoff, create(&out.join("sweep.csv"))?)?;
            println!("wrote {}", out.join("sweep.csv").display());
        }
        Command::Report { inputs, out } => {
            let mut texts = Vec::with_capacity(inputs.len());
            for p in &inputs {
                let label = p
                    .parent()
                    .and_then(|d| d.file_name())
                    .filter(|_| p.file_stem().is_some_and(|s| s == "hourly"))
                    .or_else(|| p.file_stem())
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| p.display().to_string());
                texts.push((label, fs::read_to_string(p).map_err(io(p))?));
            }
            let n = write_long_csv(&texts, create(&out)?)?;
            println!("{n} rows -> {}", out.display());
        }
    }
    Ok(())
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
