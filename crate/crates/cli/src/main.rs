use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod output;

#[derive(Debug, Parser)]
#[command(name = "rect", version)]
#[command(about = "Multiscale density diagnostics for weighted point clouds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic measure (CSV plus JSON sidecar).
    Generate(GenerateArgs),
    /// Density profiles, square functions and verdicts for a measure.
    Analyze(AnalyzeArgs),
    /// Calderón–Zygmund decomposition of a signed measure with its audit.
    Czdemo(CzArgs),
    /// Flatness and uniformity of blowups along a sequence of radii.
    Blowup(BlowupArgs),
    /// Print the summaries of finished `analyze` runs.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Flat `key = value` file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// plane, graph, circle, cantor4 or mixture.
    #[arg(long)]
    pub kind: Option<String>,
    /// Extra settings as `key=value,key=value`.
    #[arg(long)]
    pub params: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    /// Side length of the parameter cube.
    #[arg(long, alias = "L")]
    pub side: Option<f64>,
    /// Grid step of the parameter cube.
    #[arg(long, alias = "s")]
    pub step: Option<f64>,
    /// Graph profile: zero, linear, sinusoid or sawtooth.
    #[arg(long)]
    pub profile: Option<String>,
    #[arg(long)]
    pub amplitude: Option<f64>,
    #[arg(long)]
    pub slope: Option<f64>,
    #[arg(long)]
    pub period: Option<f64>,
    /// Declared Lipschitz constant, overriding the analytic one.
    #[arg(long)]
    pub lipschitz: Option<f64>,
    /// Circle radius.
    #[arg(long = "R", alias = "radius")]
    pub radius: Option<f64>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub depth: Option<u32>,
    /// Largest number of points a generator may emit.
    #[arg(long)]
    pub budget: Option<usize>,
    /// Comma-separated measure files to combine (mixture only).
    #[arg(long)]
    pub components: Option<String>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Measure CSV with its sidecar.
    #[arg(long)]
    pub measure: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub octaves: Option<usize>,
    /// Scales per octave.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub safety: Option<f64>,
    /// Largest radius; defaults to a quarter of the diameter and may not exceed it.
    #[arg(long)]
    pub r_max: Option<f64>,
    /// `all` or a number of randomly chosen points.
    #[arg(long)]
    pub points: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub floor: Option<f64>,
    #[arg(long)]
    pub slope_octaves: Option<usize>,
    /// Boundary margin in units of r_max.
    #[arg(long)]
    pub margin: Option<f64>,
    /// Also compute the Gaussian-smoothed differences.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub smoothed: Option<bool>,
}

#[derive(Debug, Args)]
pub struct CzArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Signed measure to decompose (negative weights allowed).
    #[arg(long)]
    pub nu: Option<PathBuf>,
    /// Reference measure with sidecar.
    #[arg(long)]
    pub mu: Option<PathBuf>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Largest constant the audit accepts.
    #[arg(long)]
    pub c_max: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BlowupArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub measure: Option<PathBuf>,
    /// Base point as comma-separated coordinates.
    #[arg(long, allow_hyphen_values = true)]
    pub x: Option<String>,
    /// Base point given by its row in the measure file.
    #[arg(long)]
    pub point: Option<usize>,
    /// Comma-separated radii; defaults to halvings of `r_max`.
    #[arg(long)]
    pub radii: Option<String>,
    #[arg(long)]
    pub r_max: Option<f64>,
    /// Number of halvings when `radii` is not given.
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub window: Option<f64>,
    #[arg(long)]
    pub probes: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Output directories of `analyze` runs.
    #[arg(required = true)]
    pub dirs: Vec<PathBuf>,
    /// Write the table here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("RECT_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| anyhow::anyhow!("RECT_THREADS must be a positive integer, got `{v}`"))?;
        if n == 0 {
            anyhow::bail!("RECT_THREADS must be a positive integer, got `{v}`");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    init_threads()?;
    match cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::Analyze(a) => commands::analyze(a),
        Command::Czdemo(a) => commands::czdemo(a),
        Command::Blowup(a) => commands::blowup(a),
        Command::Report(a) => commands::report(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
