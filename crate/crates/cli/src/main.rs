#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{parse_cutoff, parse_grid, parse_list, parse_range, CutoffValue, RunConfig};

pub const EXIT_OK: u8 = 0;
pub const EXIT_VALIDATE_FAILED: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;
pub const EXIT_OFF_SIM: u8 = 4;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }
}

impl From<ctflow::Error> for Failure {
    fn from(e: ctflow::Error) -> Self {
        use ctflow::Error::*;
        let code = match e {
            SolutionPole { .. }
            | SingularityEncountered { .. }
            | ToleranceNotMet { .. }
            | ZeroSignal
            | NoFixedPointFound
            | NoSpectralGap { .. } => EXIT_NUMERIC,
            _ => EXIT_CONFIG,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "ctflow",
    version,
    about = "Complex-time flows, imaginary-time spectra and slow-manifold detection",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the trajectory over a rectangle of complex time (CSV)
    Surface {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Imaginary-time spectrum of one component (JSON)
    Spectrum {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        spectral: SpectralArgs,
    },
    /// Classify an initial point; exit 0 when on-SIM consistent, 4 when off-SIM
    Detect {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        spectral: SpectralArgs,
    },
    /// Detection over a grid of manifold offsets and gamma values (CSV)
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        spectral: SpectralArgs,
        #[command(flatten)]
        sweep: SweepArgs,
    },
    /// Run the acceptance checks; exit 0 when all pass, 1 otherwise
    Validate {
        #[arg(long)]
        rtol: Option<f64>,
        /// Comma-separated criterion ids, e.g. 1,3a,7
        #[arg(long, value_delimiter = ',')]
        only: Option<Vec<String>>,
    },
}

#[derive(Args)]
struct CommonArgs {
    /// linear | davis-skodje | michaelis-menten
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Diagonal of the linear model, e.g. -1,-2
    #[arg(long, allow_hyphen_values = true, value_parser = parse_list)]
    eigenvalues: Option<::std::vec::Vec<f64>>,
    /// critical_manifold_consistent | plus_z2
    #[arg(long)]
    fast_sign: Option<String>,
    /// grouped | ungrouped
    #[arg(long)]
    denominator: Option<String>,
    /// Real initial state, e.g. 1,0.5
    #[arg(long, allow_hyphen_values = true, value_parser = parse_list)]
    z0: Option<::std::vec::Vec<f64>>,
    /// JSON run configuration; explicit flags take precedence
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file (standard output when absent)
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv | json
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    rtol: Option<f64>,
    #[arg(long)]
    atol: Option<f64>,
    /// Write the fully resolved configuration here ("-" for standard error)
    #[arg(long)]
    echo_config: Option<PathBuf>,
}

#[derive(Args)]
struct GridArgs {
    /// Real-time range a:b
    #[arg(long, allow_hyphen_values = true, value_parser = parse_range)]
    re: Option<[f64; 2]>,
    /// Imaginary-time range c:d
    #[arg(long, allow_hyphen_values = true, value_parser = parse_range)]
    im: Option<[f64; 2]>,
    /// Grid shape NxM (real x imaginary)
    #[arg(long, value_parser = parse_grid)]
    grid: Option<[usize; 2]>,
}

#[derive(Args)]
struct SpectralArgs {
    /// 1-based state component
    #[arg(long)]
    component: Option<usize>,
    #[arg(long)]
    tau_max: Option<f64>,
    /// Power of two
    #[arg(long)]
    samples: Option<usize>,
    /// rectangular | hann
    #[arg(long)]
    window: Option<String>,
    /// none | mean | fixed_point
    #[arg(long)]
    detrend: Option<String>,
    /// auto or a frequency
    #[arg(long, value_parser = parse_cutoff)]
    cutoff: Option<CutoffValue>,
    /// High/low energy ratio above which a point is off-SIM
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    tail_fraction: Option<f64>,
}

#[derive(Args)]
struct SweepArgs {
    /// Offsets added to z2 on the manifold
    #[arg(long, allow_hyphen_values = true, value_parser = parse_list)]
    offsets: Option<::std::vec::Vec<f64>>,
    #[arg(long, value_parser = parse_list)]
    gammas: Option<::std::vec::Vec<f64>>,
    /// Manifold abscissa of the swept points
    #[arg(long, allow_hyphen_values = true)]
    z1: Option<f64>,
    /// Expansion order of the manifold graph (0..=2)
    #[arg(long)]
    order: Option<u32>,
}

impl CommonArgs {
    fn flags(&self) -> RunConfig {
        RunConfig {
            model: self.model.clone(),
            gamma: self.gamma,
            eigenvalues: self.eigenvalues.clone(),
            fast_sign: self.fast_sign.clone(),
            denominator: self.denominator.clone(),
            z0: self.z0.clone(),
            rtol: self.rtol,
            atol: self.atol,
            format: self.format.clone(),
            ..RunConfig::default()
        }
    }
}

impl SpectralArgs {
    fn apply(&self, cfg: RunConfig) -> RunConfig {
        RunConfig {
            component: self.component,
            tau_max: self.tau_max,
            samples: self.samples,
            window: self.window.clone(),
            detrend: self.detrend.clone(),
            cutoff: self.cutoff.clone(),
            threshold: self.threshold,
            tail_fraction: self.tail_fraction,
            ..cfg
        }
    }
}

fn prepare(common: &CommonArgs, flags: RunConfig) -> Result<config::Resolved, Failure> {
    let merged = match &common.config {
        Some(path) => flags.over(RunConfig::load(path)?),
        None => flags,
    };
    let resolved = config::resolve(merged)?;
    if let Some(path) = &common.echo_config {
        let text = serde_json::to_string_pretty(&resolved.echo).expect("config serializes");
        if path.as_os_str() == "-" {
            eprintln!("{text}");
        } else {
            std::fs::write(path, text + "\n")
                .map_err(|e| Failure::config(format!("cannot write {}: {e}", path.display())))?;
        }
    }
    Ok(resolved)
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("CTFLOW_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::config(format!("CTFLOW_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::config(e.to_string()))
}

fn run(cli: Cli) -> Result<u8, Failure> {
    configure_threads()?;
    match cli.command {
        Command::Surface { common, grid } => {
            let flags = RunConfig {
                re: grid.re,
                im: grid.im,
                grid: grid.grid,
                ..common.flags()
            };
            let r = prepare(&common, flags)?;
            commands::surface(&r, common.out.as_deref())
        }
        Command::Spectrum { common, spectral } => {
            let r = prepare(&common, spectral.apply(common.flags()))?;
            commands::spectrum(&r, common.out.as_deref())
        }
        Command::Detect { common, spectral } => {
            let r = prepare(&common, spectral.apply(common.flags()))?;
            commands::detect(&r, common.out.as_deref())
        }
        Command::Sweep { common, spectral, sweep } => {
            let flags = RunConfig {
                offsets: sweep.offsets,
                gammas: sweep.gammas,
                z1: sweep.z1,
                order: sweep.order,
                ..spectral.apply(common.flags())
            };
            let r = prepare(&common, flags)?;
            commands::sweep(&r, common.out.as_deref())
        }
        Command::Validate { rtol, only } => commands::validate(rtol, only),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_CONFIG,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("ctflow: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
