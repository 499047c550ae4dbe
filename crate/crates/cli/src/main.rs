//! `sdns`: command-line front end for the spectral solver.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use spectral_dns::cases::Case;
use spectral_dns::checkpoint::{self, CheckpointError};
use spectral_dns::config::RunConfig;
use spectral_dns::driver;
use spectral_dns::fft::FftBackend;
use spectral_dns::kernels::KernelPath;
use spectral_dns::mesh::{DealiasRule, DecompositionKind};
use spectral_dns::solver::Integrator;
use spectral_dns::{Error, Precision};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Parser)]
#[command(name = "sdns", version, about = "Pseudo-spectral Navier-Stokes solver on a periodic box")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Advance a case to the end time, writing a diagnostic time series.
    Run {
        #[command(flatten)]
        common: Common,
        /// Time-series CSV path.
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[arg(long)]
        checkpoint_dir: Option<PathBuf>,
        /// Steps between checkpoints; 0 writes one at the end only.
        #[arg(long, default_value_t = 0)]
        checkpoint_interval: u64,
        /// Resume from a checkpoint directory.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Check the transforms against a direct sum and rerun the reference
    /// Taylor-Green case.
    Verify {
        #[command(flatten)]
        common: Common,
    },
    /// Time forward plus inverse 3D transforms over several rank counts.
    BenchFft {
        #[command(flatten)]
        common: Common,
        /// Rank counts to time.
        #[arg(long, value_delimiter = ',', default_value = "1")]
        ranks_list: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        repetitions: usize,
        /// JSON report path; printed to stdout when omitted.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Time solver steps with the naive and the fused kernels.
    BenchSolver {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 5)]
        steps: u64,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Print the manifest and per-rank headers of a checkpoint.
    Checkpoint {
        dir: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PrecisionArg {
    Single,
    Double,
}

#[derive(Clone, Copy, ValueEnum)]
enum DecompositionArg {
    Serial,
    Slab,
    Pencil,
}

#[derive(Clone, Copy, ValueEnum)]
enum IntegratorArg {
    Euler,
    Rk4,
}

#[derive(Clone, Copy, ValueEnum)]
enum DealiasArg {
    Maintext,
    Appendix,
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelArg {
    Naive,
    Fused,
}

#[derive(Clone, Copy, ValueEnum)]
enum FftArg {
    Radix2,
    Rustfft,
}

#[derive(Clone, Copy, ValueEnum)]
enum CaseArg {
    TaylorGreen,
    Random,
    Shear,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Launcher {
    /// One thread per rank inside this process.
    Threads,
    /// One process per rank under mpirun (needs the `mpi` feature).
    Mpi,
}

/// Options shared by all solver commands. Defaults reproduce the reference
/// Taylor-Green run.
#[derive(Args, Clone)]
struct Common {
    /// Mesh exponent, N = 2^M.
    #[arg(short = 'M', long = "mesh-exponent", default_value_t = 7)]
    m: u32,
    /// Kinematic viscosity.
    #[arg(long, default_value_t = 0.000625)]
    nu: f64,
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    /// End time.
    #[arg(short = 'T', long = "end-time", default_value_t = 0.1)]
    t_end: f64,
    #[arg(long, value_enum, default_value = "double")]
    precision: PrecisionArg,
    #[arg(long, value_enum, default_value = "serial")]
    decomposition: DecompositionArg,
    #[arg(long, default_value_t = 1)]
    ranks: usize,
    /// Pencil process-grid rows.
    #[arg(long, default_value_t = 1)]
    p1: usize,
    #[arg(long, value_enum, default_value = "rk4")]
    integrator: IntegratorArg,
    #[arg(long, value_enum, default_value = "appendix")]
    dealias: DealiasArg,
    #[arg(long, value_enum, default_value = "fused")]
    kernel: KernelArg,
    #[arg(long, value_enum, default_value = "rustfft")]
    fft: FftArg,
    #[arg(long = "case", value_enum, default_value = "taylor-green")]
    case: CaseArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Steps between diagnostic records.
    #[arg(long, default_value_t = 1)]
    diag_interval: u64,
    #[arg(long, value_enum, default_value = "threads")]
    launcher: Launcher,
}

impl Common {
    fn config(&self) -> RunConfig {
        RunConfig {
            m: self.m,
            nu: self.nu,
            dt: self.dt,
            t_end: self.t_end,
            precision: match self.precision {
                PrecisionArg::Single => Precision::Single,
                PrecisionArg::Double => Precision::Double,
            },
            decomposition: match self.decomposition {
                DecompositionArg::Serial => DecompositionKind::Serial,
                DecompositionArg::Slab => DecompositionKind::Slab,
                DecompositionArg::Pencil => DecompositionKind::Pencil,
            },
            ranks: self.ranks,
            p1: self.p1,
            integrator: match self.integrator {
                IntegratorArg::Euler => Integrator::Euler,
                IntegratorArg::Rk4 => Integrator::Rk4,
            },
            dealias: match self.dealias {
                DealiasArg::Maintext => DealiasRule::MainText,
                DealiasArg::Appendix => DealiasRule::Appendix,
            },
            kernel_path: match self.kernel {
                KernelArg::Naive => KernelPath::Naive,
                KernelArg::Fused => KernelPath::Fused,
            },
            fft_backend: match self.fft {
                FftArg::Radix2 => FftBackend::Radix2,
                FftArg::Rustfft => FftBackend::RustFft,
            },
            case: match self.case {
                CaseArg::TaylorGreen => Case::TaylorGreen,
                CaseArg::Random => Case::Random,
                CaseArg::Shear => Case::Shear,
            },
            seed: self.seed,
            diag_interval: self.diag_interval,
            ..RunConfig::default()
        }
    }
}

enum Failure {
    Solver(Error),
    Usage(String),
    Io(PathBuf, std::io::Error),
    /// Completed, but a verification check failed.
    Verification,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Solver(e)
    }
}

impl From<CheckpointError> for Failure {
    fn from(e: CheckpointError) -> Self {
        Failure::Solver(e.into())
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Mesh(_) => EXIT_CONFIG,
        Error::NonFinite { .. } => EXIT_NUMERICAL,
        Error::Io { .. } => EXIT_IO,
        Error::Checkpoint(CheckpointError::Mismatch(_)) => EXIT_CONFIG,
        Error::Checkpoint(_) => EXIT_IO,
        _ => 1,
    }
}

fn emit<T: Serialize>(value: &T, path: Option<&Path>) -> Result<(), Failure> {
    let json = serde_json::to_string_pretty(value).expect("reports serialize");
    match path {
        Some(p) => std::fs::write(p, json + "\n").map_err(|e| Failure::Io(p.to_path_buf(), e)),
        None => {
            println!("{json}");
            Ok(())
        }
    }
}

#[cfg(feature = "mpi")]
fn run_mpi(cfg: &mut RunConfig) -> Result<Option<driver::RunSummary>, Failure> {
    use spectral_dns::comm::mpi::MpiRuntime;
    use spectral_dns::comm::Communicator;

    let runtime = MpiRuntime::init().map_err(Error::from)?;
    let world = runtime.world();
    cfg.ranks = world.size();
    let root = world.rank() == 0;
    let summary = match cfg.precision {
        Precision::Single => driver::run_on::<f32>(cfg, Box::new(world))?,
        Precision::Double => driver::run_on::<f64>(cfg, Box::new(world))?,
    };
    Ok(root.then_some(summary))
}

#[cfg(not(feature = "mpi"))]
fn run_mpi(_: &mut RunConfig) -> Result<Option<driver::RunSummary>, Failure> {
    Err(Failure::Usage("this build has no MPI support; rebuild with --features mpi".into()))
}

fn only_threads(common: &Common, what: &str) -> Result<(), Failure> {
    if common.launcher == Launcher::Mpi {
        return Err(Failure::Usage(format!("{what} runs on the thread launcher only")));
    }
    Ok(())
}

#[derive(Serialize)]
struct RunReport<'a> {
    config: &'a RunConfig,
    steps: u64,
    wall_seconds: f64,
    last: &'a spectral_dns::diagnostics::DiagnosticRecord,
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { common, output, checkpoint_dir, checkpoint_interval, resume } => {
            let mut cfg = RunConfig { output, checkpoint_dir, checkpoint_interval, resume, ..common.config() };
            let summary = match common.launcher {
                Launcher::Threads => Some(driver::run(&cfg)?),
                Launcher::Mpi => run_mpi(&mut cfg)?,
            };
            if let Some(s) = summary {
                let last = s.last();
                emit(&RunReport { config: &s.config, steps: last.step, wall_seconds: s.wall_seconds, last }, None)?;
            }
            Ok(())
        }
        Command::Verify { common } => {
            only_threads(&common, "verify")?;
            let report = driver::verify(&common.config())?;
            emit(&report, None)?;
            if report.passed() {
                Ok(())
            } else {
                Err(Failure::Verification)
            }
        }
        Command::BenchFft { common, ranks_list, repetitions, output } => {
            only_threads(&common, "bench-fft")?;
            let report = driver::bench_fft(&common.config(), &ranks_list, repetitions)?;
            emit(&report, output.as_deref())
        }
        Command::BenchSolver { common, steps, output } => {
            only_threads(&common, "bench-solver")?;
            let report = driver::bench_solver(&common.config(), steps)?;
            emit(&report, output.as_deref())
        }
        Command::Checkpoint { dir } => {
            let manifest = checkpoint::read_manifest(&dir)?;
            let mut headers = Vec::new();
            for rank in 0..manifest.decomposition.ranks {
                let path = checkpoint::rank_file(&dir, rank);
                let bytes = std::fs::read(&path).map_err(|e| Failure::Io(path.clone(), e))?;
                headers.push(checkpoint::decode_header(&bytes)?);
            }
            #[derive(Serialize)]
            struct Inspect {
                manifest: checkpoint::Manifest,
                ranks: Vec<checkpoint::CheckpointHeader>,
            }
            emit(&Inspect { manifest, ranks: headers }, None)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Solver(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Io(path, e)) => {
            eprintln!("error: {}: {e}", path.display());
            ExitCode::from(EXIT_IO)
        }
        Err(Failure::Verification) => {
            eprintln!("error: verification failed");
            ExitCode::from(EXIT_NUMERICAL)
        }
    }
}
