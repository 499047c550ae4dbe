//! Whole-run entry points: simulation, verification and benchmarks.
//!
//! Every `*_on` function runs on one rank of an existing communicator and is
//! collective. The plain variants launch the configured number of ranks as
//! threads of this process.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cases::{random_solenoidal, shear_mode, taylor_green, Case};
use crate::comm::{run_ranks, CommError, Communicator, SelfComm};
use crate::config::RunConfig;
use crate::diagnostics::DiagnosticRecord;
use crate::error::{Error, Result};
use crate::fft::oracle::direct_rdft3;
use crate::fft::{CommGroups, DistFft};
use crate::kernels::{KernelPath, VecField3};
use crate::mesh::{build_physical_mesh, Decomposition, DecompositionKind};
use crate::real::{complex_ulps, Precision, Real};
use crate::solver::Solver;

/// Kinetic energy of the reference Taylor-Green run at `t = 0.1`.
pub const TAYLOR_GREEN_REFERENCE_ENERGY: f64 = 0.124953117517;
/// Seven-decimal agreement with the reference.
pub const TAYLOR_GREEN_TOLERANCE: f64 = 5e-8;
/// Energy of the random fixture.
pub const RANDOM_FIELD_ENERGY: f64 = 0.1;

/// Runs `f` on `ranks` in-process ranks and returns rank 0's result, or
/// the most informative error if any rank failed.
pub fn in_process<R, F>(ranks: usize, f: F) -> Result<R>
where
    R: Send,
    F: Fn(Box<dyn Communicator>) -> Result<R> + Sync,
{
    if ranks == 1 {
        return f(Box::new(SelfComm));
    }
    let mut results = run_ranks(ranks, f);
    // A rank that failed first makes the others report a poisoned
    // communicator; prefer the original cause.
    let root_cause = results.iter().position(|r| matches!(r, Err(e) if !matches!(e, Error::Comm(CommError::Poisoned))));
    let pick = root_cause.unwrap_or(0);
    results.swap_remove(pick)
}

/// Builds a solver and sets its initial state, from a checkpoint if one is
/// configured. Collective.
pub fn init_solver<T: Real>(cfg: &RunConfig, world: Box<dyn Communicator>) -> Result<Solver<T>> {
    let params = cfg.solver_params();
    let comms = CommGroups::new(world, &params.decomposition)?;
    let mut solver = Solver::<T>::new(params, comms)?;
    if let Some(dir) = &cfg.resume {
        solver.load_checkpoint(dir)?;
        return Ok(solver);
    }
    let rank = solver.rank();
    match cfg.case {
        Case::TaylorGreen | Case::Shear => {
            let mesh = build_physical_mesh::<T>(params.n, &params.decomposition, rank)?;
            let u = if cfg.case == Case::Shear { shear_mode(&mesh) } else { taylor_green(&mesh) };
            solver.set_velocity(u)?;
        }
        Case::Random => {
            let u_hat = random_solenoidal(&mut solver.fft, &solver.tables, cfg.seed, RANDOM_FIELD_ENERGY)?;
            solver.set_spectral_velocity(u_hat)?;
        }
    }
    Ok(solver)
}

/// Header line written above the CSV columns.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeriesHeader {
    pub format: String,
    pub config: RunConfig,
}

pub const SERIES_COLUMNS: &str = "step,t,kinetic_energy,enstrophy,dissipation,divergence_max";

/// Time-series CSV: one `#`-prefixed JSON header line, a column line, then
/// one row per record.
pub struct SeriesWriter {
    path: PathBuf,
    out: BufWriter<File>,
    last_step: Option<u64>,
}

impl SeriesWriter {
    pub fn create(path: &Path, cfg: &RunConfig) -> Result<Self> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = SeriesWriter { path: path.to_path_buf(), out: BufWriter::new(file), last_step: None };
        let header = SeriesHeader { format: "spectral-dns time series v1".into(), config: cfg.clone() };
        let json = serde_json::to_string(&header).expect("config serializes");
        w.line(&format!("# {json}"))?;
        w.line(SERIES_COLUMNS)?;
        Ok(w)
    }

    fn line(&mut self, s: &str) -> Result<()> {
        writeln!(self.out, "{s}").and_then(|_| self.out.flush()).map_err(|e| Error::io(&self.path, e))
    }

    pub fn record(&mut self, r: &DiagnosticRecord) -> Result<()> {
        if self.last_step.is_some_and(|s| s >= r.step) {
            return Ok(());
        }
        self.last_step = Some(r.step);
        self.line(&format!(
            "{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
            r.step, r.t, r.kinetic_energy, r.enstrophy, r.dissipation, r.divergence_max
        ))
    }
}

/// Parses a file written by [`SeriesWriter`].
pub fn read_series(path: &Path) -> Result<(SeriesHeader, Vec<DiagnosticRecord>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |msg: &str| Error::Config(format!("{}: {msg}", path.display()));
    let mut lines = text.lines();
    let header_line = lines.next().and_then(|l| l.strip_prefix("# ")).ok_or_else(|| bad("missing header line"))?;
    let header: SeriesHeader = serde_json::from_str(header_line).map_err(|e| bad(&e.to_string()))?;
    if lines.next() != Some(SERIES_COLUMNS) {
        return Err(bad("unexpected column line"));
    }
    let mut records = Vec::new();
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(bad("malformed row"));
        }
        let num = |i: usize| f[i].parse::<f64>().map_err(|_| bad("malformed number"));
        records.push(DiagnosticRecord {
            step: f[0].parse().map_err(|_| bad("malformed step"))?,
            t: num(1)?,
            kinetic_energy: num(2)?,
            enstrophy: num(3)?,
            dissipation: num(4)?,
            divergence_max: num(5)?,
        });
    }
    Ok((header, records))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: RunConfig,
    pub records: Vec<DiagnosticRecord>,
    pub wall_seconds: f64,
}

impl RunSummary {
    pub fn last(&self) -> &DiagnosticRecord {
        self.records.last().expect("a run records at least its initial state")
    }
}

fn checked(r: DiagnosticRecord) -> Result<DiagnosticRecord> {
    match r.non_finite() {
        Some(quantity) => Err(Error::NonFinite { quantity, step: r.step, t: r.t }),
        None => Ok(r),
    }
}

/// Simulation on one rank of `world`.
pub fn run_on<T: Real>(cfg: &RunConfig, world: Box<dyn Communicator>) -> Result<RunSummary> {
    cfg.validate()?;
    let start = Instant::now();
    let root = world.rank() == 0;
    let mut solver = init_solver::<T>(cfg, world)?;
    let mut writer = match (&cfg.output, root) {
        (Some(path), true) => Some(SeriesWriter::create(path, cfg)?),
        _ => None,
    };
    let mut records = Vec::new();
    let first = checked(solver.diagnostics()?)?;
    if let Some(w) = writer.as_mut() {
        w.record(&first)?;
    }
    records.push(first);

    let mut last_checkpoint = None;
    let t_end = cfg.t_end;
    solver.advance_to(t_end, |s| {
        let step = s.state.step;
        if step % cfg.diag_interval == 0 || !s.before(t_end) {
            let r = checked(s.diagnostics()?)?;
            if let Some(w) = writer.as_mut() {
                w.record(&r)?;
            }
            records.push(r);
        }
        if let Some(dir) = &cfg.checkpoint_dir {
            if cfg.checkpoint_interval > 0 && step % cfg.checkpoint_interval == 0 {
                s.save_checkpoint(dir)?;
                last_checkpoint = Some(step);
            }
        }
        Ok(())
    })?;
    if let Some(dir) = &cfg.checkpoint_dir {
        if last_checkpoint != Some(solver.state.step) {
            solver.save_checkpoint(dir)?;
        }
    }
    Ok(RunSummary { config: cfg.clone(), records, wall_seconds: start.elapsed().as_secs_f64() })
}

/// Simulation on `cfg.ranks` in-process ranks.
pub fn run(cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate()?;
    match cfg.precision {
        Precision::Single => in_process(cfg.ranks, |w| run_on::<f32>(cfg, w)),
        Precision::Double => in_process(cfg.ranks, |w| run_on::<f64>(cfg, w)),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub reference: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    fn new(name: &str, value: f64, reference: f64, tolerance: f64) -> Check {
        let passed = (value - reference).abs() <= tolerance;
        Check { name: name.into(), value, reference, tolerance, passed }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyReport {
    pub decomposition: Decomposition,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Largest error of the distributed forward transform against the direct
/// sum, relative to the largest coefficient, and of the roundtrip relative
/// to the largest input. Collective.
pub fn fft_oracle_errors_on(
    n: usize,
    decomp: Decomposition,
    seed: u64,
    world: Box<dyn Communicator>,
) -> Result<(f64, f64)> {
    let comms = CommGroups::new(world, &decomp)?;
    let mut fft = DistFft::<f64>::new(n, decomp, comms, Default::default())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let global: Vec<f64> = (0..n * n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let reference = direct_rdft3(n, &global);
    let scale = reference.iter().map(|c| c.norm()).fold(0.0, f64::max);

    let phys = fft.physical_layout().clone();
    let spec = fft.spectral_layout().clone();
    let u = phys.extract(&global);
    let mut fu = vec![Complex::default(); spec.len()];
    fft.forward(&u, &mut fu)?;
    let nf = n / 2 + 1;
    let mut forward_err = 0.0f64;
    for i in 0..spec.local[0] {
        for j in 0..spec.local[1] {
            for k in 0..spec.local[2] {
                let [gi, gj, gk] = spec.global_index([i, j, k]);
                let d = fu[spec.flat(i, j, k)] - reference[(gi * n + gj) * nf + gk];
                forward_err = forward_err.max(d.norm());
            }
        }
    }
    let mut back = vec![0.0; u.len()];
    // The pencil spectrum lacks the z-Nyquist plane, so the roundtrip is
    // checked on a field without that content.
    let u_rt = if decomp.kind == DecompositionKind::Pencil {
        let mut filtered = vec![0.0; u.len()];
        fft.inverse(&fu, &mut filtered)?;
        fft.forward(&filtered, &mut fu)?;
        filtered
    } else {
        u
    };
    fft.inverse(&fu, &mut back)?;
    let umax = u_rt.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let rt_err = u_rt.iter().zip(&back).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let world = fft.world();
    let forward_rel = world.all_reduce_max(forward_err)? / scale;
    let rt_rel = world.all_reduce_max(rt_err)? / world.all_reduce_max(umax)?;
    Ok((forward_rel, rt_rel))
}

/// Transform oracle check at `N = 8` plus the reference Taylor-Green run,
/// both on the decomposition of `cfg`.
pub fn verify(cfg: &RunConfig) -> Result<VerifyReport> {
    let tg = RunConfig {
        m: 7,
        nu: 0.000625,
        dt: 0.01,
        t_end: 0.1,
        precision: Precision::Double,
        case: Case::TaylorGreen,
        diag_interval: 10,
        output: None,
        checkpoint_dir: None,
        checkpoint_interval: 0,
        resume: None,
        ..cfg.clone()
    };
    tg.validate()?;
    let decomp = tg.decomposition();
    let mut checks = Vec::new();
    if decomp.validate(8).is_ok() {
        let (fwd, rt) = in_process(decomp.ranks, |w| fft_oracle_errors_on(8, decomp, cfg.seed, w))?;
        checks.push(Check::new("fft_forward_vs_direct_sum", fwd, 0.0, 1e-12));
        checks.push(Check::new("fft_roundtrip", rt, 0.0, 1e-12));
    }
    let summary = run(&tg)?;
    checks.push(Check::new("taylor_green_initial_energy", summary.records[0].kinetic_energy, 0.125, 1e-12));
    checks.push(Check::new(
        "taylor_green_final_energy",
        summary.last().kinetic_energy,
        TAYLOR_GREEN_REFERENCE_ENERGY,
        TAYLOR_GREEN_TOLERANCE,
    ));
    Ok(VerifyReport { decomposition: decomp, checks })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FftBenchRecord {
    pub ranks: usize,
    pub decomposition: DecompositionKind,
    pub p1: usize,
    pub n: usize,
    pub precision: Precision,
    pub repetitions: usize,
    /// Fastest forward plus inverse pair, slowest rank.
    pub best_seconds: f64,
    /// `best_seconds * ranks / (N^3 log2 N)`; flat under ideal scaling.
    pub scaled_metric: f64,
    /// `t_1 / (ranks * t_ranks)` against the single-rank record.
    pub efficiency: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FftBenchReport {
    pub config: RunConfig,
    pub records: Vec<FftBenchRecord>,
}

/// Pencil grid for `ranks`: the configured `p1` when it fits, otherwise the
/// most square factorization that does.
pub fn pencil_grid(n: usize, ranks: usize, preferred_p1: usize) -> Option<Decomposition> {
    let preferred = Decomposition::pencil(ranks, preferred_p1);
    if preferred.validate(n).is_ok() {
        return Some(preferred);
    }
    (1..=ranks)
        .filter(|p1| ranks.is_multiple_of(*p1))
        .map(|p1| Decomposition::pencil(ranks, p1))
        .filter(|d| d.validate(n).is_ok())
        .min_by_key(|d| d.p1.abs_diff(d.p2()))
}

fn bench_decomposition(cfg: &RunConfig, ranks: usize) -> Result<Decomposition> {
    let n = cfg.n();
    let d = match (cfg.decomposition, ranks) {
        (_, 1) => Decomposition::serial(),
        (DecompositionKind::Pencil, r) => pencil_grid(n, r, cfg.p1)
            .ok_or_else(|| Error::Config(format!("no valid pencil grid for {r} ranks at N={n}")))?,
        (_, r) => Decomposition::slab(r),
    };
    d.validate(n).map_err(|e| Error::Config(e.to_string()))?;
    Ok(d)
}

fn fft_timing_on<T: Real>(cfg: &RunConfig, decomp: Decomposition, reps: usize, world: Box<dyn Communicator>) -> Result<f64> {
    let n = cfg.n();
    let comms = CommGroups::new(world, &decomp)?;
    let mut fft = DistFft::<T>::new(n, decomp, comms, cfg.fft_backend)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ fft.world().rank() as u64);
    let u: Vec<T> = (0..fft.physical_layout().len()).map(|_| T::lit(rng.gen_range(-1.0..1.0))).collect();
    let mut fu = vec![Complex::default(); fft.spectral_layout().len()];
    let mut back = vec![T::zero(); u.len()];
    let mut best = f64::INFINITY;
    for _ in 0..reps {
        fft.world().barrier()?;
        let t0 = Instant::now();
        fft.forward(&u, &mut fu)?;
        fft.inverse(&fu, &mut back)?;
        let local = t0.elapsed().as_secs_f64();
        best = best.min(fft.world().all_reduce_max(local)?);
    }
    Ok(best)
}

/// Best-of-`reps` forward+inverse timings for each rank count.
pub fn bench_fft(cfg: &RunConfig, rank_counts: &[usize], reps: usize) -> Result<FftBenchReport> {
    if reps == 0 {
        return Err(Error::Config("repetitions must be at least 1".into()));
    }
    let n = cfg.n();
    let mut records = Vec::new();
    for &ranks in rank_counts {
        let decomp = bench_decomposition(cfg, ranks)?;
        let best = match cfg.precision {
            Precision::Single => in_process(ranks, |w| fft_timing_on::<f32>(cfg, decomp, reps, w))?,
            Precision::Double => in_process(ranks, |w| fft_timing_on::<f64>(cfg, decomp, reps, w))?,
        };
        records.push(FftBenchRecord {
            ranks,
            decomposition: decomp.kind,
            p1: decomp.p1,
            n,
            precision: cfg.precision,
            repetitions: reps,
            best_seconds: best,
            scaled_metric: best * ranks as f64 / ((n as f64).powi(3) * (n as f64).log2()),
            efficiency: None,
        });
    }
    if let Some(t1) = records.iter().find(|r| r.ranks == 1).map(|r| r.best_seconds) {
        for r in &mut records {
            r.efficiency = Some(t1 / (r.ranks as f64 * r.best_seconds));
        }
    }
    Ok(FftBenchReport { config: cfg.clone(), records })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverBenchReport {
    pub config: RunConfig,
    pub steps: u64,
    pub naive_seconds_per_step: f64,
    pub fused_seconds_per_step: f64,
    /// Naive time over fused time.
    pub speedup: f64,
    /// Largest difference between the two final spectra, in ulps.
    pub max_ulp_difference: u64,
}

fn timed_steps<T: Real>(solver: &mut Solver<T>, start: &VecField3<Complex<T>>, steps: u64) -> Result<f64> {
    solver.set_spectral_velocity(start.clone())?;
    solver.state.t = 0.0;
    solver.state.step = 0;
    solver.fft.world().barrier()?;
    let t0 = Instant::now();
    for _ in 0..steps {
        solver.step()?;
    }
    let local = t0.elapsed().as_secs_f64();
    Ok(solver.fft.world().all_reduce_max(local)? / steps as f64)
}

fn solver_bench_on<T: Real>(cfg: &RunConfig, steps: u64, world: Box<dyn Communicator>) -> Result<SolverBenchReport> {
    let mut solver = init_solver::<T>(cfg, world)?;
    let start = solver.state.u_hat.clone();
    solver.set_kernel_path(KernelPath::Naive);
    let naive = timed_steps(&mut solver, &start, steps)?;
    let naive_end = solver.state.u_hat.clone();
    solver.set_kernel_path(KernelPath::Fused);
    let fused = timed_steps(&mut solver, &start, steps)?;
    let local_ulps = naive_end
        .iter()
        .flatten()
        .zip(solver.state.u_hat.iter().flatten())
        .map(|(a, b)| complex_ulps(*a, *b))
        .max()
        .unwrap_or(0);
    let ulps = solver.fft.world().all_reduce_max(local_ulps as f64)? as u64;
    Ok(SolverBenchReport {
        config: cfg.clone(),
        steps,
        naive_seconds_per_step: naive,
        fused_seconds_per_step: fused,
        speedup: naive / fused,
        max_ulp_difference: ulps,
    })
}

/// Per-step time of both kernel paths from the same initial state.
pub fn bench_solver(cfg: &RunConfig, steps: u64) -> Result<SolverBenchReport> {
    cfg.validate()?;
    if steps == 0 {
        return Err(Error::Config("steps must be at least 1".into()));
    }
    let cfg = RunConfig { resume: None, ..cfg.clone() };
    match cfg.precision {
        Precision::Single => in_process(cfg.ranks, |w| solver_bench_on::<f32>(&cfg, steps, w)),
        Precision::Double => in_process(cfg.ranks, |w| solver_bench_on::<f64>(&cfg, steps, w)),
    }
}
