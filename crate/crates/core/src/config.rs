//! Run configuration shared by the driver and the command line.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::cases::Case;
use crate::error::{Error, Result};
use crate::fft::FftBackend;
use crate::kernels::KernelPath;
use crate::mesh::{DealiasRule, Decomposition, DecompositionKind};
use crate::real::Precision;
use crate::solver::{Integrator, SolverParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Mesh exponent, `N = 2^m`.
    pub m: u32,
    pub nu: f64,
    pub dt: f64,
    /// End time.
    pub t_end: f64,
    pub precision: Precision,
    pub decomposition: DecompositionKind,
    pub ranks: usize,
    /// Pencil process-grid rows; ignored otherwise.
    pub p1: usize,
    pub integrator: Integrator,
    pub dealias: DealiasRule,
    pub kernel_path: KernelPath,
    pub fft_backend: FftBackend,
    pub case: Case,
    pub seed: u64,
    /// Steps between diagnostic records.
    pub diag_interval: u64,
    /// Time-series CSV.
    pub output: Option<PathBuf>,
    pub checkpoint_dir: Option<PathBuf>,
    /// Steps between checkpoints; 0 writes only at the end.
    pub checkpoint_interval: u64,
    pub resume: Option<PathBuf>,
}

impl Default for RunConfig {
    /// The reference Taylor-Green run.
    fn default() -> Self {
        RunConfig {
            m: 7,
            nu: 0.000625,
            dt: 0.01,
            t_end: 0.1,
            precision: Precision::Double,
            decomposition: DecompositionKind::Serial,
            ranks: 1,
            p1: 1,
            integrator: Integrator::Rk4,
            dealias: DealiasRule::Appendix,
            kernel_path: KernelPath::Fused,
            fft_backend: FftBackend::RustFft,
            case: Case::TaylorGreen,
            seed: 0,
            diag_interval: 1,
            output: None,
            checkpoint_dir: None,
            checkpoint_interval: 0,
            resume: None,
        }
    }
}

impl RunConfig {
    pub fn n(&self) -> usize {
        1usize << self.m
    }

    pub fn decomposition(&self) -> Decomposition {
        match self.decomposition {
            DecompositionKind::Serial => Decomposition { ranks: self.ranks, ..Decomposition::serial() },
            DecompositionKind::Slab => Decomposition::slab(self.ranks),
            DecompositionKind::Pencil => Decomposition::pencil(self.ranks, self.p1),
        }
    }

    pub fn solver_params(&self) -> SolverParams {
        SolverParams {
            n: self.n(),
            decomposition: self.decomposition(),
            nu: self.nu,
            dt: self.dt,
            dealias: self.dealias,
            kernel_path: self.kernel_path,
            integrator: self.integrator,
            fft_backend: self.fft_backend,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(1..=12).contains(&self.m) {
            return bad(format!("mesh exponent must be in 1..=12, got {}", self.m));
        }
        if !(self.nu.is_finite() && self.nu >= 0.0) {
            return bad(format!("viscosity must be finite and non-negative, got {}", self.nu));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad(format!("time step must be positive, got {}", self.dt));
        }
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return bad(format!("end time must be non-negative, got {}", self.t_end));
        }
        if self.diag_interval == 0 {
            return bad("diagnostic interval must be at least 1".into());
        }
        if self.checkpoint_interval > 0 && self.checkpoint_dir.is_none() {
            return bad("a checkpoint interval needs a checkpoint directory".into());
        }
        self.decomposition().validate(self.n()).map_err(|e| Error::Config(e.to_string()))
    }
}
