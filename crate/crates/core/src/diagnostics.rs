//! Global scalar diagnostics. Every function is collective over the world
//! communicator and returns the same value on every rank.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::comm::Communicator;
use crate::error::Result;
use crate::fft::DistFft;
use crate::kernels::{KernelPath, Kernels, VecField3};
use crate::mesh::WaveTables;
use crate::real::Real;
use crate::solver::{curl_physical, Solver};

/// Compensated summation, so local partial sums do not depend on how the
/// grid is cut up beyond the last few bits.
#[derive(Debug, Default, Clone, Copy)]
pub struct Accumulator {
    sum: f64,
    carry: f64,
}

impl Accumulator {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

fn sum_squares<T: Real>(f: &VecField3<T>) -> f64 {
    let mut acc = Accumulator::default();
    for c in f {
        for &v in c {
            let v = v.as_f64();
            acc.add(v * v);
        }
    }
    acc.value()
}

/// `0.5 <|u|^2>`.
pub fn kinetic_energy<T: Real>(u: &VecField3<T>, n: usize, comm: &dyn Communicator) -> Result<f64> {
    let total = comm.all_reduce_sum(sum_squares(u))?;
    Ok(0.5 * total / (n as f64).powi(3))
}

/// `0.5 <|omega|^2>`, with the vorticity rebuilt into `curl`.
pub fn enstrophy<T: Real>(
    fft: &mut DistFft<T>,
    tables: &WaveTables<T>,
    u_hat: &VecField3<Complex<T>>,
    scratch: &mut [Complex<T>],
    curl: &mut VecField3<T>,
) -> Result<f64> {
    let mut kernels = Kernels::new(KernelPath::Fused, 0, 0);
    curl_physical(fft, &mut kernels, &tables.kf, u_hat, scratch, curl)?;
    kinetic_energy(curl, tables.n, fft.world())
}

fn weighted_spectral_sum<T: Real>(
    u_hat: &VecField3<Complex<T>>,
    tables: &WaveTables<T>,
    factor: impl Fn(usize) -> f64,
) -> f64 {
    let mut acc = Accumulator::default();
    for c in u_hat {
        for (e, z) in c.iter().enumerate() {
            let (re, im) = (z.re.as_f64(), z.im.as_f64());
            acc.add(tables.weight[e].as_f64() * factor(e) * (re * re + im * im));
        }
    }
    acc.value()
}

/// `nu sum_k w(k) |k|^2 |u_hat|^2 / N^6`.
pub fn dissipation<T: Real>(
    u_hat: &VecField3<Complex<T>>,
    tables: &WaveTables<T>,
    nu: f64,
    comm: &dyn Communicator,
) -> Result<f64> {
    let local = weighted_spectral_sum(u_hat, tables, |e| tables.k2[e] as f64);
    let total = comm.all_reduce_sum(local)?;
    Ok(nu * total / (tables.n as f64).powi(6))
}

/// `0.5 sum_k w(k) |u_hat|^2 / N^6`.
pub fn spectral_energy<T: Real>(u_hat: &VecField3<Complex<T>>, tables: &WaveTables<T>, comm: &dyn Communicator) -> Result<f64> {
    let local = weighted_spectral_sum(u_hat, tables, |_| 1.0);
    let total = comm.all_reduce_sum(local)?;
    Ok(0.5 * total / (tables.n as f64).powi(6))
}

/// `max_k |k . u_hat(k)| / N^3`: the largest divergence amplitude in the
/// normalization where a coefficient multiplies `exp(i k . x)` directly.
pub fn divergence_max<T: Real>(u_hat: &VecField3<Complex<T>>, tables: &WaveTables<T>, comm: &dyn Communicator) -> Result<f64> {
    let mut local = 0.0f64;
    for e in 0..tables.len() {
        let mut re = 0.0;
        let mut im = 0.0;
        for c in 0..3 {
            let k = tables.k[c][e] as f64;
            re += k * u_hat[c][e].re.as_f64();
            im += k * u_hat[c][e].im.as_f64();
        }
        let m = re.hypot(im);
        // NaN must win the max.
        if m.is_nan() || m > local {
            local = m;
        }
    }
    Ok(comm.all_reduce_max(local)? / (tables.n as f64).powi(3))
}

/// One time-series record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRecord {
    pub step: u64,
    pub t: f64,
    pub kinetic_energy: f64,
    pub enstrophy: f64,
    pub dissipation: f64,
    pub divergence_max: f64,
}

impl DiagnosticRecord {
    /// Name of the first non-finite quantity, if any.
    pub fn non_finite(&self) -> Option<&'static str> {
        [
            ("kinetic_energy", self.kinetic_energy),
            ("enstrophy", self.enstrophy),
            ("dissipation", self.dissipation),
            ("divergence_max", self.divergence_max),
        ]
        .into_iter()
        .find(|(_, v)| !v.is_finite())
        .map(|(name, _)| name)
    }
}

impl<T: Real> Solver<T> {
    /// All record quantities for the current state. Collective; clobbers
    /// `state.curl`.
    pub fn diagnostics(&mut self) -> Result<DiagnosticRecord> {
        let n = self.params.n;
        let kinetic_energy = kinetic_energy(&self.state.u, n, self.fft.world())?;
        self.update_curl()?;
        let enstrophy = kinetic_energy_of_curl(self)?;
        let world = self.fft.world();
        let dissipation = dissipation(&self.state.u_hat, &self.tables, self.params.nu, world)?;
        let divergence_max = divergence_max(&self.state.u_hat, &self.tables, world)?;
        Ok(DiagnosticRecord {
            step: self.state.step,
            t: self.state.t,
            kinetic_energy,
            enstrophy,
            dissipation,
            divergence_max,
        })
    }

    pub fn kinetic_energy(&self) -> Result<f64> {
        kinetic_energy(&self.state.u, self.params.n, self.fft.world())
    }

    pub fn spectral_energy(&self) -> Result<f64> {
        spectral_energy(&self.state.u_hat, &self.tables, self.fft.world())
    }

    pub fn divergence_max(&self) -> Result<f64> {
        divergence_max(&self.state.u_hat, &self.tables, self.fft.world())
    }
}

fn kinetic_energy_of_curl<T: Real>(s: &Solver<T>) -> Result<f64> {
    kinetic_energy(&s.state.curl, s.params.n, s.fft.world())
}
