//! Spectral right-hand side in rotational form and explicit time stepping.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fft::{CommGroups, DistFft, FftBackend};
use crate::kernels::{KernelPath, Kernels, VecField3};
use crate::mesh::{build_wave_tables, DealiasRule, Decomposition, WaveTables};
use crate::real::Real;

/// Time loops stop once `t` is within this of the end time.
pub const END_TIME_SLACK: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    Euler,
    #[default]
    Rk4,
}

impl Integrator {
    pub fn as_str(self) -> &'static str {
        match self {
            Integrator::Euler => "euler",
            Integrator::Rk4 => "rk4",
        }
    }
}

/// Explicit four-stage weights. `b` gives the stage offsets, `a` the final
/// combination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RkTableau {
    pub a: [f64; 4],
    pub b: [f64; 3],
}

impl Default for RkTableau {
    fn default() -> Self {
        RkTableau { a: [1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0], b: [0.5, 0.5, 1.0] }
    }
}

fn zeros3<U: Clone>(len: usize, v: U) -> [Vec<U>; 3] {
    std::array::from_fn(|_| vec![v.clone(); len])
}

/// Per-rank fields and stage storage.
pub struct SolverState<T> {
    pub u: VecField3<T>,
    pub u_hat: VecField3<Complex<T>>,
    pub curl: VecField3<T>,
    pub du: VecField3<Complex<T>>,
    pub u_hat0: VecField3<Complex<T>>,
    pub u_hat1: VecField3<Complex<T>>,
    pub p_hat: Vec<Complex<T>>,
    pub nu: T,
    pub dt: T,
    pub t: f64,
    pub step: u64,
}

impl<T: Real> SolverState<T> {
    pub fn new(physical_len: usize, spectral_len: usize, nu: T, dt: T) -> Self {
        let z = Complex::default();
        SolverState {
            u: zeros3(physical_len, T::zero()),
            u_hat: zeros3(spectral_len, z),
            curl: zeros3(physical_len, T::zero()),
            du: zeros3(spectral_len, z),
            u_hat0: zeros3(spectral_len, z),
            u_hat1: zeros3(spectral_len, z),
            p_hat: vec![z; spectral_len],
            nu,
            dt,
            t: 0.0,
            step: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverParams {
    pub n: usize,
    pub decomposition: Decomposition,
    pub nu: f64,
    pub dt: f64,
    pub dealias: DealiasRule,
    pub kernel_path: KernelPath,
    pub integrator: Integrator,
    pub fft_backend: FftBackend,
}

impl SolverParams {
    /// Settings of the reference Taylor-Green script at mesh size `n`.
    pub fn appendix(n: usize) -> Self {
        SolverParams {
            n,
            decomposition: Decomposition::serial(),
            nu: 0.000625,
            dt: 0.01,
            dealias: DealiasRule::Appendix,
            kernel_path: KernelPath::Fused,
            integrator: Integrator::Rk4,
            fft_backend: FftBackend::default(),
        }
    }
}

/// `out = F^-1(i k x u_hat)`, one component at a time through `scratch`.
pub fn curl_physical<T: Real>(
    fft: &mut DistFft<T>,
    kernels: &mut Kernels<T>,
    k: &VecField3<T>,
    u_hat: &VecField3<Complex<T>>,
    scratch: &mut [Complex<T>],
    out: &mut VecField3<T>,
) -> Result<()> {
    for c in [2, 1, 0] {
        kernels.curl_hat(c, k, u_hat, scratch)?;
        fft.inverse(scratch, &mut out[c])?;
    }
    Ok(())
}

/// `out = F(u x curl)` per component, with `cross` as physical scratch.
pub fn cross_spectral<T: Real>(
    fft: &mut DistFft<T>,
    kernels: &mut Kernels<T>,
    u: &VecField3<T>,
    curl: &VecField3<T>,
    cross: &mut VecField3<T>,
    out: &mut VecField3<Complex<T>>,
) -> Result<()> {
    kernels.cross3(u, curl, cross)?;
    for c in 0..3 {
        fft.forward(&cross[c], &mut out[c])?;
    }
    Ok(())
}

pub struct Solver<T: Real> {
    pub fft: DistFft<T>,
    pub tables: WaveTables<T>,
    pub state: SolverState<T>,
    pub params: SolverParams,
    kernels: Kernels<T>,
    tableau: RkTableau,
    cross: VecField3<T>,
    scratch: Vec<Complex<T>>,
}

impl<T: Real> Solver<T> {
    /// Plans transforms and allocates all state. Collective.
    pub fn new(params: SolverParams, comms: CommGroups) -> Result<Self> {
        let rank = comms.rank();
        params.decomposition.validate(params.n)?;
        let fft = DistFft::new(params.n, params.decomposition, comms, params.fft_backend)?;
        let tables = build_wave_tables(params.n, &params.decomposition, rank, params.dealias)?;
        let plen = fft.physical_layout().len();
        let slen = fft.spectral_layout().len();
        Ok(Solver {
            fft,
            tables,
            state: SolverState::new(plen, slen, T::lit(params.nu), T::lit(params.dt)),
            params,
            kernels: Kernels::new(params.kernel_path, plen, slen),
            tableau: RkTableau::default(),
            cross: zeros3(plen, T::zero()),
            scratch: vec![Complex::default(); slen],
        })
    }

    pub fn rank(&self) -> usize {
        self.fft.world().rank()
    }

    pub fn kernel_path(&self) -> KernelPath {
        self.kernels.path()
    }

    /// Swaps the elementwise kernels without touching the state.
    pub fn set_kernel_path(&mut self, path: KernelPath) {
        let plen = self.fft.physical_layout().len();
        self.kernels = Kernels::new(path, plen, self.tables.len());
        self.params.kernel_path = path;
    }

    /// Sets the physical velocity and its transform. Collective.
    pub fn set_velocity(&mut self, u: VecField3<T>) -> Result<()> {
        for c in 0..3 {
            self.state.u[c].copy_from_slice(&u[c]);
            self.fft.forward(&self.state.u[c], &mut self.state.u_hat[c])?;
        }
        Ok(())
    }

    /// Sets the spectral velocity and refreshes the physical one. Collective.
    pub fn set_spectral_velocity(&mut self, u_hat: VecField3<Complex<T>>) -> Result<()> {
        for c in 0..3 {
            self.state.u_hat[c].copy_from_slice(&u_hat[c]);
        }
        self.refresh_physical()
    }

    /// `U = F^-1(U_hat)`.
    pub fn refresh_physical(&mut self) -> Result<()> {
        for c in 0..3 {
            self.fft.inverse(&self.state.u_hat[c], &mut self.state.u[c])?;
        }
        Ok(())
    }

    /// Fills `state.curl` from `state.u_hat`.
    pub fn update_curl(&mut self) -> Result<()> {
        let s = &mut self.state;
        curl_physical(&mut self.fft, &mut self.kernels, &self.tables.kf, &s.u_hat, &mut self.scratch, &mut s.curl)
    }

    /// Evaluates the right-hand side into `state.du` and the modified
    /// pressure into `state.p_hat`. Stages after the first rebuild the
    /// physical velocity from the current spectral one.
    pub fn compute_rhs(&mut self, rk: usize) -> Result<()> {
        if rk > 0 {
            self.refresh_physical()?;
        }
        self.update_curl()?;
        let s = &mut self.state;
        cross_spectral(&mut self.fft, &mut self.kernels, &s.u, &s.curl, &mut self.cross, &mut s.du)?;
        self.kernels.rhs_tail(&mut s.du, &mut s.p_hat, &s.u_hat, &self.tables, s.nu)?;
        Ok(())
    }

    pub fn euler_step(&mut self) -> Result<()> {
        self.compute_rhs(0)?;
        let s = &mut self.state;
        let dt = s.dt;
        for c in 0..3 {
            for (u, d) in s.u_hat[c].iter_mut().zip(&s.du[c]) {
                *u = *u + *d * dt;
            }
        }
        self.refresh_physical()?;
        self.advance_clock();
        Ok(())
    }

    pub fn rk4_step(&mut self) -> Result<()> {
        let dt = self.params.dt;
        {
            let s = &mut self.state;
            for c in 0..3 {
                s.u_hat0[c].copy_from_slice(&s.u_hat[c]);
                s.u_hat1[c].copy_from_slice(&s.u_hat[c]);
            }
        }
        for rk in 0..4 {
            self.compute_rhs(rk)?;
            let s = &mut self.state;
            if rk < 3 {
                let bdt = T::lit(self.tableau.b[rk] * dt);
                for c in 0..3 {
                    for ((u, u0), d) in s.u_hat[c].iter_mut().zip(&s.u_hat0[c]).zip(&s.du[c]) {
                        *u = *u0 + *d * bdt;
                    }
                }
            }
            let adt = T::lit(self.tableau.a[rk] * dt);
            for c in 0..3 {
                for (u1, d) in s.u_hat1[c].iter_mut().zip(&s.du[c]) {
                    *u1 = *u1 + *d * adt;
                }
            }
        }
        let s = &mut self.state;
        for c in 0..3 {
            s.u_hat[c].copy_from_slice(&s.u_hat1[c]);
        }
        self.refresh_physical()?;
        self.advance_clock();
        Ok(())
    }

    fn advance_clock(&mut self) {
        self.state.t += self.params.dt;
        self.state.step += 1;
    }

    /// One step of the configured integrator.
    pub fn step(&mut self) -> Result<()> {
        match self.params.integrator {
            Integrator::Euler => self.euler_step(),
            Integrator::Rk4 => self.rk4_step(),
        }
    }

    /// Whether another step is needed to reach `t_end`.
    pub fn before(&self, t_end: f64) -> bool {
        self.state.t < t_end - END_TIME_SLACK
    }

    /// Steps until `t_end`, calling `after_step` after each one.
    pub fn advance_to<F>(&mut self, t_end: f64, mut after_step: F) -> Result<()>
    where
        F: FnMut(&mut Self) -> Result<()>,
    {
        while self.before(t_end) {
            self.step()?;
            after_step(self)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comm::SelfComm;

    fn serial(n: usize, nu: f64, dt: f64, integrator: Integrator) -> Solver<f64> {
        let params = SolverParams { nu, dt, integrator, ..SolverParams::appendix(n) };
        let comms = CommGroups::new(Box::new(SelfComm), &params.decomposition).unwrap();
        Solver::new(params, comms).unwrap()
    }

    fn shear(s: &Solver<f64>) -> VecField3<f64> {
        let n = s.params.n;
        let len = n * n * n;
        let mut u = zeros3(len, 0.0);
        for i in 0..n {
            for j in 0..n {
                let y = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
                for k in 0..n {
                    u[0][(i * n + j) * n + k] = y.sin();
                }
            }
        }
        u
    }

    #[test]
    fn tableau_weights_sum_to_one() {
        let t = RkTableau::default();
        assert!((t.a.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_state_has_zero_rhs() {
        let mut s = serial(8, 0.1, 0.01, Integrator::Rk4);
        s.compute_rhs(0).unwrap();
        assert!(s.state.du.iter().flatten().all(|c| c.norm() == 0.0));
        assert!(s.state.p_hat.iter().all(|c| c.norm() == 0.0));
        s.rk4_step().unwrap();
        assert!(s.state.u.iter().flatten().all(|&v| v == 0.0));
        assert_eq!(s.state.step, 1);
    }

    #[test]
    fn shear_rhs_is_pure_viscous_decay() {
        let nu = 0.3;
        let mut s = serial(16, nu, 0.01, Integrator::Euler);
        let u = shear(&s);
        s.set_velocity(u).unwrap();
        s.compute_rhs(0).unwrap();
        let scale = s.state.u_hat[0].iter().map(|c| c.norm()).fold(0.0, f64::max);
        for c in 0..3 {
            for (d, u) in s.state.du[c].iter().zip(&s.state.u_hat[c]) {
                assert!((d + u * nu).norm() <= 1e-12 * scale);
            }
        }
    }

    #[test]
    fn shear_euler_step_scales_mode() {
        let (nu, dt) = (0.2, 0.05);
        let mut s = serial(8, nu, dt, Integrator::Euler);
        let u = shear(&s);
        s.set_velocity(u).unwrap();
        let before = s.state.u_hat[0].clone();
        s.euler_step().unwrap();
        let scale = before.iter().map(|c| c.norm()).fold(0.0, f64::max);
        for (a, b) in s.state.u_hat[0].iter().zip(&before) {
            assert!((a - b * (1.0 - nu * dt)).norm() <= 1e-12 * scale);
        }
        assert!((s.state.t - dt).abs() < 1e-15);
    }

    #[test]
    fn shear_curl_is_minus_cos() {
        let mut s = serial(8, 0.1, 0.01, Integrator::Rk4);
        let u = shear(&s);
        s.set_velocity(u).unwrap();
        s.update_curl().unwrap();
        let n = 8;
        for i in 0..n {
            for j in 0..n {
                let y = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
                for k in 0..n {
                    let e = (i * n + j) * n + k;
                    assert!(s.state.curl[0][e].abs() < 1e-13);
                    assert!(s.state.curl[1][e].abs() < 1e-13);
                    assert!((s.state.curl[2][e] + y.cos()).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn rk4_loop_counts_steps() {
        let mut s = serial(8, 0.1, 0.01, Integrator::Rk4);
        s.advance_to(0.1, |_| Ok(())).unwrap();
        assert_eq!(s.state.step, 10);
    }
}
