//! Initial conditions.

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diagnostics::spectral_energy;
use crate::error::Result;
use crate::fft::DistFft;
use crate::kernels::VecField3;
use crate::mesh::{PhysicalMesh, WaveTables};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Case {
    #[default]
    TaylorGreen,
    /// Seeded random divergence-free field.
    Random,
    /// `u = (sin y, 0, 0)`.
    Shear,
}

impl Case {
    pub fn as_str(self) -> &'static str {
        match self {
            Case::TaylorGreen => "taylor-green",
            Case::Random => "random",
            Case::Shear => "shear",
        }
    }
}

fn pointwise<T: Real>(mesh: &PhysicalMesh<T>, f: impl Fn(f64, f64, f64) -> [f64; 3]) -> VecField3<T> {
    let [lx, ly, lz] = mesh.layout.local;
    let len = lx * ly * lz;
    let mut u: VecField3<T> = std::array::from_fn(|_| Vec::with_capacity(len));
    for &x in &mesh.coords[0] {
        for &y in &mesh.coords[1] {
            for &z in &mesh.coords[2] {
                let v = f(x.as_f64(), y.as_f64(), z.as_f64());
                for c in 0..3 {
                    u[c].push(T::lit(v[c]));
                }
            }
        }
    }
    u
}

/// `u = (sin x cos y cos z, -cos x sin y cos z, 0)`.
pub fn taylor_green<T: Real>(mesh: &PhysicalMesh<T>) -> VecField3<T> {
    pointwise(mesh, |x, y, z| [x.sin() * y.cos() * z.cos(), -x.cos() * y.sin() * z.cos(), 0.0])
}

/// Plane shear `u = (sin y, 0, 0)`, an exact decaying solution.
pub fn shear_mode<T: Real>(mesh: &PhysicalMesh<T>) -> VecField3<T> {
    pointwise(mesh, |_, y, _| [y.sin(), 0.0, 0.0])
}

/// Spectrum of a seeded random solenoidal field with kinetic energy
/// `energy`.
///
/// Every rank draws the same global white-noise field and keeps its own
/// block, so the result does not depend on the decomposition. The noise is
/// transformed, shaped by a Gaussian envelope peaking at low wavenumbers,
/// stripped of the mean and of every Nyquist plane, and projected onto
/// divergence-free modes. Collective.
pub fn random_solenoidal<T: Real>(
    fft: &mut DistFft<T>,
    tables: &WaveTables<T>,
    seed: u64,
    energy: f64,
) -> Result<VecField3<Complex<T>>> {
    let n = fft.n();
    let layout = fft.physical_layout().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u: VecField3<T> = std::array::from_fn(|_| vec![T::zero(); layout.len()]);
    for comp in u.iter_mut() {
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let v: f64 = rng.gen_range(-1.0..1.0);
                    if let Some(e) = layout.local_flat([i, j, k]) {
                        comp[e] = T::lit(v);
                    }
                }
            }
        }
    }
    let slen = tables.len();
    let mut u_hat: VecField3<Complex<T>> = std::array::from_fn(|_| vec![Complex::default(); slen]);
    for c in 0..3 {
        fft.forward(&u[c], &mut u_hat[c])?;
    }

    let nyq = (n / 2) as i32;
    let peak = 2.0f64;
    for e in 0..slen {
        let k = tables.wavevector(e);
        let k2 = tables.k2[e];
        if k2 == 0 || k.iter().any(|&v| v.abs() == nyq) {
            for comp in u_hat.iter_mut() {
                comp[e] = Complex::default();
            }
            continue;
        }
        let env = T::lit((-(k2 as f64) / (2.0 * peak * peak)).exp());
        let mut v: [Complex<T>; 3] = std::array::from_fn(|c| u_hat[c][e] * env);
        // v -= k (k . v) / |k|^2
        let kf: [T; 3] = std::array::from_fn(|c| tables.kf[c][e]);
        let dot = v[0] * tables.k_over_k2[0][e] + v[1] * tables.k_over_k2[1][e] + v[2] * tables.k_over_k2[2][e];
        for c in 0..3 {
            v[c] = v[c] - dot * kf[c];
            u_hat[c][e] = v[c];
        }
    }

    let current = spectral_energy(&u_hat, tables, fft.world())?;
    if current > 0.0 {
        let scale = T::lit((energy / current).sqrt());
        for comp in u_hat.iter_mut() {
            for z in comp.iter_mut() {
                *z = *z * scale;
            }
        }
    }
    Ok(u_hat)
}
