//! Serial line transforms and their composition into distributed 3D real
//! transforms.
//!
//! Forward transforms are unnormalized sums; every inverse line transform
//! carries `1/n`, so a 3D round trip is the identity.

mod dist;
pub mod oracle;
mod radix2;

pub use dist::{CommGroups, DistFft};
pub use radix2::Radix2Plan;

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comm::CommError;
use crate::mesh::MeshError;
use crate::real::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FftError {
    #[error("unsupported transform length {0} (power of two required)")]
    UnsupportedLength(usize),
    #[error("{what}: expected {expected} elements, got {got}")]
    LayoutMismatch { what: &'static str, expected: usize, got: usize },
    #[error(transparent)]
    Comm(#[from] CommError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// A planned 1D complex transform of fixed length.
pub trait LinePlan<T>: Send + Sync {
    fn len(&self) -> usize;

    fn scratch_len(&self) -> usize;

    /// Unnormalized forward transform, `sum_j a_j exp(-2 pi i jk/n)`.
    fn forward(&self, line: &mut [Complex<T>], scratch: &mut [Complex<T>]);

    /// Unnormalized backward transform, `sum_k a_k exp(+2 pi i jk/n)`.
    fn inverse(&self, line: &mut [Complex<T>], scratch: &mut [Complex<T>]);
}

/// Source of serial line transforms.
pub trait FftProvider<T: Real>: Send + Sync {
    fn name(&self) -> &'static str;

    fn plan(&self, len: usize) -> Result<Arc<dyn LinePlan<T>>, FftError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FftBackend {
    /// Built-in radix-2.
    Radix2,
    /// Delegates to `rustfft`.
    #[default]
    RustFft,
}

impl FftBackend {
    pub fn provider<T: Real>(self) -> Box<dyn FftProvider<T>> {
        match self {
            FftBackend::Radix2 => Box::new(Radix2Provider),
            FftBackend::RustFft => Box::new(RustFftProvider),
        }
    }
}

pub struct Radix2Provider;

impl<T: Real> FftProvider<T> for Radix2Provider {
    fn name(&self) -> &'static str {
        "radix2"
    }

    fn plan(&self, len: usize) -> Result<Arc<dyn LinePlan<T>>, FftError> {
        Ok(Arc::new(Radix2Plan::<T>::new(len)?))
    }
}

pub struct RustFftProvider;

struct RustFftPlan<T: Real> {
    fwd: Arc<dyn rustfft::Fft<T>>,
    inv: Arc<dyn rustfft::Fft<T>>,
}

impl<T: Real> LinePlan<T> for RustFftPlan<T> {
    fn len(&self) -> usize {
        self.fwd.len()
    }

    fn scratch_len(&self) -> usize {
        self.fwd.get_inplace_scratch_len().max(self.inv.get_inplace_scratch_len())
    }

    fn forward(&self, line: &mut [Complex<T>], scratch: &mut [Complex<T>]) {
        let s = self.fwd.get_inplace_scratch_len();
        self.fwd.process_with_scratch(line, &mut scratch[..s]);
    }

    fn inverse(&self, line: &mut [Complex<T>], scratch: &mut [Complex<T>]) {
        let s = self.inv.get_inplace_scratch_len();
        self.inv.process_with_scratch(line, &mut scratch[..s]);
    }
}

impl<T: Real> FftProvider<T> for RustFftProvider {
    fn name(&self) -> &'static str {
        "rustfft"
    }

    fn plan(&self, len: usize) -> Result<Arc<dyn LinePlan<T>>, FftError> {
        if len == 0 || !len.is_power_of_two() {
            return Err(FftError::UnsupportedLength(len));
        }
        let mut planner = rustfft::FftPlanner::new();
        Ok(Arc::new(RustFftPlan { fwd: planner.plan_fft_forward(len), inv: planner.plan_fft_inverse(len) }))
    }
}

/// Real-to-half-spectrum transform of even length `n`, computed with one
/// complex transform of length `n/2`.
pub struct RealPlan<T> {
    n: usize,
    half: Arc<dyn LinePlan<T>>,
    /// `exp(-2 pi i k / n)` for `k < n/2`.
    twiddles: Vec<Complex<T>>,
}

impl<T: Real> RealPlan<T> {
    pub fn new(n: usize, provider: &dyn FftProvider<T>) -> Result<Self, FftError> {
        if n < 2 || !n.is_multiple_of(2) {
            return Err(FftError::UnsupportedLength(n));
        }
        let half = provider.plan(n / 2)?;
        let twiddles = (0..n / 2)
            .map(|k| {
                let a = -2.0 * PI * k as f64 / n as f64;
                Complex::new(T::lit(a.cos()), T::lit(a.sin()))
            })
            .collect();
        Ok(RealPlan { n, half, twiddles })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Length of the packed complex buffer both directions need.
    pub fn buffer_len(&self) -> usize {
        self.n / 2
    }

    pub fn scratch_len(&self) -> usize {
        self.half.scratch_len()
    }

    /// `out[k] = sum_j x_j exp(-2 pi i jk/n)` for `k = 0..=n/2`.
    pub fn forward(&self, x: &[T], out: &mut [Complex<T>], buf: &mut [Complex<T>], scratch: &mut [Complex<T>]) {
        let h = self.n / 2;
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(out.len(), h + 1);
        for (m, z) in buf[..h].iter_mut().enumerate() {
            *z = Complex::new(x[2 * m], x[2 * m + 1]);
        }
        self.half.forward(&mut buf[..h], scratch);
        let half = T::lit(0.5);
        let z0 = buf[0];
        out[0] = Complex::new(z0.re + z0.im, T::zero());
        out[h] = Complex::new(z0.re - z0.im, T::zero());
        for k in 1..h {
            let zk = buf[k];
            let zc = buf[h - k].conj();
            let even = (zk + zc) * half;
            let d = (zk - zc) * half;
            // -i * d
            let odd = Complex::new(d.im, -d.re);
            out[k] = even + self.twiddles[k] * odd;
        }
    }

    /// Inverse of [`RealPlan::forward`] including the `1/n` factor. The
    /// imaginary parts of the `k = 0` and `k = n/2` inputs are ignored.
    pub fn inverse(&self, spec: &[Complex<T>], x: &mut [T], buf: &mut [Complex<T>], scratch: &mut [Complex<T>]) {
        let h = self.n / 2;
        debug_assert_eq!(spec.len(), h + 1);
        debug_assert_eq!(x.len(), self.n);
        let x0 = spec[0].re;
        let xn = spec[h].re;
        buf[0] = Complex::new(x0 + xn, x0 - xn);
        for k in 1..h {
            let xk = spec[k];
            let xc = spec[h - k].conj();
            let even = xk + xc;
            let odd = (xk - xc) * self.twiddles[k].conj();
            // even + i * odd
            buf[k] = Complex::new(even.re - odd.im, even.im + odd.re);
        }
        self.half.inverse(&mut buf[..h], scratch);
        let scale = T::one() / T::lit(self.n as f64);
        for (m, z) in buf[..h].iter().enumerate() {
            x[2 * m] = z.re * scale;
            x[2 * m + 1] = z.im * scale;
        }
    }
}

/// Lines gathered per batch when transforming along a strided axis.
const BATCH: usize = 16;

/// Workspace for [`complex_axis`].
pub(crate) struct AxisBuffers<T> {
    lines: Vec<Complex<T>>,
    scratch: Vec<Complex<T>>,
}

impl<T: Real> AxisBuffers<T> {
    pub(crate) fn new(n: usize, scratch_len: usize) -> Self {
        AxisBuffers { lines: vec![Complex::default(); BATCH * n], scratch: vec![Complex::default(); scratch_len] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Direction {
    Forward,
    Inverse,
}

/// Transforms every line of `data` (row-major `shape`) along `axis`. The
/// inverse direction includes the `1/n` factor.
pub(crate) fn complex_axis<T: Real>(
    data: &mut [Complex<T>],
    shape: [usize; 3],
    axis: usize,
    plan: &dyn LinePlan<T>,
    dir: Direction,
    bufs: &mut AxisBuffers<T>,
) {
    let n = shape[axis];
    debug_assert_eq!(plan.len(), n);
    debug_assert_eq!(data.len(), shape.iter().product::<usize>());
    let scale = T::one() / T::lit(n as f64);
    let run = |line: &mut [Complex<T>], scratch: &mut [Complex<T>]| match dir {
        Direction::Forward => plan.forward(line, scratch),
        Direction::Inverse => {
            plan.inverse(line, scratch);
            for v in line.iter_mut() {
                *v = *v * scale;
            }
        }
    };
    if axis == 2 {
        for row in data.chunks_exact_mut(n) {
            run(row, &mut bufs.scratch);
        }
        return;
    }
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    for o in 0..outer {
        let base = o * n * inner;
        let mut m0 = 0;
        while m0 < inner {
            let width = BATCH.min(inner - m0);
            for i in 0..n {
                let src = &data[base + i * inner + m0..base + i * inner + m0 + width];
                for (b, &v) in src.iter().enumerate() {
                    bufs.lines[b * n + i] = v;
                }
            }
            for b in 0..width {
                run(&mut bufs.lines[b * n..(b + 1) * n], &mut bufs.scratch);
            }
            for i in 0..n {
                let dst = &mut data[base + i * inner + m0..base + i * inner + m0 + width];
                for (b, v) in dst.iter_mut().enumerate() {
                    *v = bufs.lines[b * n + i];
                }
            }
            m0 += width;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn direct_dft(x: &[Complex<f64>], sign: f64) -> Vec<Complex<f64>> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(j, &v)| {
                        let a = sign * 2.0 * PI * ((j * k) % n) as f64 / n as f64;
                        v * Complex::new(a.cos(), a.sin())
                    })
                    .sum()
            })
            .collect()
    }

    fn random_line(n: usize, seed: u64) -> Vec<Complex<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect()
    }

    #[test]
    fn providers_match_direct_dft() {
        for backend in [FftBackend::Radix2, FftBackend::RustFft] {
            let provider = backend.provider::<f64>();
            for n in [1, 2, 4, 8, 32] {
                let plan = provider.plan(n).unwrap();
                let mut scratch = vec![Complex::default(); plan.scratch_len()];
                let x = random_line(n, n as u64);
                let mut y = x.clone();
                plan.forward(&mut y, &mut scratch);
                for (a, b) in y.iter().zip(direct_dft(&x, -1.0)) {
                    assert!((a - b).norm() < 1e-12, "{backend:?} n={n}");
                }
                plan.inverse(&mut y, &mut scratch);
                for (a, b) in y.iter().zip(&x) {
                    assert!((a / n as f64 - b).norm() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn radix2_rejects_other_lengths() {
        assert!(matches!(Radix2Plan::<f64>::new(12), Err(FftError::UnsupportedLength(12))));
        assert!(RustFftProvider.plan(6).map(|_: Arc<dyn LinePlan<f64>>| ()).is_err());
    }

    #[test]
    fn constant_line_transforms_to_dc() {
        let plan = RealPlan::new(8, &Radix2Provider).unwrap();
        let mut out = vec![Complex::default(); 5];
        let mut buf = vec![Complex::default(); 4];
        plan.forward(&[2.5f64; 8], &mut out, &mut buf, &mut []);
        assert_eq!(out[0], Complex::new(20.0, 0.0));
        assert!(out[1..].iter().all(|c| c.norm() < 1e-14));
    }

    #[test]
    fn sine_real_transform() {
        let x: Vec<f64> = (0..8).map(|j| (2.0 * PI * j as f64 / 8.0).sin()).collect();
        let plan = RealPlan::new(8, &RustFftProvider).unwrap();
        let mut out = vec![Complex::default(); 5];
        let mut buf = vec![Complex::default(); 4];
        let mut scratch = vec![Complex::default(); plan.scratch_len()];
        plan.forward(&x, &mut out, &mut buf, &mut scratch);
        for (k, c) in out.iter().enumerate() {
            let expect = if k == 1 { Complex::new(0.0, -4.0) } else { Complex::default() };
            assert!((c - expect).norm() < 1e-14, "k={k}: {c}");
        }
    }

    #[test]
    fn real_transform_matches_direct_dft_and_roundtrips() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [2usize, 4, 8, 16, 64] {
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let plan = RealPlan::new(n, &Radix2Provider).unwrap();
            let mut out = vec![Complex::default(); n / 2 + 1];
            let mut buf = vec![Complex::default(); n / 2];
            plan.forward(&x, &mut out, &mut buf, &mut []);
            let xc: Vec<_> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
            let oracle = direct_dft(&xc, -1.0);
            for k in 0..=n / 2 {
                assert!((out[k] - oracle[k]).norm() < 1e-13);
            }
            let mut back = vec![0.0; n];
            plan.inverse(&out, &mut back, &mut buf, &mut []);
            for (a, b) in back.iter().zip(&x) {
                assert!((a - b).abs() < 1e-14 * n as f64);
            }
        }
    }

    #[test]
    fn inverse_ignores_imaginary_dc_and_nyquist() {
        let plan = RealPlan::new(8, &Radix2Provider).unwrap();
        let mut spec = vec![Complex::new(1.0, 0.0); 5];
        let mut buf = vec![Complex::default(); 4];
        let mut a = vec![0.0f64; 8];
        plan.inverse(&spec, &mut a, &mut buf, &mut []);
        spec[0].im = 3.0;
        spec[4].im = -2.0;
        let mut b = vec![0.0f64; 8];
        plan.inverse(&spec, &mut b, &mut buf, &mut []);
        assert_eq!(a, b);
    }

    #[test]
    fn strided_axis_transform_matches_per_line_dft() {
        // Inner extents 20, 24 and 2 exercise partial batches.
        let cases = [([8usize, 4, 5], 0usize), ([8, 3, 8], 0), ([3, 8, 20], 1), ([6, 4, 16], 2), ([5, 2, 2], 1)];
        for (shape, axis) in cases {
            let data0 = random_line(shape.iter().product(), 9);
            let plan = FftProvider::<f64>::plan(&RustFftProvider, shape[axis]).unwrap();
            let mut bufs = AxisBuffers::new(shape[axis], plan.scratch_len());
            let mut data = data0.clone();
            complex_axis(&mut data, shape, axis, plan.as_ref(), Direction::Forward, &mut bufs);
            let idx = |p: [usize; 3]| (p[0] * shape[1] + p[1]) * shape[2] + p[2];
            let mut start = [shape[0] - 1, shape[1] / 2, 1];
            start[axis] = 0;
            let at = |t: usize| {
                let mut p = start;
                p[axis] = t;
                idx(p)
            };
            let line: Vec<_> = (0..shape[axis]).map(|t| data0[at(t)]).collect();
            for (t, o) in direct_dft(&line, -1.0).iter().enumerate() {
                assert!((data[at(t)] - o).norm() < 1e-12, "{shape:?} axis {axis}");
            }
            complex_axis(&mut data, shape, axis, plan.as_ref(), Direction::Inverse, &mut bufs);
            for (a, b) in data.iter().zip(&data0) {
                assert!((a - b).norm() < 1e-14);
            }
        }
    }
}
