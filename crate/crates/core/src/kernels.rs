//! Elementwise kernels in two interchangeable forms: a multi-pass path that
//! sweeps the grid once per arithmetic operation through preallocated
//! temporaries, and a fused path that does all the work for a grid point in
//! one sweep. Both perform the same floating-point operations in the same
//! order, so their results agree bit for bit.

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::WaveTables;
use crate::real::Real;

/// Three component arrays sharing one layout.
pub type VecField3<T> = [Vec<T>; 3];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KernelError {
    #[error("{what}: expected {expected} elements, got {got}")]
    ShapeMismatch { what: &'static str, expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelPath {
    Naive,
    #[default]
    Fused,
}

impl KernelPath {
    pub fn as_str(self) -> &'static str {
        match self {
            KernelPath::Naive => "naive",
            KernelPath::Fused => "fused",
        }
    }
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<(), KernelError> {
    if expected != got {
        return Err(KernelError::ShapeMismatch { what, expected, got });
    }
    Ok(())
}

fn check3<U>(what: &'static str, expected: usize, f: &[Vec<U>; 3]) -> Result<(), KernelError> {
    for c in f {
        check_len(what, expected, c.len())?;
    }
    Ok(())
}

#[inline(always)]
fn mask<T: Real>(keep: bool) -> T {
    if keep {
        T::one()
    } else {
        T::zero()
    }
}

/// Kernel dispatcher owning the temporaries the multi-pass path needs.
pub struct Kernels<T> {
    path: KernelPath,
    phys: [Vec<T>; 2],
    spec: [Vec<Complex<T>>; 2],
    spec_real: Vec<T>,
}

impl<T: Real> Kernels<T> {
    pub fn new(path: KernelPath, physical_len: usize, spectral_len: usize) -> Self {
        let (p, s) = match path {
            KernelPath::Naive => (physical_len, spectral_len),
            KernelPath::Fused => (0, 0),
        };
        Kernels {
            path,
            phys: [vec![T::zero(); p], vec![T::zero(); p]],
            spec: [vec![Complex::default(); s], vec![Complex::default(); s]],
            spec_real: vec![T::zero(); s],
        }
    }

    pub fn path(&self) -> KernelPath {
        self.path
    }

    /// `out = a x b` pointwise.
    pub fn cross3(&mut self, a: &VecField3<T>, b: &VecField3<T>, out: &mut VecField3<T>) -> Result<(), KernelError> {
        let len = a[0].len();
        check3("cross operand a", len, a)?;
        check3("cross operand b", len, b)?;
        check3("cross output", len, out)?;
        match self.path {
            KernelPath::Fused => cross3_fused(a, b, out),
            KernelPath::Naive => {
                check_len("cross temporaries", len, self.phys[0].len())?;
                let [t1, t2] = &mut self.phys;
                cross3_naive(a, b, out, t1, t2)
            }
        }
        Ok(())
    }

    /// `out = i (k x u_hat)_c`, one component of the spectral curl.
    pub fn curl_hat(
        &mut self,
        component: usize,
        k: &VecField3<T>,
        u_hat: &VecField3<Complex<T>>,
        out: &mut [Complex<T>],
    ) -> Result<(), KernelError> {
        let len = out.len();
        check3("wavenumbers", len, k)?;
        check3("spectral velocity", len, u_hat)?;
        match self.path {
            KernelPath::Fused => curl_hat_fused(component, k, u_hat, out),
            KernelPath::Naive => {
                check_len("curl temporaries", len, self.spec[0].len())?;
                let [t1, t2] = &mut self.spec;
                curl_hat_naive(component, k, u_hat, out, t1, t2)
            }
        }
        Ok(())
    }

    /// Elementwise tail of the right-hand side: dealias the convection
    /// term held in `du`, compute the pressure `p_hat = du . k/|k|^2`,
    /// subtract its gradient and the viscous term.
    pub fn rhs_tail(
        &mut self,
        du: &mut VecField3<Complex<T>>,
        p_hat: &mut [Complex<T>],
        u_hat: &VecField3<Complex<T>>,
        tables: &WaveTables<T>,
        nu: T,
    ) -> Result<(), KernelError> {
        let len = tables.len();
        check3("rhs", len, du)?;
        check3("spectral velocity", len, u_hat)?;
        check_len("pressure", len, p_hat.len())?;
        match self.path {
            KernelPath::Fused => rhs_tail_fused(du, p_hat, u_hat, tables, nu),
            KernelPath::Naive => {
                check_len("rhs temporaries", len, self.spec[0].len())?;
                let [t1, t2] = &mut self.spec;
                rhs_tail_naive(du, p_hat, u_hat, tables, nu, t1, t2, &mut self.spec_real)
            }
        }
        Ok(())
    }
}

pub fn cross3_fused<T: Real>(a: &VecField3<T>, b: &VecField3<T>, out: &mut VecField3<T>) {
    let [o0, o1, o2] = out;
    for e in 0..o0.len() {
        let (a0, a1, a2) = (a[0][e], a[1][e], a[2][e]);
        let (b0, b1, b2) = (b[0][e], b[1][e], b[2][e]);
        o0[e] = a1 * b2 - a2 * b1;
        o1[e] = a2 * b0 - a0 * b2;
        o2[e] = a0 * b1 - a1 * b0;
    }
}

/// Nine sweeps: two multiplies and a subtraction per component.
pub fn cross3_naive<T: Real>(a: &VecField3<T>, b: &VecField3<T>, out: &mut VecField3<T>, t1: &mut [T], t2: &mut [T]) {
    for c in 0..3 {
        let (p, q) = ((c + 1) % 3, (c + 2) % 3);
        for (t, (x, y)) in t1.iter_mut().zip(a[p].iter().zip(&b[q])) {
            *t = *x * *y;
        }
        for (t, (x, y)) in t2.iter_mut().zip(a[q].iter().zip(&b[p])) {
            *t = *x * *y;
        }
        for (o, (x, y)) in out[c].iter_mut().zip(t1.iter().zip(t2.iter())) {
            *o = *x - *y;
        }
    }
}

#[inline(always)]
fn times_i<T: Real>(z: Complex<T>) -> Complex<T> {
    Complex::new(-z.im, z.re)
}

pub fn curl_hat_fused<T: Real>(component: usize, k: &VecField3<T>, u_hat: &VecField3<Complex<T>>, out: &mut [Complex<T>]) {
    let (p, q) = ((component + 1) % 3, (component + 2) % 3);
    let (kp, kq, up, uq) = (&k[p], &k[q], &u_hat[p], &u_hat[q]);
    for (e, o) in out.iter_mut().enumerate() {
        *o = times_i(uq[e] * kp[e] - up[e] * kq[e]);
    }
}

pub fn curl_hat_naive<T: Real>(
    component: usize,
    k: &VecField3<T>,
    u_hat: &VecField3<Complex<T>>,
    out: &mut [Complex<T>],
    t1: &mut [Complex<T>],
    t2: &mut [Complex<T>],
) {
    let (p, q) = ((component + 1) % 3, (component + 2) % 3);
    for (t, (u, kk)) in t1.iter_mut().zip(u_hat[q].iter().zip(&k[p])) {
        *t = *u * *kk;
    }
    for (t, (u, kk)) in t2.iter_mut().zip(u_hat[p].iter().zip(&k[q])) {
        *t = *u * *kk;
    }
    for (t, s) in t1.iter_mut().zip(t2.iter()) {
        *t = *t - *s;
    }
    for (o, t) in out.iter_mut().zip(t1.iter()) {
        *o = times_i(*t);
    }
}

pub fn rhs_tail_fused<T: Real>(
    du: &mut VecField3<Complex<T>>,
    p_hat: &mut [Complex<T>],
    u_hat: &VecField3<Complex<T>>,
    tables: &WaveTables<T>,
    nu: T,
) {
    let [d0, d1, d2] = du;
    let kok = &tables.k_over_k2;
    let k = &tables.kf;
    for e in 0..p_hat.len() {
        let m = mask::<T>(tables.dealias[e]);
        let c0 = d0[e] * m;
        let c1 = d1[e] * m;
        let c2 = d2[e] * m;
        let mut p = c0 * kok[0][e] + c1 * kok[1][e];
        p = p + c2 * kok[2][e];
        let visc = nu * tables.k2f[e];
        d0[e] = (c0 - p * k[0][e]) - u_hat[0][e] * visc;
        d1[e] = (c1 - p * k[1][e]) - u_hat[1][e] * visc;
        d2[e] = (c2 - p * k[2][e]) - u_hat[2][e] * visc;
        p_hat[e] = p;
    }
}

#[allow(clippy::too_many_arguments)]
pub fn rhs_tail_naive<T: Real>(
    du: &mut VecField3<Complex<T>>,
    p_hat: &mut [Complex<T>],
    u_hat: &VecField3<Complex<T>>,
    tables: &WaveTables<T>,
    nu: T,
    t1: &mut [Complex<T>],
    t2: &mut [Complex<T>],
    r: &mut [T],
) {
    for d in du.iter_mut() {
        for (x, &keep) in d.iter_mut().zip(&tables.dealias) {
            *x = *x * mask::<T>(keep);
        }
    }
    for (t, (x, w)) in t1.iter_mut().zip(du[0].iter().zip(&tables.k_over_k2[0])) {
        *t = *x * *w;
    }
    for (t, (x, w)) in t2.iter_mut().zip(du[1].iter().zip(&tables.k_over_k2[1])) {
        *t = *x * *w;
    }
    for (p, (x, y)) in p_hat.iter_mut().zip(t1.iter().zip(t2.iter())) {
        *p = *x + *y;
    }
    for (t, (x, w)) in t1.iter_mut().zip(du[2].iter().zip(&tables.k_over_k2[2])) {
        *t = *x * *w;
    }
    for (p, t) in p_hat.iter_mut().zip(t1.iter()) {
        *p = *p + *t;
    }
    for c in 0..3 {
        for (t, (p, kk)) in t1.iter_mut().zip(p_hat.iter().zip(&tables.kf[c])) {
            *t = *p * *kk;
        }
        for (x, t) in du[c].iter_mut().zip(t1.iter()) {
            *x = *x - *t;
        }
    }
    for (v, kk) in r.iter_mut().zip(&tables.k2f) {
        *v = nu * *kk;
    }
    for c in 0..3 {
        for (t, (u, v)) in t1.iter_mut().zip(u_hat[c].iter().zip(r.iter())) {
            *t = *u * *v;
        }
        for (x, t) in du[c].iter_mut().zip(t1.iter()) {
            *x = *x - *t;
        }
    }
}
