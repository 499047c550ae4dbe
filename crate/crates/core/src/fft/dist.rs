//! Distributed 3D real transforms for serial, slab and pencil layouts.

use std::sync::Arc;

use num_complex::Complex;

use super::{complex_axis, AxisBuffers, Direction, FftBackend, FftError, LinePlan, RealPlan};
use crate::comm::{CommError, Communicator};
use crate::mesh::{Decomposition, DecompositionKind, Layout};
use crate::real::Real;

/// The world communicator plus the two pencil subgroups.
pub struct CommGroups {
    pub world: Box<dyn Communicator>,
    pub xz: Option<Box<dyn Communicator>>,
    pub xy: Option<Box<dyn Communicator>>,
}

impl CommGroups {
    /// Splits `world` as the decomposition requires. Collective.
    pub fn new(world: Box<dyn Communicator>, decomp: &Decomposition) -> Result<CommGroups, CommError> {
        if world.size() != decomp.ranks {
            return Err(CommError::Mismatch(format!(
                "decomposition expects {} ranks but the communicator has {}",
                decomp.ranks,
                world.size()
            )));
        }
        let (xz, xy) = match decomp.kind {
            DecompositionKind::Pencil => {
                let rank = world.rank();
                let xz = world.split(decomp.xz_color(rank))?;
                let xy = world.split(decomp.xy_color(rank))?;
                (Some(xz), Some(xy))
            }
            _ => (None, None),
        };
        Ok(CommGroups { world, xz, xy })
    }

    pub fn rank(&self) -> usize {
        self.world.rank()
    }
}

/// Preallocated intermediate arrays for one rank's transforms.
struct FftWorkspace<T> {
    /// Real-transform output before the first exchange (pencil only).
    zpencil: Vec<Complex<T>>,
    a: Vec<Complex<T>>,
    b: Vec<Complex<T>>,
    rbuf: Vec<Complex<T>>,
    axis: AxisBuffers<T>,
}

/// Planned forward/inverse 3D real transform on one rank.
pub struct DistFft<T: Real> {
    n: usize,
    decomp: Decomposition,
    physical: Layout,
    spectral: Layout,
    cplan: Arc<dyn LinePlan<T>>,
    rplan: RealPlan<T>,
    comms: CommGroups,
    ws: FftWorkspace<T>,
}

impl<T: Real> DistFft<T> {
    pub fn new(n: usize, decomp: Decomposition, comms: CommGroups, backend: FftBackend) -> Result<Self, FftError> {
        let rank = comms.rank();
        let physical = Layout::physical(n, &decomp, rank)?;
        let spectral = Layout::spectral(n, &decomp, rank)?;
        if comms.world.size() != decomp.ranks {
            return Err(CommError::Mismatch(format!(
                "decomposition expects {} ranks but the communicator has {}",
                decomp.ranks,
                comms.world.size()
            ))
            .into());
        }
        let provider = backend.provider::<T>();
        let cplan = provider.plan(n)?;
        let rplan = RealPlan::new(n, provider.as_ref())?;
        let nf = n / 2 + 1;
        let (zlen, work) = match decomp.kind {
            DecompositionKind::Serial => (0, n * n * nf),
            DecompositionKind::Slab => (0, physical.local[0] * n * nf),
            DecompositionKind::Pencil => {
                let (n1, n2) = (physical.local[0], physical.local[1]);
                (n1 * n2 * nf, n * n2 * (n1 / 2))
            }
        };
        let scratch = cplan.scratch_len().max(rplan.scratch_len());
        let ws = FftWorkspace {
            zpencil: vec![Complex::default(); zlen],
            a: vec![Complex::default(); work],
            b: vec![Complex::default(); if decomp.kind == DecompositionKind::Serial { 0 } else { work }],
            rbuf: vec![Complex::default(); rplan.buffer_len()],
            axis: AxisBuffers::new(n, scratch),
        };
        Ok(DistFft { n, decomp, physical, spectral, cplan, rplan, comms, ws })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn decomposition(&self) -> &Decomposition {
        &self.decomp
    }

    pub fn physical_layout(&self) -> &Layout {
        &self.physical
    }

    pub fn spectral_layout(&self) -> &Layout {
        &self.spectral
    }

    pub fn comms(&self) -> &CommGroups {
        &self.comms
    }

    pub fn world(&self) -> &dyn Communicator {
        self.comms.world.as_ref()
    }

    fn check(&self, u: usize, fu: usize) -> Result<(), FftError> {
        if u != self.physical.len() {
            return Err(FftError::LayoutMismatch { what: "physical field", expected: self.physical.len(), got: u });
        }
        if fu != self.spectral.len() {
            return Err(FftError::LayoutMismatch { what: "spectral field", expected: self.spectral.len(), got: fu });
        }
        Ok(())
    }

    fn real_rows_forward(&mut self, u: &[T], out: &mut [Complex<T>]) {
        let n = self.n;
        let nf = n / 2 + 1;
        for (row, orow) in u.chunks_exact(n).zip(out.chunks_exact_mut(nf)) {
            self.rplan.forward(row, orow, &mut self.ws.rbuf, &mut self.ws.axis.scratch);
        }
    }

    fn real_rows_inverse(&mut self, spec: &[Complex<T>], u: &mut [T]) {
        let n = self.n;
        let nf = n / 2 + 1;
        for (srow, row) in spec.chunks_exact(nf).zip(u.chunks_exact_mut(n)) {
            self.rplan.inverse(srow, row, &mut self.ws.rbuf, &mut self.ws.axis.scratch);
        }
    }

    /// `fu = F(u)` on this rank's spectral block. Collective.
    pub fn forward(&mut self, u: &[T], fu: &mut [Complex<T>]) -> Result<(), FftError> {
        self.check(u.len(), fu.len())?;
        let n = self.n;
        let nf = n / 2 + 1;
        let cplan = self.cplan.clone();
        match self.decomp.kind {
            DecompositionKind::Serial => {
                self.real_rows_forward(u, fu);
                complex_axis(fu, [n, n, nf], 1, cplan.as_ref(), Direction::Forward, &mut self.ws.axis);
                complex_axis(fu, [n, n, nf], 0, cplan.as_ref(), Direction::Forward, &mut self.ws.axis);
            }
            DecompositionKind::Slab => {
                let np = self.physical.local[0];
                let m = self.decomp.ranks;
                let mut t = std::mem::take(&mut self.ws.a);
                self.real_rows_forward(u, &mut t);
                complex_axis(&mut t, [np, n, nf], 1, cplan.as_ref(), Direction::Forward, &mut self.ws.axis);
                slab_pack(&t, &mut self.ws.b, np, m, nf);
                self.ws.a = t;
                self.comms.world.all_to_all(&self.ws.b, fu)?;
                complex_axis(fu, [n, np, nf], 0, cplan.as_ref(), Direction::Forward, &mut self.ws.axis);
            }
            DecompositionKind::Pencil => {
                let (n1, n2) = (self.physical.local[0], self.physical.local[1]);
                let (p1, p2) = (self.decomp.p1, self.decomp.p2());
                let h = n1 / 2;
                let mut z = std::mem::take(&mut self.ws.zpencil);
                self.real_rows_forward(u, &mut z);
                pencil_pack_z(&z, &mut self.ws.a, n1, n2, p1, nf);
                self.ws.zpencil = z;
                let xz = self.comms.xz.as_deref().expect("pencil xz group");
                xz.all_to_all(&self.ws.a, &mut self.ws.b)?;
                complex_axis(&mut self.ws.b, [n, n2, h], 0, cplan.as_ref(), Direction::Forward, &mut self.ws.axis);
                let xy = self.comms.xy.as_deref().expect("pencil xy group");
                xy.all_to_all(&self.ws.b, &mut self.ws.a)?;
                pencil_unpack_y(&self.ws.a, fu, n2, p2, h);
                complex_axis(fu, [n2, n, h], 1, cplan.as_ref(), Direction::Forward, &mut self.ws.axis);
            }
        }
        Ok(())
    }

    /// `u = F^{-1}(fu)`, the exact reversal of [`DistFft::forward`]. `fu` is
    /// left untouched. Collective.
    pub fn inverse(&mut self, fu: &[Complex<T>], u: &mut [T]) -> Result<(), FftError> {
        self.check(u.len(), fu.len())?;
        let n = self.n;
        let nf = n / 2 + 1;
        let cplan = self.cplan.clone();
        let mut a = std::mem::take(&mut self.ws.a);
        let res = (|| -> Result<(), FftError> {
            match self.decomp.kind {
                DecompositionKind::Serial => {
                    a.copy_from_slice(fu);
                    complex_axis(&mut a, [n, n, nf], 0, cplan.as_ref(), Direction::Inverse, &mut self.ws.axis);
                    complex_axis(&mut a, [n, n, nf], 1, cplan.as_ref(), Direction::Inverse, &mut self.ws.axis);
                    self.real_rows_inverse(&a, u);
                }
                DecompositionKind::Slab => {
                    let np = self.physical.local[0];
                    let m = self.decomp.ranks;
                    a.copy_from_slice(fu);
                    complex_axis(&mut a, [n, np, nf], 0, cplan.as_ref(), Direction::Inverse, &mut self.ws.axis);
                    self.comms.world.all_to_all(&a, &mut self.ws.b)?;
                    slab_unpack(&self.ws.b, &mut a, np, m, nf);
                    complex_axis(&mut a, [np, n, nf], 1, cplan.as_ref(), Direction::Inverse, &mut self.ws.axis);
                    self.real_rows_inverse(&a, u);
                }
                DecompositionKind::Pencil => {
                    let (n1, n2) = (self.physical.local[0], self.physical.local[1]);
                    let (p1, p2) = (self.decomp.p1, self.decomp.p2());
                    let h = n1 / 2;
                    let b = &mut self.ws.b;
                    b.copy_from_slice(fu);
                    complex_axis(b, [n2, n, h], 1, cplan.as_ref(), Direction::Inverse, &mut self.ws.axis);
                    pencil_pack_y(b, &mut a, n2, p2, h);
                    let xy = self.comms.xy.as_deref().expect("pencil xy group");
                    xy.all_to_all(&a, b)?;
                    complex_axis(b, [n, n2, h], 0, cplan.as_ref(), Direction::Inverse, &mut self.ws.axis);
                    let xz = self.comms.xz.as_deref().expect("pencil xz group");
                    xz.all_to_all(b, &mut a)?;
                    let mut z = std::mem::take(&mut self.ws.zpencil);
                    pencil_unpack_z(&a, &mut z, n1, n2, p1, nf);
                    self.real_rows_inverse(&z, u);
                    self.ws.zpencil = z;
                }
            }
            Ok(())
        })();
        self.ws.a = a;
        res
    }
}

// Index maps for the exchanges. Arrays are row-major; `nf` is the stored
// z-extent of the half spectrum.

/// `(Np, M*Np, nf) -> (M, Np, Np, nf)`: send block `j` holds y-chunk `j`.
pub(crate) fn slab_pack<T: Copy>(src: &[T], dst: &mut [T], np: usize, m: usize, nf: usize) {
    let run = np * nf;
    for x in 0..np {
        for j in 0..m {
            let s = (x * m + j) * run;
            let d = (j * np + x) * run;
            dst[d..d + run].copy_from_slice(&src[s..s + run]);
        }
    }
}

/// Inverse of [`slab_pack`].
pub(crate) fn slab_unpack<T: Copy>(src: &[T], dst: &mut [T], np: usize, m: usize, nf: usize) {
    let run = np * nf;
    for x in 0..np {
        for j in 0..m {
            let s = (j * np + x) * run;
            let d = (x * m + j) * run;
            dst[d..d + run].copy_from_slice(&src[s..s + run]);
        }
    }
}

/// `(N1, N2, nf) -> (P1, N1, N2, N1/2)`, dropping the z-Nyquist entry:
/// send block `j` holds kz-chunk `j`.
pub(crate) fn pencil_pack_z<T: Copy>(src: &[T], dst: &mut [T], n1: usize, n2: usize, p1: usize, nf: usize) {
    let h = n1 / 2;
    for j in 0..p1 {
        for x in 0..n1 {
            for y in 0..n2 {
                let s = (x * n2 + y) * nf + j * h;
                let d = ((j * n1 + x) * n2 + y) * h;
                dst[d..d + h].copy_from_slice(&src[s..s + h]);
            }
        }
    }
}

/// Inverse of [`pencil_pack_z`]; the Nyquist entry is set to zero.
pub(crate) fn pencil_unpack_z<T: Copy + Default>(src: &[T], dst: &mut [T], n1: usize, n2: usize, p1: usize, nf: usize) {
    let h = n1 / 2;
    for j in 0..p1 {
        for x in 0..n1 {
            for y in 0..n2 {
                let d = (x * n2 + y) * nf + j * h;
                let s = ((j * n1 + x) * n2 + y) * h;
                dst[d..d + h].copy_from_slice(&src[s..s + h]);
            }
        }
    }
    for row in dst.chunks_exact_mut(nf) {
        row[nf - 1] = T::default();
    }
}

/// `(P2, N2, N2, h) -> (N2, P2*N2, h)`: received block `i` carries y-chunk `i`.
pub(crate) fn pencil_unpack_y<T: Copy>(src: &[T], dst: &mut [T], n2: usize, p2: usize, h: usize) {
    let run = n2 * h;
    for i in 0..p2 {
        for kx in 0..n2 {
            let s = (i * n2 + kx) * run;
            let d = (kx * p2 + i) * run;
            dst[d..d + run].copy_from_slice(&src[s..s + run]);
        }
    }
}

/// Inverse of [`pencil_unpack_y`].
pub(crate) fn pencil_pack_y<T: Copy>(src: &[T], dst: &mut [T], n2: usize, p2: usize, h: usize) {
    let run = n2 * h;
    for i in 0..p2 {
        for kx in 0..n2 {
            let d = (i * n2 + kx) * run;
            let s = (kx * p2 + i) * run;
            dst[d..d + run].copy_from_slice(&src[s..s + run]);
        }
    }
}
