//! Decomposed physical meshes, wavenumber tables and the dealiasing mask.
//!
//! Index convention: physical arrays are `(x, y, z)` row-major with `z`
//! fastest, spectral arrays are `(kx, ky, kz)` with the half spectrum along
//! `kz`. A slab owns contiguous `x` planes in physical space and contiguous
//! `ky` planes in spectral space. A pencil splits physical `x` over the
//! xz-group and `y` over the xy-group, and spectral `kx` over the xy-group
//! and `kz` over the xz-group.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::real::Real;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MeshError {
    #[error("mesh size must be a positive even integer, got {0}")]
    InvalidSize(usize),
    #[error("invalid decomposition: {0}")]
    InvalidDecomposition(String),
    #[error("rank {rank} out of range for {ranks} ranks")]
    RankOutOfRange { rank: usize, ranks: usize },
}

/// `(0, 1, ..., N/2-1, -N/2, ..., -1)`, the ordering of a length-`N` DFT.
pub fn dft_frequencies(n: usize) -> Result<Vec<i32>, MeshError> {
    check_size(n)?;
    let half = (n / 2) as i32;
    let n = n as i32;
    Ok((0..n).map(|i| if i < half { i } else { i - n }).collect())
}

/// `(0, 1, ..., N/2)`, the frequencies kept by a real-to-complex transform.
pub fn half_frequencies(n: usize) -> Result<Vec<i32>, MeshError> {
    let mut k = dft_frequencies(n)?;
    k.truncate(n / 2 + 1);
    if let Some(last) = k.last_mut() {
        *last = -*last;
    }
    Ok(k)
}

fn check_size(n: usize) -> Result<(), MeshError> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(MeshError::InvalidSize(n));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecompositionKind {
    Serial,
    Slab,
    Pencil,
}

impl DecompositionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DecompositionKind::Serial => "serial",
            DecompositionKind::Slab => "slab",
            DecompositionKind::Pencil => "pencil",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            DecompositionKind::Serial => 0,
            DecompositionKind::Slab => 1,
            DecompositionKind::Pencil => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(DecompositionKind::Serial),
            1 => Some(DecompositionKind::Slab),
            2 => Some(DecompositionKind::Pencil),
            _ => None,
        }
    }
}

/// How the global `N^3` problem is distributed over `ranks` processes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decomposition {
    pub kind: DecompositionKind,
    pub ranks: usize,
    /// Processes along the first pencil direction; 1 otherwise.
    pub p1: usize,
}

impl Decomposition {
    pub fn serial() -> Self {
        Decomposition { kind: DecompositionKind::Serial, ranks: 1, p1: 1 }
    }

    pub fn slab(ranks: usize) -> Self {
        Decomposition { kind: DecompositionKind::Slab, ranks, p1: 1 }
    }

    pub fn pencil(ranks: usize, p1: usize) -> Self {
        Decomposition { kind: DecompositionKind::Pencil, ranks, p1 }
    }

    /// Processes along the second pencil direction.
    pub fn p2(&self) -> usize {
        match self.kind {
            DecompositionKind::Pencil if self.p1 > 0 => self.ranks / self.p1,
            _ => 1,
        }
    }

    pub fn validate(&self, n: usize) -> Result<(), MeshError> {
        check_size(n)?;
        let bad = |msg: String| Err(MeshError::InvalidDecomposition(msg));
        if self.ranks == 0 {
            return bad("rank count must be positive".into());
        }
        match self.kind {
            DecompositionKind::Serial => {
                if self.ranks != 1 {
                    return bad(format!("serial runs need exactly 1 rank, got {}", self.ranks));
                }
            }
            DecompositionKind::Slab => {
                if self.ranks > n || !n.is_multiple_of(self.ranks) {
                    return bad(format!("slab needs ranks dividing N with ranks <= N (N={n}, ranks={})", self.ranks));
                }
            }
            DecompositionKind::Pencil => {
                let p1 = self.p1;
                if p1 == 0 || !self.ranks.is_multiple_of(p1) {
                    return bad(format!("p1={p1} does not divide ranks={}", self.ranks));
                }
                let p2 = self.ranks / p1;
                if !n.is_multiple_of(p1) || !n.is_multiple_of(p2) {
                    return bad(format!("p1={p1} and p2={p2} must both divide N={n}"));
                }
                if !(n / p1).is_multiple_of(2) {
                    return bad(format!("N/p1 = {} must be even", n / p1));
                }
            }
        }
        Ok(())
    }

    /// Rank within the xz-group (which pencil chunk along physical x).
    pub fn xz_rank(&self, rank: usize) -> usize {
        rank % self.p1.max(1)
    }

    /// Rank within the xy-group (which pencil chunk along physical y).
    pub fn xy_rank(&self, rank: usize) -> usize {
        rank / self.p1.max(1)
    }

    /// Color that groups ranks sharing one xz-communicator.
    pub fn xz_color(&self, rank: usize) -> usize {
        rank / self.p1.max(1)
    }

    /// Color that groups ranks sharing one xy-communicator.
    pub fn xy_color(&self, rank: usize) -> usize {
        rank % self.p1.max(1)
    }
}

/// Which communicator an axis split follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitGroup {
    World,
    Xz,
    Xy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AxisSplit {
    pub group: SplitGroup,
    pub parts: usize,
    pub index: usize,
}

/// Local block of a global 3D array.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub global: [usize; 3],
    pub local: [usize; 3],
    pub offset: [usize; 3],
    pub split: [Option<AxisSplit>; 3],
}

impl Layout {
    fn from_splits(global: [usize; 3], split: [Option<AxisSplit>; 3]) -> Layout {
        let mut local = global;
        let mut offset = [0; 3];
        for axis in 0..3 {
            if let Some(s) = split[axis] {
                local[axis] = global[axis] / s.parts;
                offset[axis] = s.index * local[axis];
            }
        }
        Layout { global, local, offset, split }
    }

    pub fn physical(n: usize, decomp: &Decomposition, rank: usize) -> Result<Layout, MeshError> {
        check_rank(decomp, n, rank)?;
        let global = [n, n, n];
        let split = match decomp.kind {
            DecompositionKind::Serial => [None, None, None],
            DecompositionKind::Slab => [
                Some(AxisSplit { group: SplitGroup::World, parts: decomp.ranks, index: rank }),
                None,
                None,
            ],
            DecompositionKind::Pencil => [
                Some(AxisSplit { group: SplitGroup::Xz, parts: decomp.p1, index: decomp.xz_rank(rank) }),
                Some(AxisSplit { group: SplitGroup::Xy, parts: decomp.p2(), index: decomp.xy_rank(rank) }),
                None,
            ],
        };
        Ok(Layout::from_splits(global, split))
    }

    pub fn spectral(n: usize, decomp: &Decomposition, rank: usize) -> Result<Layout, MeshError> {
        check_rank(decomp, n, rank)?;
        let layout = match decomp.kind {
            DecompositionKind::Serial => Layout::from_splits([n, n, n / 2 + 1], [None, None, None]),
            DecompositionKind::Slab => Layout::from_splits(
                [n, n, n / 2 + 1],
                [None, Some(AxisSplit { group: SplitGroup::World, parts: decomp.ranks, index: rank }), None],
            ),
            // The z-Nyquist plane is not represented in pencil mode.
            DecompositionKind::Pencil => Layout::from_splits(
                [n, n, n / 2],
                [
                    Some(AxisSplit { group: SplitGroup::Xy, parts: decomp.p2(), index: decomp.xy_rank(rank) }),
                    None,
                    Some(AxisSplit { group: SplitGroup::Xz, parts: decomp.p1, index: decomp.xz_rank(rank) }),
                ],
            ),
        };
        Ok(layout)
    }

    pub fn len(&self) -> usize {
        self.local.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Global index of a local multi-index.
    pub fn global_index(&self, local: [usize; 3]) -> [usize; 3] {
        [local[0] + self.offset[0], local[1] + self.offset[1], local[2] + self.offset[2]]
    }

    /// Flat offset of a local multi-index.
    #[inline]
    pub fn flat(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.local[1] + j) * self.local[2] + k
    }

    /// This rank's block of a global row-major array.
    pub fn extract<U: Copy>(&self, global: &[U]) -> Vec<U> {
        let [g0, g1, g2] = self.global;
        assert_eq!(global.len(), g0 * g1 * g2, "global array has the wrong size");
        let mut out = Vec::with_capacity(self.len());
        for i in 0..self.local[0] {
            for j in 0..self.local[1] {
                let start = ((i + self.offset[0]) * g1 + j + self.offset[1]) * g2 + self.offset[2];
                out.extend_from_slice(&global[start..start + self.local[2]]);
            }
        }
        out
    }

    /// Local flat offset of a global multi-index, if this rank owns it.
    pub fn local_flat(&self, global: [usize; 3]) -> Option<usize> {
        let mut l = [0; 3];
        for axis in 0..3 {
            let g = global[axis].checked_sub(self.offset[axis])?;
            if g >= self.local[axis] {
                return None;
            }
            l[axis] = g;
        }
        Some(self.flat(l[0], l[1], l[2]))
    }
}

fn check_rank(decomp: &Decomposition, n: usize, rank: usize) -> Result<(), MeshError> {
    decomp.validate(n)?;
    if rank >= decomp.ranks {
        return Err(MeshError::RankOutOfRange { rank, ranks: decomp.ranks });
    }
    Ok(())
}

/// Local block of the uniform mesh `x_i = 2 pi i / N`, stored per axis.
#[derive(Debug, Clone)]
pub struct PhysicalMesh<T> {
    pub n: usize,
    pub layout: Layout,
    pub coords: [Vec<T>; 3],
}

pub fn build_physical_mesh<T: Real>(n: usize, decomp: &Decomposition, rank: usize) -> Result<PhysicalMesh<T>, MeshError> {
    let layout = Layout::physical(n, decomp, rank)?;
    let h = 2.0 * PI / n as f64;
    let coords = std::array::from_fn(|axis| {
        (0..layout.local[axis])
            .map(|i| T::lit((layout.offset[axis] + i) as f64 * h))
            .collect()
    });
    Ok(PhysicalMesh { n, layout, coords })
}

/// Dealiasing cutoff choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DealiasRule {
    /// `kappa = N / 3`.
    MainText,
    /// `kappa = 2/3 (N/2 + 1)`, used by the reference Taylor-Green script.
    Appendix,
}

impl DealiasRule {
    pub fn cutoff(self, n: usize) -> f64 {
        match self {
            DealiasRule::MainText => n as f64 / 3.0,
            DealiasRule::Appendix => 2.0 / 3.0 * (n / 2 + 1) as f64,
        }
    }

    pub fn keeps(self, n: usize, k: [i32; 3]) -> bool {
        let kappa = self.cutoff(n);
        k.iter().all(|&ki| (ki.abs() as f64) < kappa)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DealiasRule::MainText => "maintext",
            DealiasRule::Appendix => "appendix",
        }
    }
}

/// Wavenumber tables on the local spectral block.
#[derive(Debug, Clone)]
pub struct WaveTables<T> {
    pub n: usize,
    pub layout: Layout,
    pub rule: DealiasRule,
    /// Integer wavevector components.
    pub k: [Vec<i32>; 3],
    pub k2: Vec<i64>,
    /// `k` converted to the working precision.
    pub kf: [Vec<T>; 3],
    pub k2f: Vec<T>,
    /// `k / |k|^2`, zero at the zero mode.
    pub k_over_k2: [Vec<T>; 3],
    pub dealias: Vec<bool>,
    /// Half-spectrum multiplicity: 1 on the `kz = 0` and `kz = N/2` planes, 2 elsewhere.
    pub weight: Vec<T>,
}

pub fn build_wave_tables<T: Real>(
    n: usize,
    decomp: &Decomposition,
    rank: usize,
    rule: DealiasRule,
) -> Result<WaveTables<T>, MeshError> {
    let layout = Layout::spectral(n, decomp, rank)?;
    let full = dft_frequencies(n)?;
    let zfreq = match decomp.kind {
        DecompositionKind::Pencil => full.clone(),
        _ => half_frequencies(n)?,
    };
    let len = layout.len();
    let mut k: [Vec<i32>; 3] = std::array::from_fn(|_| Vec::with_capacity(len));
    for i in 0..layout.local[0] {
        let kx = full[layout.offset[0] + i];
        for j in 0..layout.local[1] {
            let ky = full[layout.offset[1] + j];
            for l in 0..layout.local[2] {
                k[0].push(kx);
                k[1].push(ky);
                k[2].push(zfreq[layout.offset[2] + l]);
            }
        }
    }
    let k2: Vec<i64> = (0..len)
        .map(|e| k.iter().map(|c| (c[e] as i64) * (c[e] as i64)).sum())
        .collect();
    let kf = std::array::from_fn(|c| k[c].iter().map(|&v| T::lit(v as f64)).collect());
    let k2f = k2.iter().map(|&v| T::lit(v as f64)).collect();
    let k_over_k2 = std::array::from_fn(|c| {
        k[c].iter()
            .zip(&k2)
            .map(|(&kc, &kk)| T::lit(kc as f64) / T::lit(kk.max(1) as f64))
            .collect()
    });
    let dealias = (0..len).map(|e| rule.keeps(n, [k[0][e], k[1][e], k[2][e]])).collect();
    let nyq = (n / 2) as i32;
    let weight = k[2]
        .iter()
        .map(|&kz| if kz == 0 || kz == nyq { T::one() } else { T::lit(2.0) })
        .collect();
    Ok(WaveTables { n, layout, rule, k, k2, kf, k2f, k_over_k2, dealias, weight })
}

impl<T: Real> WaveTables<T> {
    pub fn len(&self) -> usize {
        self.k2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k2.is_empty()
    }

    /// Local flat index of the global zero mode, if owned by this rank.
    pub fn zero_mode(&self) -> Option<usize> {
        self.layout.local_flat([0, 0, 0])
    }

    pub fn wavevector(&self, e: usize) -> [i32; 3] {
        [self.k[0][e], self.k[1][e], self.k[2][e]]
    }
}
