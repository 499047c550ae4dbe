//! Rank-private binary checkpoints of the spectral velocity.
//!
//! Each rank writes `rank-NNNNN.spk` holding a fixed little-endian header
//! followed by its `U_hat` block (component-major, real then imaginary
//! part). Rank 0 also writes `manifest.json` describing the set.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::Error;
use crate::kernels::VecField3;
use crate::mesh::{Decomposition, DecompositionKind};
use crate::real::{Precision, Real};
use crate::solver::Solver;

pub const MAGIC: [u8; 4] = *b"SPK1";
pub const VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";
const HEADER_LEN: usize = 4 + 4 + 8 + 1 + 1 + 4 + 4 + 4 + 8 + 8 + 3 * 8;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint is truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("corrupt checkpoint header: {0}")]
    Corrupt(String),
    #[error("checkpoint does not match the run: {0}")]
    Mismatch(String),
    #[error("manifest: {0}")]
    Manifest(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CheckpointError + '_ {
    move |source| CheckpointError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub n: usize,
    pub precision: Precision,
    pub decomposition: Decomposition,
    pub rank: usize,
    pub t: f64,
    pub step: u64,
    pub local: [usize; 3],
}

impl CheckpointHeader {
    /// Compares everything that must agree for a resume.
    pub fn check_compatible(&self, n: usize, precision: Precision, decomposition: &Decomposition, rank: usize) -> Result<(), CheckpointError> {
        let mut problems = Vec::new();
        if self.n != n {
            problems.push(format!("N is {} in the checkpoint but {n} in the run", self.n));
        }
        if self.precision != precision {
            problems.push(format!(
                "precision is {} in the checkpoint but {} in the run",
                self.precision.as_str(),
                precision.as_str()
            ));
        }
        if self.decomposition != *decomposition {
            problems.push(format!(
                "decomposition is {:?} in the checkpoint but {:?} in the run",
                self.decomposition, decomposition
            ));
        }
        if self.rank != rank {
            problems.push(format!("file belongs to rank {} but was read by rank {rank}", self.rank));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(CheckpointError::Mismatch(problems.join("; ")))
        }
    }
}

pub fn rank_file(dir: &Path, rank: usize) -> PathBuf {
    dir.join(format!("rank-{rank:05}.spk"))
}

pub fn encode<T: Real>(header: &CheckpointHeader, u_hat: &VecField3<Complex<T>>) -> Vec<u8> {
    let len: usize = header.local.iter().product();
    let mut out = Vec::with_capacity(HEADER_LEN + 3 * len * 2 * T::PRECISION.bytes());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&header.version.to_le_bytes());
    out.extend_from_slice(&(header.n as u64).to_le_bytes());
    out.push(match header.precision {
        Precision::Single => 0,
        Precision::Double => 1,
    });
    out.push(header.decomposition.kind.code());
    out.extend_from_slice(&(header.decomposition.ranks as u32).to_le_bytes());
    out.extend_from_slice(&(header.decomposition.p1 as u32).to_le_bytes());
    out.extend_from_slice(&(header.rank as u32).to_le_bytes());
    out.extend_from_slice(&header.t.to_le_bytes());
    out.extend_from_slice(&header.step.to_le_bytes());
    for l in header.local {
        out.extend_from_slice(&(l as u64).to_le_bytes());
    }
    for comp in u_hat {
        for z in comp {
            z.re.to_le(&mut out);
            z.im.to_le(&mut out);
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, k: usize) -> &'a [u8] {
        let s = &self.bytes[self.pos..self.pos + k];
        self.pos += k;
        s
    }

    fn u8(&mut self) -> u8 {
        self.take(1)[0]
    }

    fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take(4).try_into().unwrap())
    }

    fn u64(&mut self) -> u64 {
        u64::from_le_bytes(self.take(8).try_into().unwrap())
    }
}

pub fn decode_header(bytes: &[u8]) -> Result<CheckpointHeader, CheckpointError> {
    if bytes.len() < 8 {
        return Err(CheckpointError::Truncated { expected: HEADER_LEN, found: bytes.len() });
    }
    if bytes[..4] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let mut r = Reader { bytes, pos: 4 };
    let version = r.u32();
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    if bytes.len() < HEADER_LEN {
        return Err(CheckpointError::Truncated { expected: HEADER_LEN, found: bytes.len() });
    }
    let n = r.u64() as usize;
    let precision = match r.u8() {
        0 => Precision::Single,
        1 => Precision::Double,
        p => return Err(CheckpointError::Corrupt(format!("unknown precision code {p}"))),
    };
    let code = r.u8();
    let kind = DecompositionKind::from_code(code)
        .ok_or_else(|| CheckpointError::Corrupt(format!("unknown decomposition code {code}")))?;
    let ranks = r.u32() as usize;
    let p1 = r.u32() as usize;
    let rank = r.u32() as usize;
    let t = f64::from_bits(r.u64());
    let step = r.u64();
    let local = [r.u64() as usize, r.u64() as usize, r.u64() as usize];
    Ok(CheckpointHeader {
        version,
        n,
        precision,
        decomposition: Decomposition { kind, ranks, p1 },
        rank,
        t,
        step,
        local,
    })
}

pub fn decode<T: Real>(bytes: &[u8]) -> Result<(CheckpointHeader, VecField3<Complex<T>>), CheckpointError> {
    let header = decode_header(bytes)?;
    if header.precision != T::PRECISION {
        return Err(CheckpointError::Mismatch(format!(
            "file holds {} precision data, {} requested",
            header.precision.as_str(),
            T::PRECISION.as_str()
        )));
    }
    let len = header
        .local
        .iter()
        .try_fold(1usize, |acc, &l| acc.checked_mul(l))
        .ok_or_else(|| CheckpointError::Corrupt("local shape overflows".into()))?;
    let b = T::PRECISION.bytes();
    let expected = HEADER_LEN + 3 * len * 2 * b;
    if bytes.len() != expected {
        return Err(CheckpointError::Truncated { expected, found: bytes.len() });
    }
    let mut pos = HEADER_LEN;
    let mut next = || {
        let v = T::from_le(&bytes[pos..pos + b]);
        pos += b;
        v
    };
    let u_hat = std::array::from_fn(|_| {
        (0..len)
            .map(|_| {
                let re = next();
                let im = next();
                Complex::new(re, im)
            })
            .collect()
    });
    Ok((header, u_hat))
}

/// Written by rank 0 next to the rank files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub n: usize,
    pub precision: Precision,
    pub decomposition: Decomposition,
    pub t: f64,
    pub step: u64,
    pub files: Vec<String>,
}

pub fn write_rank_file<T: Real>(dir: &Path, header: &CheckpointHeader, u_hat: &VecField3<Complex<T>>) -> Result<PathBuf, CheckpointError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = rank_file(dir, header.rank);
    let tmp = path.with_extension("spk.tmp");
    let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(&encode(header, u_hat)).map_err(io_err(&tmp))?;
    f.sync_all().map_err(io_err(&tmp))?;
    fs::rename(&tmp, &path).map_err(io_err(&path))?;
    Ok(path)
}

pub fn read_rank_file<T: Real>(path: &Path) -> Result<(CheckpointHeader, VecField3<Complex<T>>), CheckpointError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode(&bytes)
}

pub fn write_manifest(dir: &Path, header: &CheckpointHeader) -> Result<PathBuf, CheckpointError> {
    let files = (0..header.decomposition.ranks)
        .map(|r| rank_file(Path::new(""), r).to_string_lossy().into_owned())
        .collect();
    let manifest = Manifest {
        format: String::from_utf8_lossy(&MAGIC).into_owned(),
        version: VERSION,
        n: header.n,
        precision: header.precision,
        decomposition: header.decomposition,
        t: header.t,
        step: header.step,
        files,
    };
    let path = dir.join(MANIFEST);
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(io_err(&path))?;
    Ok(path)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, CheckpointError> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    Ok(serde_json::from_str(&text)?)
}

impl<T: Real> Solver<T> {
    fn checkpoint_header(&self) -> CheckpointHeader {
        CheckpointHeader {
            version: VERSION,
            n: self.params.n,
            precision: T::PRECISION,
            decomposition: self.params.decomposition,
            rank: self.rank(),
            t: self.state.t,
            step: self.state.step,
            local: self.fft.spectral_layout().local,
        }
    }

    /// Writes this rank's block, then the manifest from rank 0. Collective.
    pub fn save_checkpoint(&self, dir: &Path) -> Result<(), Error> {
        let header = self.checkpoint_header();
        write_rank_file(dir, &header, &self.state.u_hat)?;
        self.fft.world().barrier()?;
        if self.fft.world().is_root() {
            write_manifest(dir, &header)?;
        }
        Ok(())
    }

    /// Restores `U_hat`, `t` and the step counter. Collective.
    pub fn load_checkpoint(&mut self, dir: &Path) -> Result<(), Error> {
        let rank = self.rank();
        let (header, u_hat) = read_rank_file::<T>(&rank_file(dir, rank))?;
        header.check_compatible(self.params.n, T::PRECISION, &self.params.decomposition, rank)?;
        let local = self.fft.spectral_layout().local;
        if header.local != local {
            return Err(CheckpointError::Mismatch(format!("local block {:?} but the run expects {:?}", header.local, local)).into());
        }
        self.set_spectral_velocity(u_hat)?;
        self.state.t = header.t;
        self.state.step = header.step;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> (CheckpointHeader, VecField3<Complex<f64>>) {
        let header = CheckpointHeader {
            version: VERSION,
            n: 4,
            precision: Precision::Double,
            decomposition: Decomposition::slab(2),
            rank: 1,
            t: 0.3,
            step: 30,
            local: [4, 2, 3],
        };
        let u = std::array::from_fn(|c| (0..24).map(|i| Complex::new(i as f64 * 0.1 + c as f64, -(i as f64) / 7.0)).collect());
        (header, u)
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let (h, u) = sample();
        let (h2, u2) = decode::<f64>(&encode(&h, &u)).unwrap();
        assert_eq!(h, h2);
        for (a, b) in u.iter().flatten().zip(u2.iter().flatten()) {
            assert_eq!(a.re.to_bits(), b.re.to_bits());
            assert_eq!(a.im.to_bits(), b.im.to_bits());
        }
    }

    #[test]
    fn rejects_bad_magic_and_version() {
        let (h, u) = sample();
        let mut bytes = encode(&h, &u);
        bytes[0] = b'X';
        assert!(matches!(decode::<f64>(&bytes), Err(CheckpointError::BadMagic)));
        let mut bytes = encode(&h, &u);
        bytes[4] = 9;
        assert!(matches!(decode::<f64>(&bytes), Err(CheckpointError::UnsupportedVersion(9))));
    }

    #[test]
    fn rejects_truncation_and_wrong_precision() {
        let (h, u) = sample();
        let bytes = encode(&h, &u);
        assert!(matches!(decode::<f64>(&bytes[..bytes.len() - 1]), Err(CheckpointError::Truncated { .. })));
        assert!(matches!(decode::<f32>(&bytes), Err(CheckpointError::Mismatch(_))));
    }

    #[test]
    fn compatibility_reports_wrong_n() {
        let (h, _) = sample();
        let err = h.check_compatible(8, Precision::Double, &Decomposition::slab(2), 1).unwrap_err();
        assert!(err.to_string().contains("N is 4"));
        h.check_compatible(4, Precision::Double, &Decomposition::slab(2), 1).unwrap();
    }
}
