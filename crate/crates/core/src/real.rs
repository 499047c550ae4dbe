//! Floating-point precision abstraction shared by every field and kernel.

use std::fmt::{Debug, Display};

use num_complex::Complex;
use serde::{Deserialize, Serialize};

/// Working precision of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    Single,
    Double,
}

impl Precision {
    pub fn bytes(self) -> usize {
        match self {
            Precision::Single => 4,
            Precision::Double => 8,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Precision::Single => "single",
            Precision::Double => "double",
        }
    }
}

/// Real scalar type a solver can be instantiated with (`f32` or `f64`).
pub trait Real:
    rustfft::FftNum
    + num_traits::Float
    + bytemuck::Pod
    + Default
    + Display
    + Debug
    + Send
    + Sync
    + 'static
{
    const PRECISION: Precision;

    fn lit(v: f64) -> Self;

    fn as_f64(self) -> f64;

    /// Distance in units in the last place between two finite values.
    fn ulps_between(self, other: Self) -> u64;

    fn to_le(self, out: &mut Vec<u8>);

    fn from_le(bytes: &[u8]) -> Self;
}

impl Real for f64 {
    const PRECISION: Precision = Precision::Double;

    #[inline(always)]
    fn lit(v: f64) -> Self {
        v
    }

    #[inline(always)]
    fn as_f64(self) -> f64 {
        self
    }

    fn ulps_between(self, other: Self) -> u64 {
        ordered_bits_64(self).abs_diff(ordered_bits_64(other))
    }

    fn to_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn from_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
}

impl Real for f32 {
    const PRECISION: Precision = Precision::Single;

    #[inline(always)]
    fn lit(v: f64) -> Self {
        v as f32
    }

    #[inline(always)]
    fn as_f64(self) -> f64 {
        self as f64
    }

    fn ulps_between(self, other: Self) -> u64 {
        ordered_bits_32(self).abs_diff(ordered_bits_32(other)) as u64
    }

    fn to_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn from_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
}

// Maps the IEEE bit pattern onto a monotone integer line so that adjacent
// floats differ by one and +0/-0 coincide.
fn ordered_bits_64(x: f64) -> i64 {
    let b = x.to_bits() as i64;
    if b < 0 {
        i64::MIN - b
    } else {
        b
    }
}

fn ordered_bits_32(x: f32) -> i32 {
    let b = x.to_bits() as i32;
    if b < 0 {
        i32::MIN - b
    } else {
        b
    }
}

/// Larger of the real- and imaginary-part ulp distances.
pub fn complex_ulps<T: Real>(a: Complex<T>, b: Complex<T>) -> u64 {
    a.re.ulps_between(b.re).max(a.im.ulps_between(b.im))
}
