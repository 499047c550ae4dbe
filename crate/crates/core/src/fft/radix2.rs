//! Built-in iterative radix-2 transform, so the solver does not depend on an
//! external FFT library.

use std::f64::consts::PI;

use num_complex::Complex;

use super::{FftError, LinePlan};
use crate::real::Real;

pub struct Radix2Plan<T> {
    len: usize,
    /// `exp(-2 pi i k / len)` for `k < len / 2`.
    twiddles: Vec<Complex<T>>,
    bitrev: Vec<u32>,
}

impl<T: Real> Radix2Plan<T> {
    pub fn new(len: usize) -> Result<Self, FftError> {
        if len == 0 || !len.is_power_of_two() {
            return Err(FftError::UnsupportedLength(len));
        }
        let twiddles = (0..len / 2)
            .map(|k| {
                let a = -2.0 * PI * k as f64 / len as f64;
                Complex::new(T::lit(a.cos()), T::lit(a.sin()))
            })
            .collect();
        let bits = len.trailing_zeros();
        let bitrev = (0..len as u32)
            .map(|i| if bits == 0 { 0 } else { i.reverse_bits() >> (32 - bits) })
            .collect();
        Ok(Radix2Plan { len, twiddles, bitrev })
    }

    fn run(&self, a: &mut [Complex<T>], inverse: bool) {
        let n = self.len;
        debug_assert_eq!(a.len(), n);
        for i in 0..n {
            let j = self.bitrev[i] as usize;
            if i < j {
                a.swap(i, j);
            }
        }
        let mut size = 2;
        while size <= n {
            let half = size / 2;
            let step = n / size;
            for start in (0..n).step_by(size) {
                for j in 0..half {
                    let mut w = self.twiddles[j * step];
                    if inverse {
                        w = w.conj();
                    }
                    let u = a[start + j];
                    let v = a[start + j + half] * w;
                    a[start + j] = u + v;
                    a[start + j + half] = u - v;
                }
            }
            size *= 2;
        }
    }
}

impl<T: Real> LinePlan<T> for Radix2Plan<T> {
    fn len(&self) -> usize {
        self.len
    }

    fn scratch_len(&self) -> usize {
        0
    }

    fn forward(&self, line: &mut [Complex<T>], _scratch: &mut [Complex<T>]) {
        self.run(line, false);
    }

    fn inverse(&self, line: &mut [Complex<T>], _scratch: &mut [Complex<T>]) {
        self.run(line, true);
    }
}
