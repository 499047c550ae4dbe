//! Brute-force reference transforms for testing. Cost is `O(N^6)`.

use std::f64::consts::PI;

use num_complex::Complex;

/// Half spectrum `(N, N, N/2+1)` of a global real `N^3` field, by direct
/// triple summation.
pub fn direct_rdft3(n: usize, u: &[f64]) -> Vec<Complex<f64>> {
    assert_eq!(u.len(), n * n * n, "field must hold N^3 values");
    let nf = n / 2 + 1;
    let w: Vec<Complex<f64>> = (0..n).map(|j| Complex::from_polar(1.0, -2.0 * PI * j as f64 / n as f64)).collect();
    let mut out = vec![Complex::default(); n * n * nf];
    for kx in 0..n {
        for ky in 0..n {
            for kz in 0..nf {
                let mut acc = Complex::default();
                for x in 0..n {
                    for y in 0..n {
                        for z in 0..n {
                            let phase = w[(kx * x + ky * y + kz * z) % n];
                            acc += phase * u[(x * n + y) * n + z];
                        }
                    }
                }
                out[(kx * n + ky) * nf + kz] = acc;
            }
        }
    }
    out
}
