use num_complex::Complex;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spectral_dns::kernels::{KernelPath, Kernels, VecField3};
use spectral_dns::mesh::{build_wave_tables, DealiasRule, Decomposition};
use spectral_dns::real::{complex_ulps, Real};

fn worst_ulps<T: Real>(n: usize, seed: u64) -> u64 {
    let tables = build_wave_tables::<T>(n, &Decomposition::serial(), 0, DealiasRule::MainText).unwrap();
    let (plen, slen) = (n * n * n, tables.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut real = || -> VecField3<T> { std::array::from_fn(|_| (0..plen).map(|_| T::lit(rng.gen_range(-2.0..2.0))).collect()) };
    let (a, b) = (real(), real());
    let mut cplx = || -> VecField3<Complex<T>> {
        std::array::from_fn(|_| (0..slen).map(|_| Complex::new(T::lit(rng.gen_range(-1e3..1e3)), T::lit(rng.gen_range(-1e3..1e3)))).collect())
    };
    let (du, u_hat) = (cplx(), cplx());
    let mut naive = Kernels::<T>::new(KernelPath::Naive, plen, slen);
    let mut fused = Kernels::<T>::new(KernelPath::Fused, plen, slen);
    let mut worst = 0;

    let mut on: VecField3<T> = std::array::from_fn(|_| vec![T::zero(); plen]);
    let mut of = on.clone();
    naive.cross3(&a, &b, &mut on).unwrap();
    fused.cross3(&a, &b, &mut of).unwrap();
    for (x, y) in on.iter().flatten().zip(of.iter().flatten()) {
        worst = worst.max(x.ulps_between(*y));
    }
    let (mut dn, mut df) = (du.clone(), du);
    let (mut pn, mut pf) = (vec![Complex::default(); slen], vec![Complex::default(); slen]);
    naive.rhs_tail(&mut dn, &mut pn, &u_hat, &tables, T::lit(0.003)).unwrap();
    fused.rhs_tail(&mut df, &mut pf, &u_hat, &tables, T::lit(0.003)).unwrap();
    for (x, y) in dn.iter().flatten().zip(df.iter().flatten()).chain(pn.iter().zip(&pf)) {
        worst = worst.max(complex_ulps(*x, *y));
    }
    for c in 0..3 {
        let (mut cn, mut cf) = (vec![Complex::default(); slen], vec![Complex::default(); slen]);
        naive.curl_hat(c, &tables.kf, &u_hat, &mut cn).unwrap();
        fused.curl_hat(c, &tables.kf, &u_hat, &mut cf).unwrap();
        for (x, y) in cn.iter().zip(&cf) {
            worst = worst.max(complex_ulps(*x, *y));
        }
    }
    worst
}

#[test]
fn fused_within_four_ulps_at_32_cubed() {
    assert!(worst_ulps::<f64>(32, 1) <= 4);
    assert!(worst_ulps::<f32>(32, 2) <= 4);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn fused_matches_naive_for_any_seed(seed in any::<u64>()) {
        prop_assert!(worst_ulps::<f64>(8, seed) <= 4);
        prop_assert!(worst_ulps::<f32>(8, seed) <= 4);
    }
}
