mod common;

use common::{dist_fft, on_ranks, random_global};
use num_complex::Complex;
use spectral_dns::cases::{random_solenoidal, shear_mode, taylor_green};
use spectral_dns::comm::SelfComm;
use spectral_dns::diagnostics::{dissipation, divergence_max, enstrophy, kinetic_energy, spectral_energy};
use spectral_dns::kernels::VecField3;
use spectral_dns::mesh::{build_physical_mesh, build_wave_tables, DealiasRule, Decomposition};

type C = Complex<f64>;

fn transformed(n: usize, u: &VecField3<f64>) -> VecField3<C> {
    let mut fft = dist_fft::<f64>(n, Decomposition::serial(), Box::new(SelfComm));
    let len = fft.spectral_layout().len();
    let mut out: VecField3<C> = std::array::from_fn(|_| vec![C::default(); len]);
    for c in 0..3 {
        fft.forward(&u[c], &mut out[c]).unwrap();
    }
    out
}

fn enstrophy_of(n: usize, u: &VecField3<f64>) -> f64 {
    let d = Decomposition::serial();
    let u_hat = transformed(n, u);
    let mut fft = dist_fft::<f64>(n, d, Box::new(SelfComm));
    let tables = build_wave_tables::<f64>(n, &d, 0, DealiasRule::Appendix).unwrap();
    let mut scratch = vec![C::default(); tables.len()];
    let mut curl: VecField3<f64> = std::array::from_fn(|_| vec![0.0; n * n * n]);
    enstrophy(&mut fft, &tables, &u_hat, &mut scratch, &mut curl).unwrap()
}

#[test]
fn taylor_green_initial_quantities() {
    let n = 16;
    let d = Decomposition::serial();
    let mesh = build_physical_mesh::<f64>(n, &d, 0).unwrap();
    let u = taylor_green(&mesh);
    assert!((kinetic_energy(&u, n, &SelfComm).unwrap() - 0.125).abs() < 1e-12);
    assert!((enstrophy_of(n, &u) - 0.375).abs() < 1e-12);
    let tables = build_wave_tables::<f64>(n, &d, 0, DealiasRule::Appendix).unwrap();
    let u_hat = transformed(n, &u);
    assert!(divergence_max(&u_hat, &tables, &SelfComm).unwrap() <= 1e-12);
    // Dissipation is nu <|omega|^2> = 2 nu * enstrophy.
    assert!((dissipation(&u_hat, &tables, 0.1, &SelfComm).unwrap() - 0.075).abs() < 1e-12);
    // Only |k_i| <= 1 modes are populated.
    let scale = u_hat[0].iter().map(|z| z.norm()).fold(0.0, f64::max);
    for c in 0..3 {
        for (e, z) in u_hat[c].iter().enumerate() {
            if tables.wavevector(e).iter().any(|k| k.abs() > 1) {
                assert!(z.norm() <= 1e-12 * scale);
            }
        }
    }
}

#[test]
fn shear_enstrophy_is_quarter() {
    let n = 8;
    let mesh = build_physical_mesh::<f64>(n, &Decomposition::serial(), 0).unwrap();
    assert!((enstrophy_of(n, &shear_mode(&mesh)) - 0.25).abs() < 1e-13);
}

#[test]
fn zero_field_gives_zero_enstrophy() {
    let n = 8;
    let zero: VecField3<f64> = std::array::from_fn(|_| vec![0.0; n * n * n]);
    assert_eq!(enstrophy_of(n, &zero), 0.0);
}

#[test]
fn parseval_for_twenty_random_fields() {
    let n = 32;
    for seed in 0..20 {
        let u: VecField3<f64> = std::array::from_fn(|c| random_global(n * n * n, seed * 3 + c as u64));
        let u_hat = transformed(n, &u);
        let tables = build_wave_tables::<f64>(n, &Decomposition::serial(), 0, DealiasRule::Appendix).unwrap();
        let ke = kinetic_energy(&u, n, &SelfComm).unwrap();
        let se = spectral_energy(&u_hat, &tables, &SelfComm).unwrap();
        assert!(((ke - se) / ke).abs() <= 1e-10, "seed {seed}: {ke} vs {se}");
    }
}

#[test]
fn random_fixture_properties() {
    let n = 16;
    let d = Decomposition::serial();
    let tables = build_wave_tables::<f64>(n, &d, 0, DealiasRule::Appendix).unwrap();
    let mut fft = dist_fft::<f64>(n, d, Box::new(SelfComm));
    let a = random_solenoidal(&mut fft, &tables, 17, 0.1).unwrap();
    let b = random_solenoidal(&mut fft, &tables, 17, 0.1).unwrap();
    assert_eq!(a, b);
    assert!(divergence_max(&a, &tables, &SelfComm).unwrap() <= 1e-12);
    let se = spectral_energy(&a, &tables, &SelfComm).unwrap();
    let mut u: VecField3<f64> = std::array::from_fn(|_| vec![0.0; n * n * n]);
    for c in 0..3 {
        fft.inverse(&a[c], &mut u[c]).unwrap();
    }
    let ke = kinetic_energy(&u, n, &SelfComm).unwrap();
    assert!(((ke - se) / se).abs() <= 1e-10);
    assert!((se - 0.1).abs() <= 1e-12);
    // No Nyquist content anywhere.
    let nyq = (n / 2) as i32;
    for c in 0..3 {
        for (e, z) in a[c].iter().enumerate() {
            if tables.wavevector(e).iter().any(|k| k.abs() == nyq) {
                assert_eq!(*z, C::default());
            }
        }
    }
}

#[test]
fn random_fixture_independent_of_decomposition() {
    let n = 8;
    let energies: Vec<(f64, f64)> = [Decomposition::serial(), Decomposition::slab(2), Decomposition::pencil(4, 2)]
        .into_iter()
        .map(|d| {
            on_ranks(d, |w| {
                let rank = w.rank();
                let mut fft = dist_fft::<f64>(n, d, w);
                let tables = build_wave_tables::<f64>(n, &d, rank, DealiasRule::Appendix).unwrap();
                let u_hat = random_solenoidal(&mut fft, &tables, 3, 0.1).unwrap();
                let mut u: VecField3<f64> = std::array::from_fn(|_| vec![0.0; fft.physical_layout().len()]);
                for c in 0..3 {
                    fft.inverse(&u_hat[c], &mut u[c]).unwrap();
                }
                let ke = kinetic_energy(&u, n, fft.world()).unwrap();
                (ke, u[0].iter().map(|v| v * v).sum::<f64>())
            })
            .into_iter()
            .fold((0.0, 0.0), |acc, (ke, local)| (ke, acc.1 + local))
        })
        .collect();
    for (ke, sum) in &energies[1..] {
        assert!((ke - energies[0].0).abs() <= 1e-13);
        assert!((sum - energies[0].1).abs() <= 1e-10 * energies[0].1);
    }
}

#[test]
fn diagnostics_invariant_under_rank_count() {
    let n = 16;
    let values: Vec<[f64; 3]> = [Decomposition::serial(), Decomposition::slab(4), Decomposition::pencil(4, 2)]
        .into_iter()
        .map(|d| {
            on_ranks(d, |w| {
                let rank = w.rank();
                let mut fft = dist_fft::<f64>(n, d, w);
                let tables = build_wave_tables::<f64>(n, &d, rank, DealiasRule::Appendix).unwrap();
                let u_hat = random_solenoidal(&mut fft, &tables, 8, 0.1).unwrap();
                [
                    spectral_energy(&u_hat, &tables, fft.world()).unwrap(),
                    dissipation(&u_hat, &tables, 0.01, fft.world()).unwrap(),
                    divergence_max(&u_hat, &tables, fft.world()).unwrap(),
                ]
            })[0]
        })
        .collect();
    for v in &values[1..] {
        for q in 0..2 {
            assert!((v[q] - values[0][q]).abs() <= 1e-10 * values[0][q], "{v:?} vs {:?}", values[0]);
        }
        assert!(v[2] <= 1e-12);
    }
}
