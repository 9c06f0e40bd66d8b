use std::f64::consts::PI;

use faer::Mat;
use hallflow::hofstadter::{
    double_commutator_chern, gap_certificate, gap_ratio, ground_state, kspace_chern, one_body_chern, one_body_hamiltonian,
    ChernMethod, HofstadterModel, OneBodyModel,
};
use hallflow::interactions::Interaction;
use hallflow::linalg::{self, cis};
use hallflow::{c64, Error, Flux, FockOperator, Site, State, TorusLattice};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const MU: f64 = -1.366_025_403_784_438_6;

fn third() -> Flux {
    Flux::new(1, 3)
}

/// Kernel and double-commutator trace written out from the definitions.
fn reference_double_commutator(l: usize, b: f64, mu: f64) -> f64 {
    let n = l * l;
    let idx = |x1: usize, x2: usize| (x1 % l) * l + (x2 % l);
    let mut h = Mat::<c64>::zeros(n, n);
    for x1 in 0..l {
        for x2 in 0..l {
            let y = idx(x1, x2);
            let right = idx(x1 + 1, x2);
            let up = idx(x1, x2 + 1);
            let hop = cis(b * x2 as f64);
            h.write(right, y, h.read(right, y) + hop);
            h.write(y, right, h.read(y, right) + hop.conj());
            h.write(up, y, h.read(up, y) + c64::new(1.0, 0.0));
            h.write(y, up, h.read(y, up) + c64::new(1.0, 0.0));
        }
    }
    let eig = h.selfadjoint_eigendecomposition(faer::Side::Lower);
    let vals = eig.s().column_vector();
    let u = eig.u();
    let mut p = Mat::<c64>::zeros(n, n);
    for k in 0..n {
        if vals.read(k).re < mu {
            for a in 0..n {
                for c in 0..n {
                    p.write(a, c, p.read(a, c) + u.read(a, k) * u.read(c, k).conj());
                }
            }
        }
    }
    let rel = |d: i64| -> f64 {
        let m = d.rem_euclid(l as i64);
        (if 2 * m > l as i64 { m - l as i64 } else { m }) as f64
    };
    let coord = |a: usize, j: usize| if j == 1 { (a / l) as i64 } else { (a % l) as i64 };
    let comm = |j: usize| Mat::from_fn(n, n, |a, c| p.read(a, c) * rel(coord(a, j) - coord(c, j)));
    let c1 = comm(1);
    let c2 = comm(2);
    let bracket = &c1 * &c2 - &c2 * &c1;
    let pb = &p * &bracket;
    let mut tr = c64::new(0.0, 0.0);
    for a in 0..n {
        tr += pb.read(a, a);
    }
    (tr * c64::new(0.0, 1.0)).re / n as f64
}

#[test]
fn zero_flux_spectrum_is_cosine_band() {
    let lat = TorusLattice::new(4, 0.0, true).unwrap();
    let m = OneBodyModel::new(&lat, 0.3).unwrap();
    let mut expect: Vec<f64> = Vec::new();
    for a in 0..4 {
        for b in 0..4 {
            expect.push(2.0 * (PI * a as f64 / 2.0).cos() + 2.0 * (PI * b as f64 / 2.0).cos());
        }
    }
    expect.sort_by(f64::total_cmp);
    for (x, y) in m.values.iter().zip(&expect) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn flux_must_fit_the_torus() {
    assert!(matches!(OneBodyModel::with_flux(4, third(), 0.0), Err(Error::FluxQuantization { .. })));
    assert!(matches!(TorusLattice::new(3, 1.0, true), Err(Error::FluxQuantization { .. })));
    assert!(TorusLattice::new(3, 1.0, false).is_ok());
}

#[test]
fn third_flux_bands_on_six_by_six() {
    let m = OneBodyModel::with_flux(6, third(), MU).unwrap();
    assert!(m.gap() > 0.5);
    let p = m.fermi_projection().unwrap();
    let rank: f64 = (0..36).map(|i| p.read(i, i).re).sum();
    assert!((rank - 12.0).abs() < 1e-10);
    assert_eq!(m.filling(), 12);
    let pp = &p * &p;
    assert!(linalg::max_abs((&pp - &p).as_ref()) < 1e-12);
}

#[test]
fn projection_limits() {
    let lat = TorusLattice::with_flux(6, third()).unwrap();
    let below = OneBodyModel::new(&lat, -4.5).unwrap().fermi_projection().unwrap();
    assert!(linalg::max_abs(below.as_ref()) < 1e-15);
    let above = OneBodyModel::new(&lat, 4.5).unwrap().fermi_projection().unwrap();
    let id = Mat::<c64>::identity(36, 36);
    assert!(linalg::max_abs((&above - &id).as_ref()) < 1e-12);
    assert_eq!(double_commutator_chern(&lat, &below), 0.0);
    let m = OneBodyModel::new(&lat, 0.0).unwrap();
    assert!(matches!(m.fermi_projection(), Err(Error::MuInSpectrum { .. })));
}

#[test]
fn double_commutator_matches_reference() {
    for l in [3usize, 6, 9] {
        let m = OneBodyModel::with_flux(l, third(), MU).unwrap();
        let lib = one_body_chern(&m, ChernMethod::DoubleCommutator).unwrap();
        let reference = reference_double_commutator(l, 2.0 * PI / 3.0, MU);
        assert!((lib - reference).abs() < 1e-12, "L = {l}: {lib} vs {reference}");
    }
}

#[test]
fn frozen_chern_values() {
    let cases = [
        (3usize, -0.096_225_044_864_938, -0.962_250_448_649_378),
        (6, -0.152_390_365_493_034, -0.293_393_828_513_641),
        (9, -0.155_642_261_515_865, -0.191_863_481_335_942),
    ];
    for (l, dc, od) in cases {
        let m = OneBodyModel::with_flux(l, third(), MU).unwrap();
        assert!((one_body_chern(&m, ChernMethod::DoubleCommutator).unwrap() - dc).abs() < 1e-10);
        assert!((one_body_chern(&m, ChernMethod::OffDiagonal).unwrap() - od).abs() < 1e-10);
    }
    assert_eq!(kspace_chern(third(), 1).unwrap().chern, -1);
    assert_eq!(kspace_chern(third(), 2).unwrap().chern, 1);
    assert_eq!(kspace_chern(Flux::new(1, 4), 1).unwrap().chern, -1);
    let m = OneBodyModel::with_flux(9, third(), MU).unwrap();
    assert!((one_body_chern(&m, ChernMethod::Kspace).unwrap() + 1.0 / (2.0 * PI)).abs() < 1e-15);
    assert!(matches!(kspace_chern(third(), 3), Err(Error::KspacePrecondition(_))));
}

#[test]
fn atomic_limit_has_no_hall_response() {
    // a diagonal projection commutes with positions
    let lat = TorusLattice::with_flux(6, third()).unwrap();
    let p = Mat::from_fn(36, 36, |a, c| if a == c && a % 2 == 0 { c64::new(1.0, 0.0) } else { c64::new(0.0, 0.0) });
    assert!(double_commutator_chern(&lat, &p).abs() < 1e-15);
}

#[test]
fn free_many_body_spectrum_is_subset_sums() {
    let lat = TorusLattice::with_flux(3, third()).unwrap();
    let one = OneBodyModel::new(&lat, MU).unwrap();
    let model = HofstadterModel::new(&lat, MU, 0.0, None).unwrap();
    let (state, cache) = ground_state(model.total()).unwrap();
    let mut sums: Vec<f64> = (0usize..512)
        .map(|s| (0..9).filter(|i| s >> i & 1 == 1).map(|i| one.values[i] - MU).sum())
        .collect();
    sums.sort_by(f64::total_cmp);
    for (x, y) in cache.values.iter().zip(&sums) {
        assert!((x - y).abs() < 1e-10);
    }
    let e0: f64 = one.values.iter().filter(|&&e| e < MU).map(|e| e - MU).sum();
    assert!((cache.ground_energy - e0).abs() < 1e-10);
    assert!((cache.gap - one.gap()).abs() < 1e-10);
    // omega(a^*_x a_y) = P(y, x)
    let p = one.fermi_projection().unwrap();
    let g = state.two_point(9).unwrap();
    let pt = p.transpose().to_owned();
    assert!(linalg::max_abs((&g - &pt).as_ref()) < 1e-10);
    let qf = one.quasi_free_state().unwrap();
    assert!(linalg::max_abs((&qf.two_point(9).unwrap() - &pt).as_ref()) < 1e-15);
}

#[test]
fn weak_interaction_keeps_gap() {
    let lat = TorusLattice::with_flux(3, third()).unwrap();
    let free = HofstadterModel::new(&lat, MU, 0.0, None).unwrap();
    let model = HofstadterModel::new(&lat, MU, 0.05, None).unwrap();
    let (_, c0) = ground_state(free.total()).unwrap();
    let (_, c) = ground_state(model.total()).unwrap();
    assert!(!c.degenerate());
    assert!(c.gap > 0.5);
    let v_norm = linalg::op_norm(model.interaction.total().matrix().as_ref());
    assert!((c.ground_energy - c0.ground_energy).abs() <= 0.05 * v_norm);
    assert!(c.reconstruction_error(model.total().matrix()) < 1e-12);
    assert!(matches!(
        HofstadterModel::new(&TorusLattice::with_flux(6, third()).unwrap(), MU, 0.0, None),
        Err(Error::Oversize { .. })
    ));
}

#[test]
fn number_operator_gap_ratio() {
    let lat = TorusLattice::new(2, 0.0, true).unwrap();
    let n = Interaction::number(&lat);
    let (state, cache) = ground_state(n.total()).unwrap();
    assert_eq!(cache.ground_energy, 0.0);
    let vac = State::vacuum(4);
    let a = FockOperator::creation(&lat, Site::new(1, 0)).unwrap();
    let r = gap_ratio(&state, n.total(), &a).unwrap().unwrap();
    assert!((r - 1.0).abs() < 1e-14);
    assert!((gap_ratio(&vac, n.total(), &a).unwrap().unwrap() - 1.0).abs() < 1e-14);
    let density = FockOperator::number(&lat, Site::ORIGIN).unwrap();
    assert!(gap_ratio(&vac, n.total(), &density).unwrap().is_none());
}

#[test]
fn gap_certificate_on_interacting_torus() {
    let lat = TorusLattice::with_flux(3, third()).unwrap();
    let model = HofstadterModel::new(&lat, MU, 0.05, None).unwrap();
    let (state, _) = ground_state(model.total()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cert = gap_certificate(&state, &model.hamiltonian, 0.5, 60, &mut rng).unwrap();
    assert!(cert.passed, "{cert:?}");
    assert!(cert.min_ratio >= 0.5);
    assert_eq!(cert.evaluated + cert.skipped, 60);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn spectrum_is_even_and_periodic_in_flux(p in 0i64..6) {
        let l = 6;
        let b = 2.0 * PI * p as f64 / l as f64;
        let spec = |b: f64| OneBodyModel::new(&TorusLattice::new(l, b, true).unwrap(), 0.0).unwrap().values;
        let base = spec(b);
        for other in [spec(-b), spec(b + 2.0 * PI)] {
            for (x, y) in base.iter().zip(&other) {
                prop_assert!((x - y).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn one_body_kernel_is_hermitian_with_unit_hops(p in 0i64..3) {
        let lat = TorusLattice::new(6, 2.0 * PI * p as f64 / 6.0, true).unwrap();
        let h = one_body_hamiltonian(&lat).unwrap();
        prop_assert!(linalg::hermitian_defect(h.as_ref()) < 1e-15);
        for x in 0..36 {
            let row: f64 = (0..36).map(|y| h.read(x, y).abs()).sum();
            prop_assert!((row - 4.0).abs() < 1e-12);
        }
    }
}
