use std::f64::consts::PI;

use hallflow::hofstadter::{hopping_pieces, HofstadterModel, OneBodyModel};
use hallflow::interactions::{parse_operator, periodize, position_liouvillian, Interaction, MagneticTranslation, Term};
use hallflow::linalg::{cis, I};
use hallflow::{c64, Error, Flux, FockOperator, Site, State, TorusLattice};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const MU: f64 = -1.366_025_403_784_438_6;

fn torus3() -> TorusLattice {
    TorusLattice::new(3, 2.0 * PI / 3.0, true).unwrap()
}

fn h0(lat: &TorusLattice, mu: f64) -> Interaction {
    Interaction::periodic_from_pieces(lat, &hopping_pieces(lat, mu).unwrap())
}

fn ground() -> State {
    let lat = torus3();
    let model = HofstadterModel::new(&lat, MU, 0.05, None).unwrap();
    hallflow::hofstadter::ground_state(model.total()).unwrap().0
}

#[test]
fn translations_compose_with_flux_phase() {
    let lat = torus3();
    let t = MagneticTranslation::new(&lat);
    for m in 0..lat.n_sites() {
        let a = FockOperator::annihilation(&lat, lat.site(m)).unwrap();
        let right_up = t.translate((1, 0), &t.translate((0, 1), &a));
        let up_right = t.translate((0, 1), &t.translate((1, 0), &a));
        let diff = up_right.sub(&right_up.scale(cis(-2.0 * PI / 3.0)));
        assert!(diff.max_abs() < 1e-14);
    }
}

#[test]
fn translation_of_densities_and_bonds() {
    let lat = torus3();
    let t = MagneticTranslation::new(&lat);
    let b = lat.b;
    for g in lat.shifts() {
        let n = t.translate(g, &FockOperator::number(&lat, Site::ORIGIN).unwrap());
        let expect = FockOperator::number(&lat, Site::new(g.0, g.1)).unwrap();
        assert!(n.sub(&expect).max_abs() < 1e-14);
    }
    // a^*_{(1,0)} a_{(0,0)} moved by (0, 1): phase e^{i b * 1} from the creation operator
    let hop = FockOperator::creation(&lat, Site::new(1, 0)).unwrap().mul(&FockOperator::annihilation(&lat, Site::ORIGIN).unwrap());
    let moved = t.translate((0, 1), &hop);
    let target = FockOperator::creation(&lat, Site::new(1, 1))
        .unwrap()
        .mul(&FockOperator::annihilation(&lat, Site::new(0, 1)).unwrap())
        .scale(cis(b));
    assert!(moved.sub(&target).max_abs() < 1e-14);
}

#[test]
fn hamiltonian_is_translation_invariant() {
    let lat = torus3();
    let model = HofstadterModel::new(&lat, MU, 0.05, None).unwrap();
    assert!(model.hamiltonian.periodicity_defect() < 1e-13);
    let t = MagneticTranslation::new(&lat);
    let h = model.total();
    for g in [(1, 0), (0, 1), (2, 1)] {
        assert!(t.translate(g, h).sub(h).max_abs() < 1e-12);
    }
}

#[test]
fn interaction_norm_examples() {
    let lat = TorusLattice::new(3, 0.0, true).unwrap();
    let single = Interaction::from_terms(
        &lat,
        vec![Term { center: Site::ORIGIN, op: parse_operator(&lat, "2*n(0,0)*n(1,0)").unwrap() }],
        false,
    );
    assert!((single.norm(2) - 8.0).abs() < 1e-12);
    assert!((single.norm(0) - 2.0).abs() < 1e-12);

    // every site of the 3x3 torus meets four distinct bonds of norm 1 and one on-site term |mu|
    let mu = 0.7;
    let lat = torus3();
    let h = h0(&lat, mu);
    let mut per_site = [0.0f64; 9];
    for x in 0..9 {
        let s = lat.site(x);
        let mut bonds = std::collections::BTreeSet::new();
        for (d1, d2) in [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)] {
            let y = lat.index(lat.wrap(s.x1 as i64 + d1, s.x2 as i64 + d2));
            bonds.insert((x.min(y), x.max(y)));
        }
        per_site[x] = bonds.len() as f64 + mu;
    }
    let expect = per_site.iter().cloned().fold(0.0, f64::max);
    assert!((h.norm(0) - expect).abs() < 1e-12);
    assert!((h.norm(0) - (4.0 + mu)).abs() < 1e-12);
    assert!((h.norm(1) - (8.0 + mu)).abs() < 1e-12);
}

#[test]
fn periodize_round_trip() {
    let lat = torus3();
    let h = h0(&lat, MU);
    let back = periodize(&lat, &h.origin_term()).unwrap();
    assert!(back.total().sub(h.total()).max_abs() < 1e-12);
    assert!(back.periodicity_defect() < 1e-12);
    let probe = FockOperator::number(&lat, Site::new(1, 2)).unwrap();
    let a = back.liouvillian(&probe);
    let b = h.liouvillian(&probe);
    assert!(a.sub(&b).max_abs() < 1e-12);

    // translations of a single mode only compose up to the flux phase
    let not_compatible = parse_operator(&lat, "c(1,2) + cd(1,2)").unwrap();
    assert!(matches!(periodize(&lat, &not_compatible), Err(Error::NotTCompatible(_))));
}

#[test]
fn position_liouvillian_hand_values() {
    let lat = torus3();
    let hop = FockOperator::creation(&lat, Site::new(1, 0))
        .unwrap()
        .mul(&FockOperator::annihilation(&lat, Site::ORIGIN).unwrap())
        .with_center(Site::ORIGIN);
    let l1 = position_liouvillian(&lat, 1, &hop).unwrap();
    assert!(l1.sub(&hop).max_abs() < 1e-15);
    let l2 = position_liouvillian(&lat, 2, &hop).unwrap();
    assert!(l2.max_abs() < 1e-15);
    // the backward hop from the centroid picks up -1
    let back = hop.adjoint().with_center(Site::ORIGIN);
    let l1b = position_liouvillian(&lat, 1, &back).unwrap();
    assert!(l1b.add(&back).max_abs() < 1e-15);
    // densities commute with X_j
    assert!(position_liouvillian(&lat, 1, &FockOperator::number(&lat, Site::new(2, 2)).unwrap()).unwrap().max_abs() < 1e-15);
}

#[test]
fn hamiltonian_liouvillian_matches_full_commutator() {
    let lat = torus3();
    let h = h0(&lat, MU);
    let n0 = FockOperator::number(&lat, Site::ORIGIN).unwrap();
    let local = h.liouvillian(&n0).to_full(9).unwrap();
    let full = h.total().commutator(&n0.to_full(9).unwrap());
    assert!(local.sub(&full).max_abs() < 1e-12);
    // [a^*_y a_0, n_0] = a^*_y a_0, so L_H(n_0) = sum_y h(y, 0) a^*_y a_0 - h.c.
    let kernel = hallflow::hofstadter::one_body_hamiltonian(&lat).unwrap();
    let a0 = FockOperator::annihilation(&lat, Site::ORIGIN).unwrap();
    let mut hand = FockOperator::zero();
    for y in 1..9 {
        let t = kernel.read(y, 0);
        if t.abs() > 0.0 {
            let out = FockOperator::creation(&lat, lat.site(y)).unwrap().mul(&a0).scale(t);
            hand = hand.add(&out).sub(&out.adjoint());
        }
    }
    assert!(h.liouvillian(&n0).sub(&hand).max_abs() < 1e-14);
}

#[test]
fn origin_commutator_is_position_liouvillian_of_origin_term() {
    let lat = torus3();
    let model = HofstadterModel::new(&lat, MU, 0.05, None).unwrap();
    for j in [1, 2] {
        let lhs = model.hamiltonian.position_commutator(j).origin_term();
        let rhs = position_liouvillian(&lat, j, &model.origin_term()).unwrap();
        assert!(lhs.scale(I).sub(&rhs.scale(I)).max_abs() < 1e-14);
    }
}

#[test]
fn commutator_origin_term_antisymmetry() {
    let lat = torus3();
    let model = HofstadterModel::new(&lat, MU, 0.05, None).unwrap();
    let state = ground();
    let phi = &model.hamiltonian;
    let psi = Interaction::periodic_from_pieces(&lat, &[parse_operator(&lat, "i*cd(1,1)*c(0,0) + h.c.").unwrap()]);
    let lhs = state.expect(&phi.commutator(&psi).unwrap().origin_term().scale(I)).unwrap();
    let rhs = state.expect(&psi.liouvillian(&phi.origin_term()).scale(I)).unwrap();
    assert!((lhs + rhs).abs() < 1e-12, "{lhs} vs {rhs}");
}

#[test]
fn per_volume_examples() {
    let lat = torus3();
    let n = Interaction::number(&lat);
    let model = OneBodyModel::new(&lat, MU).unwrap();
    let qf = model.quasi_free_state().unwrap();
    assert!((n.per_volume_expectation(&qf).unwrap() - 1.0 / 3.0).abs() < 1e-12);
    assert!(n.per_volume_expectation(&State::vacuum(9)).unwrap().abs() < 1e-15);

    let h = h0(&lat, MU);
    let energy: f64 = model.values.iter().filter(|&&e| e < MU).map(|e| e - MU).sum::<f64>() / 9.0;
    assert!((h.per_volume_expectation(&qf).unwrap() - energy).abs() < 1e-12);
    assert!((h.volume_average(&qf).unwrap() - energy).abs() < 1e-12);

    let lopsided = State::slater(&faer::Mat::from_fn(9, 1, |i, _| if i == 0 { c64::new(1.0, 0.0) } else { c64::new(0.0, 0.0) }));
    assert!(matches!(n.per_volume_expectation(&lopsided), Err(Error::NonPeriodicState(_))));
}

#[test]
fn parse_operator_examples() {
    let lat = torus3();
    let op = parse_operator(&lat, "0.5*cd(1,0)*c(0,0) + h.c.").unwrap();
    assert!(op.is_self_adjoint(1e-15));
    assert!((op.norm() - 0.5).abs() < 1e-12);
    let wrapped = parse_operator(&lat, "n(-1,3)").unwrap();
    assert_eq!(wrapped.modes(), &[lat.index(Site::new(2, 0))]);
    let minus = parse_operator(&lat, "n(0,0) - n(0,0)").unwrap();
    assert!(minus.max_abs() < 1e-15);
    for bad in ["", "n(0)", "x(0,0)", "n(0,0) +"] {
        assert!(matches!(parse_operator(&lat, bad), Err(Error::Parse(_))), "{bad}");
    }
    assert!(matches!(TorusLattice::with_flux(4, Flux::new(1, 3)), Err(Error::FluxQuantization { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn liouvillian_is_a_derivation(seed in any::<u64>()) {
        let lat = torus3();
        let h = HofstadterModel::new(&lat, MU, 0.3, None).unwrap().hamiltonian;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = FockOperator::random_gauge_invariant(&[0, 1], &mut rng, false);
        let b = FockOperator::random_gauge_invariant(&[1, 4], &mut rng, false);
        let lhs = h.liouvillian(&a.mul(&b));
        let rhs = h.liouvillian(&a).mul(&b).add(&a.mul(&h.liouvillian(&b)));
        prop_assert!(lhs.sub(&rhs).max_abs() < 1e-11);
    }

    #[test]
    fn translation_is_a_homomorphism(seed in any::<u64>(), g1 in 0usize..3, g2 in 0usize..3) {
        let lat = torus3();
        let t = MagneticTranslation::new(&lat);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = FockOperator::random_even(&[0, 3, 4], &mut rng);
        let b = FockOperator::random_even(&[2, 4], &mut rng);
        let lhs = t.translate((g1, g2), &a.mul(&b));
        let rhs = t.translate((g1, g2), &a).mul(&t.translate((g1, g2), &b));
        prop_assert!(lhs.sub(&rhs).max_abs() < 1e-12);
        let adj = t.translate((g1, g2), &a.adjoint()).sub(&t.translate((g1, g2), &a).adjoint());
        prop_assert!(adj.max_abs() < 1e-12);
        prop_assert!(t.compatibility_defect(&FockOperator::random_gauge_invariant(&[0, 1], &mut rng, false)) < 1e-12);
    }
}
