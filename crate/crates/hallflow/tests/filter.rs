use std::f64::consts::PI;
use std::sync::OnceLock;

use hallflow::filter::{eigenbasis_filter, i_map, time_quadrature_filter, FlowContext, QuadratureMode};
use hallflow::hofstadter::{ground_state, HofstadterModel, SpectralCache};
use hallflow::interactions::Interaction;
use hallflow::linalg::{self, I};
use hallflow::{c64, Error, FilterKernel, Flux, FlowSpec, FockOperator, InsideProfile, State, TorusLattice};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const MU: f64 = -1.366_025_403_784_438_6;

struct Setup {
    model: HofstadterModel,
    state: State,
    cache: SpectralCache,
    kernel: FilterKernel,
}

fn setup() -> &'static Setup {
    static CELL: OnceLock<Setup> = OnceLock::new();
    CELL.get_or_init(|| {
        let lat = TorusLattice::with_flux(3, Flux::new(1, 3)).unwrap();
        let model = HofstadterModel::new(&lat, MU, 0.05, None).unwrap();
        let (state, cache) = ground_state(model.total()).unwrap();
        let kernel = FilterKernel::new(0.9 * cache.gap, InsideProfile::Cubic);
        Setup { model, state, cache, kernel }
    })
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for k in 1..n {
        acc += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

#[test]
fn weight_values() {
    let g = 0.6;
    let k = FilterKernel::new(g, InsideProfile::Cubic);
    assert!((k.weight(2.0 * g) - c64::new(0.0, 1.0 / (2.0 * g))).abs() < 1e-15);
    assert!((k.weight(g / 2.0) - c64::new(0.0, 0.875 / g)).abs() < 1e-15);
    assert!((k.weight(g) - c64::new(0.0, 1.0 / g)).abs() < 1e-15);
    assert_eq!(k.weight(0.0), c64::new(0.0, 0.0));
    for x in [0.01, 0.3, 0.59, 0.6, 1.7, 40.0] {
        assert_eq!(k.weight(-x), -k.weight(x));
        assert_eq!(k.inverse_weight(-x), k.inverse_weight(x));
    }
    assert!((k.inverse_weight(2.0 * g) + 1.0 / (4.0 * g * g)).abs() < 1e-15);
    assert!((k.inverse_weight(0.0) + 2.0 / (g * g)).abs() < 1e-15);
    let q = FilterKernel::new(g, InsideProfile::Quintic);
    assert!((q.inverse_weight(0.0) + 3.0 / (g * g)).abs() < 1e-15);
    assert!((q.weight(g / 2.0) - c64::new(0.0, (1.5 - 0.375 + 0.03125) / g)).abs() < 1e-15);
    // value and slope continuity at the gap edge
    for p in [InsideProfile::Cubic, InsideProfile::Quintic] {
        let k = FilterKernel::new(g, p);
        let h = 1e-6;
        let left = (k.weight(g - h).im - k.weight(g - 2.0 * h).im) / h;
        let right = (k.weight(g + 2.0 * h).im - k.weight(g + h).im) / h;
        assert!((left - right).abs() < 1e-4);
    }
}

#[test]
fn time_profile_is_inverse_transform() {
    // W(s) = (1/pi) [ int_0^g r(k/g)/g sin(ks) dk + int_{gs}^inf sin(t)/t dt ]
    let g = 0.5;
    for profile in [InsideProfile::Cubic, InsideProfile::Quintic] {
        let k = FilterKernel::new(g, profile);
        for s in [0.1, 1.0, 3.7, 12.0, 40.0] {
            let inside = simpson(|q| profile.value(q / g) / g * (q * s).sin(), 0.0, g, 4000);
            let head = simpson(|t| if t == 0.0 { 1.0 } else { t.sin() / t }, 0.0, g * s, 20_000);
            let reference = (inside + PI / 2.0 - head) / PI;
            assert!((k.time_profile(s) - reference).abs() < 1e-10, "s = {s}");
            assert_eq!(k.time_profile(-s), -k.time_profile(s));
        }
    }
}

#[test]
fn quadrature_weight_converges() {
    let g = 0.55;
    let k = FilterKernel::new(g, InsideProfile::Cubic);
    let fine = k.clone().with_quadrature(k.t_max, 2 * k.nodes);
    let quintic = FilterKernel::new(g, InsideProfile::Quintic);
    for d in [0.1, 0.4, 0.55, 0.9, 2.5, 7.0] {
        assert!((quintic.quadrature_weight(d) - quintic.weight(d).im).abs() < 1e-8);
        let exact = k.weight(d).im;
        assert!((k.quadrature_weight(d) - exact).abs() < 1e-8, "d = {d}");
        assert!((k.quadrature_weight(d) - fine.quadrature_weight(d)).abs() < 1e-10);
        assert!((k.quadrature_inverse_weight(d) - k.inverse_weight(d)).abs() < 1e-8);
    }
    assert!((k.quadrature_inverse_weight(0.0) - k.inverse_weight(0.0)).abs() < 1e-8);
}

#[test]
fn quadrature_filter_matches_spectral_filter() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let modes = [0usize, 1, 2, 3];
    for _ in 0..2 {
        let h = FockOperator::random_gauge_invariant(&modes, &mut rng, true);
        let cache = SpectralCache::from_matrix(h.matrix());
        let kernel = FilterKernel::new(0.3, InsideProfile::Cubic);
        let a = FockOperator::random_gauge_invariant(&modes, &mut rng, false);
        let spectral = i_map(&cache, &a, &kernel).unwrap();
        let quad = time_quadrature_filter(&cache, &a, &kernel, QuadratureMode::IMap).unwrap();
        assert!(spectral.sub(&quad).max_abs() < 1e-8);
        let inv = eigenbasis_filter(&cache, a.matrix(), |d| c64::new(kernel.inverse_weight(d), 0.0));
        let quad_inv = time_quadrature_filter(&cache, &a, &kernel, QuadratureMode::Inverse).unwrap();
        assert!(linalg::max_abs((&inv - quad_inv.matrix()).as_ref()) < 1e-8);
    }
}

#[test]
fn quadrature_reports_divergence() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let modes = [0usize, 1, 2];
    let h = FockOperator::random_gauge_invariant(&modes, &mut rng, true);
    let cache = SpectralCache::from_matrix(h.matrix());
    let kernel = FilterKernel::new(0.3, InsideProfile::Cubic).with_quadrature(1500.0, 2000);
    let a = FockOperator::random_gauge_invariant(&modes, &mut rng, false);
    assert!(matches!(time_quadrature_filter(&cache, &a, &kernel, QuadratureMode::Od), Err(Error::QuadratureDiverged(_))));
}

#[test]
fn number_operator_has_trivial_flow() {
    let s = setup();
    let ctx = FlowContext::new(&s.model.hamiltonian, &s.cache, &s.kernel);
    let n = Interaction::number(&s.model.lat);
    let spec = FlowSpec::bounded(1.0, &n);
    assert!(ctx.od_map(&spec).unwrap().max_abs() < 1e-12);
    assert!(ctx.inverse_liouvillian(&spec).unwrap().max_abs() < 1e-12);
}

#[test]
fn flow_maps_are_self_adjoint_and_invert() {
    let s = setup();
    let ctx = FlowContext::new(&s.model.hamiltonian, &s.cache, &s.kernel);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let probes: Vec<FockOperator> =
        (0..3).map(|_| hallflow::hofstadter::random_local_probe(&s.model.lat, &mut rng, 3)).collect();
    for spec in [FlowSpec::position(1), FlowSpec::position(2), FlowSpec::bounded(1.0, &s.model.interaction)] {
        let od = ctx.od_map(&spec).unwrap();
        assert!(od.hermitian_defect() < 1e-12);
        assert!(ctx.inverse_liouvillian(&spec).unwrap().hermitian_defect() < 1e-12);
        assert!(ctx.inversion_residual(&spec, &probes).unwrap() < 1e-10);
        // OD part has no ground-state diagonal block
        let p = s.cache.ground_projector();
        let block = &(&p * od.matrix()) * &p;
        assert!(linalg::max_abs(block.as_ref()) < 1e-12);
    }
    // bounded generators satisfy the OD property exactly
    let spec = FlowSpec::bounded(1.0, &s.model.interaction);
    assert!(ctx.od_property_residual(&s.state, &spec, &probes).unwrap() < 1e-10);
}

#[test]
fn od_map_matches_its_definition() {
    let s = setup();
    let ctx = FlowContext::new(&s.model.hamiltonian, &s.cache, &s.kernel);
    let spec = FlowSpec::position(2);
    let image = ctx.generator_image(&spec).unwrap();
    let od = ctx.od_map(&spec).unwrap();
    let by_hand = eigenbasis_filter(&s.cache, image.matrix(), |d| s.kernel.weight(d));
    assert!(linalg::max_abs((&by_hand - od.matrix()).as_ref()) < 1e-14);
    // i L_{X_2} h_0 scaled by i
    let h0 = s.model.origin_term().with_center(hallflow::Site::ORIGIN);
    let direct = hallflow::interactions::position_liouvillian(&s.model.lat, 2, &h0).unwrap().scale(I).to_full(9).unwrap();
    assert!(direct.sub(&image).max_abs() < 1e-14);
}

#[test]
fn gap_smaller_than_filter_parameter() {
    let s = setup();
    let wide = FilterKernel::new(1.1 * s.cache.gap, InsideProfile::Cubic);
    let ctx = FlowContext::new(&s.model.hamiltonian, &s.cache, &wide);
    assert!(matches!(ctx.od_map(&FlowSpec::position(1)), Err(Error::GapTooSmall { .. })));
}
