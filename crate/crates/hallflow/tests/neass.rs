use std::sync::OnceLock;

use hallflow::filter::FlowContext;
use hallflow::hofstadter::{ground_state, random_local_probe, HofstadterModel, SpectralCache};
use hallflow::interactions::{Interaction, MagneticTranslation};
use hallflow::neass::{dress_state, neass_generators, order_conditions, stationarity_residual, NeassGenerators};
use hallflow::{c64, Error, FilterKernel, Flux, FlowSpec, FockOperator, InsideProfile, State, TorusLattice};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const MU: f64 = -1.366_025_403_784_438_6;

struct Setup {
    model: HofstadterModel,
    state: State,
    cache: SpectralCache,
    kernel: FilterKernel,
    gens: NeassGenerators,
}

fn setup() -> &'static Setup {
    static CELL: OnceLock<Setup> = OnceLock::new();
    CELL.get_or_init(|| {
        let lat = TorusLattice::with_flux(3, Flux::new(1, 3)).unwrap();
        let model = HofstadterModel::new(&lat, MU, 0.05, None).unwrap();
        let (state, cache) = ground_state(model.total()).unwrap();
        let kernel = FilterKernel::new(0.9 * cache.gap, InsideProfile::Cubic);
        let gens = {
            let ctx = FlowContext::new(&model.hamiltonian, &cache, &kernel);
            neass_generators(&ctx, &model.interaction, 2).unwrap()
        };
        Setup { model, state, cache, kernel, gens }
    })
}

fn probes(lat: &TorusLattice, seed: u64, count: usize) -> Vec<FockOperator> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // probes may span the torus, so coordinates are taken about their first site
    (0..count)
        .map(|_| {
            let a = random_local_probe(lat, &mut rng, 3);
            let c = lat.site(a.modes()[0]);
            a.with_center(c)
        })
        .collect()
}

#[test]
fn order_bounds() {
    let s = setup();
    let ctx = FlowContext::new(&s.model.hamiltonian, &s.cache, &s.kernel);
    assert!(matches!(neass_generators(&ctx, &s.model.interaction, 5), Err(Error::OrderOverflow(5))));
    assert!(matches!(neass_generators(&ctx, &s.model.interaction, 0), Err(Error::OrderOverflow(0))));
}

#[test]
fn first_generator_is_minus_inverse_liouvillian() {
    let s = setup();
    let ctx = FlowContext::new(&s.model.hamiltonian, &s.cache, &s.kernel);
    let spec = FlowSpec::mixed(1.0, &s.model.interaction, 1.0, 1);
    let k1 = ctx.inverse_liouvillian(&spec).unwrap().scale_real(-1.0);
    assert!(k1.sub(&s.gens.origin[0]).max_abs() < 1e-14);
    assert_eq!(s.gens.totals.len(), 2);
    assert_eq!(s.gens.order, 2);
}

#[test]
fn generators_are_self_adjoint_gauge_invariant_and_periodic() {
    let s = setup();
    let t = MagneticTranslation::new(&s.model.lat);
    for (k, total) in s.gens.origin.iter().zip(&s.gens.totals) {
        assert!(k.hermitian_defect() < 1e-12);
        assert!(k.gauge_defect() < 1e-12 * k.frobenius().max(1.0));
        assert!(total.hermitian_defect() < 1e-11);
        for g in [(1, 0), (0, 1), (2, 2)] {
            assert!(t.translate(g, total).sub(total).max_abs() < 1e-11);
        }
    }
}

#[test]
fn second_order_condition_holds() {
    let s = setup();
    let ctx = FlowContext::new(&s.model.hamiltonian, &s.cache, &s.kernel);
    let ps = probes(&s.model.lat, 8, 20);
    let conds = order_conditions(&ctx, &s.gens, &s.state, &ps).unwrap();
    assert_eq!(conds.len(), 2);
    assert!(conds[1] <= 1e-8, "{conds:?}");
}

#[test]
fn dressing_basics() {
    let s = setup();
    let lat = &s.model.lat;
    let zero = dress_state(&s.state, &s.gens, 0.0).unwrap();
    let ps = probes(lat, 1, 6);
    for a in &ps {
        assert_eq!(zero.state.expect(a).unwrap(), s.state.expect(a).unwrap());
    }
    let n = Interaction::number(lat);
    let n0 = s.state.expect(n.total()).unwrap();
    for eps in [1e-3, 0.05, 0.1] {
        let d = dress_state(&s.state, &s.gens, eps).unwrap();
        assert!((d.state.expect(&FockOperator::identity()).unwrap() - c64::new(1.0, 0.0)).abs() < 1e-12);
        assert!(d.state.norm_defect() < 1e-12);
        assert!((d.state.expect(n.total()).unwrap() - n0).abs() < 1e-10);
        // S / eps stays bounded and approaches K_1
        let ratio = d.s_total.norm() / eps;
        assert!(ratio <= s.gens.totals[0].norm() + eps * s.gens.totals[1].norm() + 1e-9);
    }
}

#[test]
fn ground_state_is_stationary_without_drive() {
    let s = setup();
    let ps = probes(&s.model.lat, 3, 8);
    let zero = dress_state(&s.state, &s.gens, 0.0).unwrap();
    let r = stationarity_residual(&zero, &s.model.hamiltonian, &s.model.interaction, &ps, 1).unwrap();
    assert!(r < 1e-12);
    // with the drive the residual shrinks with eps
    let r1 = stationarity_residual(&dress_state(&s.state, &s.gens, 0.1).unwrap(), &s.model.hamiltonian, &s.model.interaction, &ps, 1).unwrap();
    let r2 = stationarity_residual(&dress_state(&s.state, &s.gens, 0.01).unwrap(), &s.model.hamiltonian, &s.model.interaction, &ps, 1).unwrap();
    assert!(r2 < r1);
}
