//! Seeded identity checks: CAR relations, conditional expectations, norm
//! inequalities, the translated-commutator bound, filter identities and the
//! OD / inverse-Liouvillian identities on a 2 x 2 torus.
//!
//! The report depends only on the seed and the tolerances.

use std::f64::consts::PI;

use anyhow::Result;
use hallflow::filter::{i_map, time_quadrature_filter, FlowContext, QuadratureMode};
use hallflow::hofstadter::{
    ground_state, kspace_chern, random_local_probe, HofstadterModel, OneBodyModel, SpectralCache,
};
use hallflow::interactions::MagneticTranslation;
use hallflow::response::hall_conductivity;
use hallflow::{c64, FilterKernel, Flux, FlowSpec, FockOperator, InsideProfile, Site, TorusLattice};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::Tolerances;

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub instances: usize,
    pub max_residual: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SelftestReport {
    pub seed: u64,
    pub cases: usize,
    pub passed: bool,
    pub checks: Vec<Check>,
}

fn check(name: &str, instances: usize, max_residual: f64, tolerance: f64) -> Check {
    Check { name: name.into(), instances, max_residual, tolerance, passed: max_residual <= tolerance }
}

fn dist(a: &FockOperator, b: &FockOperator) -> f64 {
    a.sub(b).max_abs()
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn car_relations(tol: f64) -> Result<Check> {
    let lat = TorusLattice::new(2, PI, true)?;
    let mut worst = 0.0f64;
    let mut n = 0;
    for x in 0..4 {
        for y in 0..4 {
            let ax = FockOperator::annihilation(&lat, lat.site(x))?;
            let ay = FockOperator::annihilation(&lat, lat.site(y))?;
            let cy = FockOperator::creation(&lat, lat.site(y))?;
            let delta = if x == y { FockOperator::identity() } else { FockOperator::zero() };
            worst = worst.max(dist(&ax.anticommutator(&cy), &delta));
            worst = worst.max(ax.anticommutator(&ay).max_abs());
            n += 1;
        }
    }
    Ok(check("car_relations", n, worst, tol))
}

/// tau(A B) = tau(E_M(A) B) for B in A_M, the module property and the tower property.
pub fn conditional_expectation(seed: u64, cases: usize, tol: f64) -> Result<Check> {
    let mut rng = rng_for(seed, 1);
    let all = [0usize, 1, 2, 3];
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let a = FockOperator::random_gauge_invariant(&all, &mut rng, false);
        let k = rng.gen_range(0..=4);
        let mut region: Vec<usize> = all.choose_multiple(&mut rng, k).copied().collect();
        region.sort_unstable();
        let e = a.conditional_expectation(&region)?;
        let b = FockOperator::random_even(&region, &mut rng);
        let c = FockOperator::random_gauge_invariant(&region, &mut rng, false);
        worst = worst.max((a.mul(&b).tracial_expectation() - e.mul(&b).tracial_expectation()).abs());
        let module = c.mul(&a).mul(&c.adjoint()).conditional_expectation(&region)?;
        worst = worst.max(dist(&module, &c.mul(&e).mul(&c.adjoint())));
        let sub: Vec<usize> = region.iter().copied().filter(|_| rng.gen_bool(0.5)).collect();
        let tower = e.conditional_expectation(&sub)?;
        worst = worst.max(dist(&tower, &a.conditional_expectation(&sub)?));
        worst = worst.max((e.norm() - a.norm()).max(0.0));
    }
    Ok(check("conditional_expectation", cases, worst, tol))
}

pub fn trace_cyclicity(seed: u64, cases: usize, tol: f64) -> Check {
    let mut rng = rng_for(seed, 2);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let a = FockOperator::random_even(&[0, 1, 3], &mut rng);
        let b = FockOperator::random_even(&[1, 2], &mut rng);
        worst = worst.max((a.mul(&b).tracial_expectation() - b.mul(&a).tracial_expectation()).abs());
    }
    check("trace_cyclicity", cases, worst, tol)
}

/// Excess of |AB|_nu over 2 |A|_nu |B|_nu and of |[A, B]|_nu over
/// 4 |A|_nu |B|_nu, relative to the bound, together with |AB| <= |A| |B|.
pub fn norm_submultiplicativity(seed: u64, cases: usize, tol: f64) -> Result<Check> {
    let lat = TorusLattice::new(2, 0.0, true)?;
    let mut rng = rng_for(seed, 3);
    let mut worst = 0.0f64;
    for case in 0..cases {
        let nu = (case % 4) as u32;
        let a = FockOperator::random_gauge_invariant(&[0, 1, 3], &mut rng, false);
        let b = FockOperator::random_gauge_invariant(&[0, 2, 3], &mut rng, false);
        let na = a.decay_norm(&lat, nu, Site::ORIGIN)?;
        let nb = b.decay_norm(&lat, nu, Site::ORIGIN)?;
        let prod = a.mul(&b).decay_norm(&lat, nu, Site::ORIGIN)?;
        let comm = a.commutator(&b).decay_norm(&lat, nu, Site::ORIGIN)?;
        worst = worst.max((prod / (2.0 * na * nb) - 1.0).max(0.0));
        worst = worst.max((comm / (4.0 * na * nb) - 1.0).max(0.0));
        worst = worst.max((a.mul(&b).norm() / (a.norm() * b.norm()) - 1.0).max(0.0));
    }
    Ok(check("norm_submultiplicativity", cases, worst, tol))
}

/// |[T_gamma A, B]|_nu <= 4^{nu+m+3} |A|_{nu+m} |B|_{nu+m} / (1 + |gamma|)^m,
/// reported as the excess ratio.
pub fn translated_commutator_bound(seed: u64, cases: usize, tol: f64) -> Result<Check> {
    let lat = TorusLattice::new(4, PI, true)?;
    let t = MagneticTranslation::new(&lat);
    let mut rng = rng_for(seed, 4);
    let a_frame = [lat.index(Site::ORIGIN), lat.index(Site::new(1, 0))];
    let b_frame = [lat.index(Site::ORIGIN), lat.index(Site::new(0, 1))];
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let a = FockOperator::random_gauge_invariant(&a_frame, &mut rng, true);
        let b = FockOperator::random_gauge_invariant(&b_frame, &mut rng, true);
        let gamma = (rng.gen_range(0..4), rng.gen_range(0..4));
        let nu = rng.gen_range(0..3u32);
        let m = rng.gen_range(0..3u32);
        let g_inf = lat.min_image(gamma.0 as i64).unsigned_abs().max(lat.min_image(gamma.1 as i64).unsigned_abs());
        let lhs = t.translate(gamma, &a).commutator(&b).decay_norm(&lat, nu, Site::ORIGIN)?;
        let rhs = 4f64.powi((nu + m + 3) as i32)
            * a.decay_norm(&lat, nu + m, Site::ORIGIN)?
            * b.decay_norm(&lat, nu + m, Site::ORIGIN)?
            / (1.0 + g_inf as f64).powi(m as i32);
        worst = worst.max((lhs / rhs - 1.0).max(0.0));
    }
    Ok(check("translated_commutator_bound", cases, worst, tol))
}

pub fn disjoint_commutation(seed: u64, cases: usize, tol: f64) -> Check {
    let mut rng = rng_for(seed, 5);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let a = FockOperator::random_gauge_invariant(&[0, 2], &mut rng, false);
        let b = FockOperator::random_even(&[1, 3, 4], &mut rng);
        worst = worst.max(a.commutator(&b).norm());
    }
    check("disjoint_commutation", cases, worst, tol)
}

pub fn translation_homomorphism(seed: u64, cases: usize, tol: f64) -> Result<Check> {
    let lat = TorusLattice::with_flux(3, Flux::new(1, 3))?;
    let t = MagneticTranslation::new(&lat);
    let mut rng = rng_for(seed, 6);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let g = (rng.gen_range(0..3), rng.gen_range(0..3));
        let a = FockOperator::random_even(&[0, 3, 4], &mut rng);
        let b = FockOperator::random_even(&[2, 4], &mut rng);
        worst = worst.max(dist(&t.translate(g, &a.mul(&b)), &t.translate(g, &a).mul(&t.translate(g, &b))));
        worst = worst.max(dist(&t.translate(g, &a.adjoint()), &t.translate(g, &a).adjoint()));
        let c = FockOperator::random_gauge_invariant(&[0, 1, 4], &mut rng, false);
        worst = worst.max((t.translate(g, &c).tracial_expectation() - c.tracial_expectation()).abs());
    }
    Ok(check("translation_homomorphism", cases, worst, tol))
}

pub fn liouvillian_derivation(seed: u64, cases: usize, tol: f64) -> Result<Check> {
    let lat = TorusLattice::with_flux(3, Flux::new(1, 3))?;
    let h = HofstadterModel::new(&lat, -1.0, 0.3, None)?.hamiltonian;
    let mut rng = rng_for(seed, 7);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let a = FockOperator::random_gauge_invariant(&[0, 1], &mut rng, false);
        let b = FockOperator::random_gauge_invariant(&[1, 4], &mut rng, false);
        let lhs = h.liouvillian(&a.mul(&b));
        let rhs = h.liouvillian(&a).mul(&b).add(&a.mul(&h.liouvillian(&b)));
        worst = worst.max(dist(&lhs, &rhs));
    }
    Ok(check("liouvillian_derivation", cases, worst, tol))
}

/// Sample points with |k| >= g, both signs.
pub fn weight_samples(g: f64) -> Vec<f64> {
    (0..20).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 } * g * (1.0 + 0.37 * (i / 2) as f64 * (i / 2) as f64)).collect()
}

pub fn filter_weight(tol: f64) -> Vec<Check> {
    let mut out = Vec::new();
    for (name, profile) in [("filter_weight_cubic", InsideProfile::Cubic), ("filter_weight_quintic", InsideProfile::Quintic)] {
        let kernel = FilterKernel::new(0.45, profile);
        let ks = weight_samples(kernel.g);
        let worst = ks.iter().map(|&k| (kernel.weight(k) - c64::new(0.0, 1.0 / k)).abs()).fold(0.0, f64::max);
        out.push(check(name, ks.len(), worst, tol));
    }
    out
}

/// Spectral filter maps against the time quadrature on random 4-mode Hamiltonians.
pub fn filter_quadrature(seed: u64, instances: usize, tol: f64) -> Result<Check> {
    let mut rng = rng_for(seed, 8);
    let modes = [0usize, 1, 2, 3];
    let kernel = FilterKernel::new(0.3, InsideProfile::Cubic);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let h = FockOperator::random_gauge_invariant(&modes, &mut rng, true);
        let cache = SpectralCache::from_matrix(h.matrix());
        let a = FockOperator::random_gauge_invariant(&modes, &mut rng, false);
        let spectral = i_map(&cache, &a, &kernel)?;
        let quad = time_quadrature_filter(&cache, &a, &kernel, QuadratureMode::IMap)?;
        worst = worst.max(dist(&spectral, &quad));
    }
    Ok(check("filter_quadrature", instances, worst, tol))
}

/// A gapped 2 x 2 torus at b = pi with mu in the widest one-body gap.
fn small_model(lambda: f64) -> Result<(HofstadterModel, SpectralCache)> {
    let lat = TorusLattice::new(2, PI, true)?;
    let one = OneBodyModel::new(&lat, 0.0)?;
    let (lo, hi) = one
        .spectral_gaps(1e-6)
        .into_iter()
        .max_by(|a, b| (a.1 - a.0).total_cmp(&(b.1 - b.0)))
        .ok_or_else(|| anyhow::anyhow!("2 x 2 spectrum has no gap"))?;
    let model = HofstadterModel::new(&lat, 0.5 * (lo + hi), lambda, None)?;
    let (_, cache) = ground_state(model.total())?;
    Ok((model, cache))
}

/// Inverse identity for X_1, X_2 and V; OD property for V; antisymmetry of sigma_H.
pub fn flow_identities(seed: u64, cases: usize, tol: f64) -> Result<Vec<Check>> {
    let mut rng = rng_for(seed, 9);
    let mut inverse = 0.0f64;
    let mut od = 0.0f64;
    let mut antisym = 0.0f64;
    for lambda in [0.0, 0.1] {
        let (model, cache) = small_model(lambda)?;
        let state = cache.ground_state();
        let kernel = FilterKernel::new(0.9 * cache.gap, InsideProfile::Cubic);
        let ctx = FlowContext::new(&model.hamiltonian, &cache, &kernel);
        let probes: Vec<FockOperator> = (0..cases)
            .map(|_| {
                let a = random_local_probe(&model.lat, &mut rng, 2);
                let c = model.lat.site(a.modes()[0]);
                a.with_center(c)
            })
            .collect();
        for spec in [FlowSpec::position(1), FlowSpec::position(2), FlowSpec::bounded(1.0, &model.interaction)] {
            inverse = inverse.max(ctx.inversion_residual(&spec, &probes)?);
        }
        od = od.max(ctx.od_property_residual(&state, &FlowSpec::bounded(1.0, &model.interaction), &probes)?);
        let sigma = hall_conductivity(&ctx, &state)?;
        antisym = antisym.max((sigma.sigma + sigma.swapped).abs());
    }
    Ok(vec![
        check("inverse_liouvillian_identity", 2 * cases, inverse, tol),
        check("od_property_bounded", 2 * cases, od, tol),
        check("hall_antisymmetry", 2, antisym, tol),
    ])
}

pub fn kspace_integer() -> Result<Check> {
    let c = kspace_chern(Flux::new(1, 3), 1)?;
    Ok(check("kspace_chern_unit", 1, ((c.chern.abs() - 1) as f64).abs(), 0.0))
}

/// The algebraic part: CAR, conditional expectation, norms and the
/// translated-commutator bound.
pub fn algebraic_checks(seed: u64, cases: usize, tol: &Tolerances) -> Result<Vec<Check>> {
    Ok(vec![
        car_relations(tol.algebra)?,
        conditional_expectation(seed, cases, tol.algebra)?,
        trace_cyclicity(seed, cases, tol.algebra),
        norm_submultiplicativity(seed, cases, tol.algebra)?,
        translated_commutator_bound(seed, cases, 0.0)?,
        disjoint_commutation(seed, cases, tol.algebra),
        translation_homomorphism(seed, cases, tol.algebra)?,
    ])
}

pub fn run(seed: u64, cases: usize, tol: &Tolerances) -> Result<SelftestReport> {
    let mut checks = algebraic_checks(seed, cases, tol)?;
    checks.push(liouvillian_derivation(seed, cases.min(20), tol.leibniz)?);
    checks.extend(filter_weight(tol.filter_weight));
    checks.push(filter_quadrature(seed, 2, tol.quadrature)?);
    checks.extend(flow_identities(seed, cases.min(20), tol.flow_identity)?);
    checks.push(kspace_integer()?);
    let passed = checks.iter().all(|c| c.passed);
    Ok(SelftestReport { seed, cases, passed, checks })
}
