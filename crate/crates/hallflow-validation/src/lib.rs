//! Acceptance criteria for hallflow. Tolerances and runtime budgets are
//! pinned as constants; each criterion returns a [`Verdict`].

use std::f64::consts::PI;
use std::fmt;
use std::time::Instant;

use anyhow::{anyhow, Result};
use hallflow::filter::FlowContext;
use hallflow::hofstadter::{
    gap_certificate, ground_state, kspace_chern, one_body_chern, random_local_probe, ChernMethod, HofstadterModel,
    OneBodyModel, SpectralCache,
};
use hallflow::interactions::Interaction;
use hallflow::linalg;
use hallflow::neass::neass_generators;
use hallflow::quasi_free::{
    current_correlations, dressed_projection, first_order_generator, segment_stats, BlochProjection,
};
use hallflow::response::{
    chern_simons_check, conductance_stats_ed, correlation_decay, hall_conductivity, response_scan, ConductanceStats,
};
use hallflow::{FilterKernel, Flux, FlowSpec, FockOperator, InsideProfile, Site, State, TorusLattice};
use hallflow_cli::commands::bloch_gap;
use hallflow_cli::selftest::{algebraic_checks, filter_quadrature, filter_weight, Check};
use hallflow_cli::{default_config, run_to_dir, Command};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const SEED: u64 = 20_240_611;
/// Midpoint of the lowest gap at b = 2 pi / 3.
pub const MU: f64 = -1.366_025_403_784_438_6;
pub const FLUX: Flux = Flux { p: 1, q: 3 };
pub const GAP_FRACTION: f64 = 0.9;

pub const ALGEBRA_TOL: f64 = 1e-12;
pub const ALGEBRA_CASES: usize = 50;
pub const FILTER_WEIGHT_TOL: f64 = 1e-10;
pub const QUADRATURE_TOL: f64 = 1e-8;
pub const QUADRATURE_INSTANCES: usize = 4;
pub const FLOW_IDENTITY_TOL: f64 = 1e-8;
pub const FLOW_PROBES: usize = 20;
pub const QUANTIZATION_SIDE: usize = 9;
pub const QUANTIZATION_REL: f64 = 0.01;
pub const ORACLE_TOL: f64 = 1e-8;
pub const NEASS_ORDER: usize = 2;
pub const NEASS_LAMBDA: f64 = 0.05;
pub const LONGITUDINAL_SLOPE: f64 = 2.7;
/// A longitudinal current below this on the whole grid counts as vanishing.
pub const LONGITUDINAL_ZERO: f64 = 1e-12;
pub const HALL_SLOPE_REL: f64 = 0.02;
pub const CS_STRENGTH: f64 = 0.1;
pub const CS_TOL: f64 = 1e-6;
pub const LAMBDA_DRIFT_REL: f64 = 0.10;
pub const CERTIFICATE_PROBES: usize = 1000;
pub const CERTIFICATE_SLACK: f64 = 1e-9;
pub const CERTIFICATE_FRACTION: f64 = 0.5;
pub const CONDUCTANCE_SIDE: usize = 48;
pub const CONDUCTANCE_SEGMENTS: [usize; 3] = [8, 16, 32];
pub const CONDUCTANCE_EPS: f64 = 0.05;
pub const VARIANCE_FACTOR: f64 = 2.0;
pub const WICK_TOL: f64 = 1e-10;
pub const CORRELATION_DISTANCE: usize = 12;
pub const CORRELATION_FLOOR: f64 = 1e-14;
pub const DECAY_R2: f64 = 0.95;

pub struct Verdict {
    pub criterion: usize,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
    pub budget: Option<f64>,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "criterion {}: {status} {} ({:.1} s", self.criterion, self.detail, self.seconds)?;
        match self.budget {
            Some(b) => write!(f, ", budget {b:.0} s)"),
            None => write!(f, ")"),
        }
    }
}

/// Runs `check` and folds the runtime budget into the verdict.
pub fn evaluate(criterion: usize, budget: Option<f64>, check: impl FnOnce() -> Result<(bool, String)>) -> Verdict {
    let start = Instant::now();
    let (passed, detail) = match check() {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e:#}")),
    };
    let seconds = start.elapsed().as_secs_f64();
    let in_time = budget.map_or(true, |b| seconds < b);
    let detail = if passed && !in_time { format!("{detail}; over the runtime budget") } else { detail };
    Verdict { criterion, passed: passed && in_time, detail, seconds, budget }
}

pub fn run_all() -> Vec<Verdict> {
    vec![
        evaluate(1, Some(30.0), algebraic_suite),
        evaluate(2, Some(30.0), filter_identities),
        evaluate(3, Some(300.0), flow_identities),
        evaluate(4, Some(60.0), one_body_quantization),
        evaluate(5, Some(300.0), quasi_free_oracle),
        evaluate(6, Some(900.0), neass_response),
        evaluate(7, Some(600.0), chern_simons_invariance),
        evaluate(8, Some(300.0), gap_certificates),
        evaluate(9, Some(600.0), conductance_statistics),
        evaluate(10, None, selftest_determinism),
    ]
}

fn summarize(checks: &[Check]) -> (bool, String) {
    let passed = checks.iter().all(|c| c.passed);
    let parts: Vec<String> = checks
        .iter()
        .map(|c| format!("{} {:.1e}/{:.0e}{}", c.name, c.max_residual, c.tolerance, if c.passed { "" } else { " !" }))
        .collect();
    (passed, parts.join(", "))
}

struct Ed {
    model: HofstadterModel,
    state: State,
    cache: SpectralCache,
    kernel: FilterKernel,
}

impl Ed {
    fn new(lambda: f64) -> Result<Self> {
        let lat = TorusLattice::with_flux(3, FLUX)?;
        let model = HofstadterModel::new(&lat, MU, lambda, None)?;
        let (state, cache) = ground_state(model.total())?;
        let kernel = FilterKernel::new(GAP_FRACTION * cache.gap, InsideProfile::Cubic);
        Ok(Ed { model, state, cache, kernel })
    }

    fn ctx(&self) -> FlowContext<'_> {
        FlowContext::new(&self.model.hamiltonian, &self.cache, &self.kernel)
    }
}

/// Random local probes, coordinates taken about their first site.
fn probes(lat: &TorusLattice, rng: &mut ChaCha8Rng, count: usize) -> Vec<FockOperator> {
    (0..count)
        .map(|_| {
            let a = random_local_probe(lat, rng, 3);
            let c = lat.site(a.modes()[0]);
            a.with_center(c)
        })
        .collect()
}

pub fn algebraic_suite() -> Result<(bool, String)> {
    let mut tol = default_config().tolerances;
    tol.algebra = ALGEBRA_TOL;
    Ok(summarize(&algebraic_checks(SEED, ALGEBRA_CASES, &tol)?))
}

pub fn filter_identities() -> Result<(bool, String)> {
    let mut checks = filter_weight(FILTER_WEIGHT_TOL);
    checks.push(filter_quadrature(SEED, QUADRATURE_INSTANCES, QUADRATURE_TOL)?);
    Ok(summarize(&checks))
}

pub fn flow_identities() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut od = [0.0f64; 3];
    let mut inverse = 0.0f64;
    for lambda in [0.0, NEASS_LAMBDA] {
        let ed = Ed::new(lambda)?;
        let ctx = ed.ctx();
        let ps = probes(&ed.model.lat, &mut rng, FLOW_PROBES);
        let specs = [FlowSpec::position(1), FlowSpec::position(2), FlowSpec::bounded(1.0, &ed.model.interaction)];
        for (slot, spec) in specs.iter().enumerate() {
            od[slot] = od[slot].max(ctx.od_property_residual(&ed.state, spec, &ps)?);
            inverse = inverse.max(ctx.inversion_residual(spec, &ps)?);
        }
    }
    let worst = od.iter().fold(inverse, |a, &b| a.max(b));
    Ok((
        worst <= FLOW_IDENTITY_TOL,
        format!(
            "od residual X1 {:.2e}, X2 {:.2e}, V {:.2e}; inverse residual {:.2e}; tolerance {:.0e}",
            od[0], od[1], od[2], inverse, FLOW_IDENTITY_TOL
        ),
    ))
}

pub fn one_body_quantization() -> Result<(bool, String)> {
    let model = OneBodyModel::with_flux(QUANTIZATION_SIDE, FLUX, MU)?;
    let bands = model.filling() * FLUX.q as usize / (QUANTIZATION_SIDE * QUANTIZATION_SIDE);
    let dc = one_body_chern(&model, ChernMethod::DoubleCommutator)?;
    let c = kspace_chern(FLUX, bands)?.chern;
    let target = c as f64 / (2.0 * PI);
    let rel = (dc - target).abs() / target.abs();
    Ok((
        c.abs() == 1 && rel <= QUANTIZATION_REL,
        format!("double commutator {dc:.6}, C/(2 pi) {target:.6} with C = {c}, relative deviation {rel:.3e}"),
    ))
}

pub fn quasi_free_oracle() -> Result<(bool, String)> {
    let ed = Ed::new(0.0)?;
    let sigma = hall_conductivity(&ed.ctx(), &ed.state)?.sigma;
    let one = OneBodyModel::with_flux(3, FLUX, MU)?;
    let dc = one_body_chern(&one, ChernMethod::DoubleCommutator)?;
    let od = one_body_chern(&one, ChernMethod::OffDiagonal)?;
    Ok((
        (sigma - dc).abs() <= ORACLE_TOL,
        format!(
            "many-body {sigma:.12}, double commutator {dc:.12} (deviation {:.3e}); off-diagonal trace {od:.12} (deviation {:.1e})",
            (sigma - dc).abs(),
            (sigma - od).abs()
        ),
    ))
}

pub fn neass_response() -> Result<(bool, String)> {
    let ed = Ed::new(NEASS_LAMBDA)?;
    let ctx = ed.ctx();
    let sigma = hall_conductivity(&ctx, &ed.state)?.sigma;
    let gens = neass_generators(&ctx, &ed.model.interaction, NEASS_ORDER)?;
    let grid: Vec<f64> = (0..7).map(|k| 10f64.powf(-2.5 + 0.25 * k as f64)).collect();
    let report = response_scan(&ctx, &ed.state, &gens, &ed.model.interaction, &grid, sigma)?;
    let hall = report.hall_fit.ok_or_else(|| anyhow!("no Hall fit"))?;
    let hall_rel = (hall.slope - sigma).abs() / sigma.abs();
    let (long_ok, long_msg) = if report.longitudinal_vanishes(LONGITUDINAL_ZERO) {
        (true, format!("longitudinal current vanishes (max {:.1e})", report.longitudinal_max))
    } else {
        let fit = report.longitudinal_fit.ok_or_else(|| anyhow!("no longitudinal fit"))?;
        (fit.slope >= LONGITUDINAL_SLOPE, format!("longitudinal slope {:.3}", fit.slope))
    };
    Ok((
        long_ok && hall_rel <= HALL_SLOPE_REL,
        format!("{long_msg}; Hall slope {:.6} vs sigma_H {sigma:.6} (relative {hall_rel:.3e})", hall.slope),
    ))
}

/// A random self-adjoint two-site piece, periodized.
fn random_generator(lat: &TorusLattice) -> Interaction {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    rng.set_stream(2);
    let mut frame = vec![lat.index(Site::ORIGIN), lat.index(lat.shift(Site::ORIGIN, (1, 0)))];
    frame.sort_unstable();
    let piece = FockOperator::random_gauge_invariant(&frame, &mut rng, true);
    Interaction::periodic_from_pieces(lat, &[piece.with_center(Site::ORIGIN)])
}

pub fn chern_simons_invariance() -> Result<(bool, String)> {
    let mut sigma = [0.0; 2];
    let mut delta = 0.0f64;
    for (slot, lambda) in [0.0, NEASS_LAMBDA].into_iter().enumerate() {
        let ed = Ed::new(lambda)?;
        let ctx = ed.ctx();
        let cs = chern_simons_check(&ctx, &ed.state, &random_generator(&ed.model.lat), CS_STRENGTH)?;
        sigma[slot] = cs.before;
        delta = delta.max(cs.delta);
    }
    let drift = (sigma[1] - sigma[0]).abs() / sigma[0].abs();
    Ok((
        delta <= CS_TOL && drift <= LAMBDA_DRIFT_REL,
        format!("|delta sigma_H| {delta:.3e}; lambda drift {drift:.3e} ({:.6} -> {:.6})", sigma[0], sigma[1]),
    ))
}

pub fn gap_certificates() -> Result<(bool, String)> {
    let g0 = OneBodyModel::with_flux(3, FLUX, MU)?.gap();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let free = Ed::new(0.0)?;
    let c0 = gap_certificate(&free.state, &free.model.hamiltonian, g0, CERTIFICATE_PROBES, &mut rng)?;
    let inter = Ed::new(NEASS_LAMBDA)?;
    let c1 = gap_certificate(&inter.state, &inter.model.hamiltonian, CERTIFICATE_FRACTION * g0, CERTIFICATE_PROBES, &mut rng)?;
    let ok0 = c0.min_ratio >= g0 - CERTIFICATE_SLACK;
    let ok1 = c1.min_ratio >= CERTIFICATE_FRACTION * g0;
    Ok((
        ok0 && ok1,
        format!(
            "lambda 0: min ratio {:.6} vs {g0:.6} ({} probes); lambda {NEASS_LAMBDA}: min ratio {:.6} vs {:.6} ({} probes)",
            c0.min_ratio,
            c0.evaluated,
            c1.min_ratio,
            CERTIFICATE_FRACTION * g0,
            c1.evaluated
        ),
    ))
}

pub fn conductance_statistics() -> Result<(bool, String)> {
    let side = CONDUCTANCE_SIDE;
    let kernel = FilterKernel::new(GAP_FRACTION * bloch_gap(side, FLUX, MU)?, InsideProfile::Cubic);
    let lat = TorusLattice::with_flux(side, FLUX)?;
    let p = BlochProjection::new(side, FLUX, MU, &kernel, CONDUCTANCE_EPS)?;
    let mut scaled = Vec::new();
    for &s in &CONDUCTANCE_SEGMENTS {
        let st = segment_stats(&lat, &p, s)?;
        scaled.push(ConductanceStats::from_current(s, CONDUCTANCE_EPS, st.mean_current, st.variance_current).scaled_variance);
    }
    let hi = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = scaled.iter().cloned().fold(f64::INFINITY, f64::min);
    let ratio = hi / lo;
    let decay = correlation_decay(current_correlations(&lat, &p, CORRELATION_DISTANCE), CORRELATION_FLOOR);

    // exact diagonalization against Wick on the 3 x 3 torus
    let ed = Ed::new(0.0)?;
    let one = OneBodyModel::with_flux(3, FLUX, MU)?;
    let k = first_order_generator(&one, &ed.kernel);
    let proj = one.fermi_projection()?;
    let modes: Vec<usize> = (0..9).collect();
    let dgamma = FockOperator::quadratic(&modes, &k);
    let u = linalg::expi_hermitian(dgamma.matrix().as_ref(), -CONDUCTANCE_EPS);
    let dressed = ed.state.transformed(&u)?;
    let pe = dressed_projection(&proj, &k, CONDUCTANCE_EPS);
    let v = Interaction::zero(&ed.model.lat);
    let mut wick_dev = 0.0f64;
    for segment in 1..=3 {
        let exact = conductance_stats_ed(&ed.model.hamiltonian, &v, &dressed, CONDUCTANCE_EPS, segment)?;
        let w = segment_stats(&ed.model.lat, &pe, segment)?;
        let w = ConductanceStats::from_current(segment, CONDUCTANCE_EPS, w.mean_current, w.variance_current);
        wick_dev = wick_dev.max((exact.variance - w.variance).abs());
    }
    let r2 = decay.r2;
    Ok((
        ratio <= VARIANCE_FACTOR && wick_dev <= WICK_TOL && r2 >= DECAY_R2,
        format!(
            "scaled variances [{}] (ratio {ratio:.3}); ED vs Wick {wick_dev:.2e}; decay rate {:.3}, r2 {r2:.4}",
            scaled.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(", "),
            decay.rate
        ),
    ))
}

pub fn selftest_determinism() -> Result<(bool, String)> {
    let mut cfg = default_config();
    cfg.seed = SEED;
    let a = tempfile::tempdir()?;
    let b = tempfile::tempdir()?;
    let ma = run_to_dir(Command::Selftest, cfg.clone(), None, a.path())?;
    let mb = run_to_dir(Command::Selftest, cfg, None, b.path())?;
    let mut same = ma.digest == mb.digest;
    for name in ["selftest.json", "selftest.csv"] {
        same &= std::fs::read(a.path().join(name))? == std::fs::read(b.path().join(name))?;
    }
    Ok((same, format!("report digests {} / {}", &ma.outputs[0].sha256[..16], &mb.outputs[0].sha256[..16])))
}
