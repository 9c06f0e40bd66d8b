//! Currents, the double-commutator Hall conductivity and the main experiments.

use faer::Mat;
use serde::Serialize;

use crate::c64;
use crate::error::{Error, Result};
use crate::filter::{FlowContext, FlowSpec};
use crate::fit::{self, LinearFit};
use crate::fock::FockOperator;
use crate::interactions::{Interaction, MagneticTranslation, Term};
use crate::linalg::{self, I};
use crate::neass::{dress_state, NeassGenerators};
use crate::state::State;

/// J_j = i[H + eps V, X_j]: terms -i [X_j, Phi(M)] taken about each term's point.
pub fn current_interaction(h: &Interaction, v: &Interaction, eps: f64, j: usize) -> Result<Interaction> {
    let total = if eps == 0.0 { h.clone() } else { h.add(&v.scale(eps))? };
    let comm = total.position_commutator(j);
    let terms = comm
        .terms()
        .iter()
        .map(|t| Term { center: t.center, op: t.op.scale(-I) })
        .collect();
    Ok(Interaction::from_terms(h.lattice(), terms, total.is_periodic()))
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct HallConductivity {
    pub sigma: f64,
    /// Imaginary part discarded from the trace formula.
    pub imaginary_residue: f64,
    /// Value with the roles of X_1 and X_2 exchanged.
    pub swapped: f64,
}

/// sigma_21 = -i omega([X_1^OD, (X_2^OD)_*]) with X_1^OD summed over the torus.
pub fn hall_conductivity(ctx: &FlowContext, state: &State) -> Result<HallConductivity> {
    hall_conductivity_with(ctx, state, None)
}

/// Hall conductivity of omega o alpha, alpha(A) = U A U^*, with alpha-dressed OD maps.
pub fn hall_conductivity_with(ctx: &FlowContext, state: &State, u: Option<&Mat<c64>>) -> Result<HallConductivity> {
    let spec = |j: usize| {
        let s = FlowSpec::position(j);
        match u {
            Some(u) => s.with_alpha(u.clone()),
            None => s,
        }
    };
    let x1 = ctx.od_map(&spec(1))?;
    let x2 = ctx.od_map(&spec(2))?;
    let dressed = match u {
        Some(u) => state.transformed(&u.adjoint().to_owned())?,
        None => state.clone(),
    };
    let t = MagneticTranslation::new(ctx.lat);
    let value = |a: &FockOperator, b: &FockOperator| -> Result<c64> {
        let total = t.periodic_sum(a);
        Ok(dressed.expect(&total.commutator(b))? * (-I))
    };
    let s = value(&x1, &x2)?;
    let swapped = value(&x2, &x1)?;
    Ok(HallConductivity { sigma: s.re, imaginary_residue: s.im.abs(), swapped: swapped.re })
}

#[derive(Clone, Debug, Serialize)]
pub struct ResponseRow {
    pub epsilon: f64,
    pub j1: f64,
    pub j2: f64,
    /// Volume-average route, for cross-checking the origin-term route.
    pub j1_volume: f64,
    pub j2_volume: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ResponseReport {
    pub order: usize,
    pub rows: Vec<ResponseRow>,
    pub sigma_h: f64,
    pub hall_fit: Option<LinearFit>,
    pub longitudinal_fit: Option<LinearFit>,
    /// Largest |omega_eps(J_1)| over the nonzero grid points.
    pub longitudinal_max: f64,
}

impl ResponseReport {
    /// True when the longitudinal current is zero to rounding on the whole grid.
    pub fn longitudinal_vanishes(&self, tol: f64) -> bool {
        self.longitudinal_max <= tol
    }
}

/// Per-volume currents in the dressed states over an epsilon grid.
pub fn response_scan(
    ctx: &FlowContext,
    ground: &State,
    gens: &NeassGenerators,
    v: &Interaction,
    grid: &[f64],
    sigma_h: f64,
) -> Result<ResponseReport> {
    let mut rows = Vec::new();
    for &eps in grid {
        let dressed = dress_state(ground, gens, eps)?;
        let mut vals = [0.0; 4];
        for (slot, j) in [1usize, 2].into_iter().enumerate() {
            let cur = current_interaction(ctx.hamiltonian, v, eps, j)?;
            vals[slot] = dressed.state.expect(&cur.origin_term())?.re;
            vals[slot + 2] = cur.volume_average(&dressed.state)?;
        }
        rows.push(ResponseRow { epsilon: eps, j1: vals[0], j2: vals[1], j1_volume: vals[2], j2_volume: vals[3] });
    }
    let pos: Vec<&ResponseRow> = rows.iter().filter(|r| r.epsilon > 0.0).collect();
    let eps: Vec<f64> = pos.iter().map(|r| r.epsilon).collect();
    let j1: Vec<f64> = pos.iter().map(|r| r.j1).collect();
    let j2: Vec<f64> = pos.iter().map(|r| r.j2).collect();
    let longitudinal_max = j1.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    Ok(ResponseReport {
        order: gens.order,
        sigma_h,
        hall_fit: fit::linear_fit(&eps, &j2),
        longitudinal_fit: fit::loglog_fit(&eps, &j1),
        longitudinal_max,
        rows,
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ChernSimons {
    pub before: f64,
    pub after: f64,
    pub delta: f64,
}

/// sigma_H for omega_0 and for omega_0 o alpha, alpha = exp(i strength L_G).
pub fn chern_simons_check(ctx: &FlowContext, state: &State, generator: &Interaction, strength: f64) -> Result<ChernSimons> {
    if !generator.is_periodic() {
        return Err(Error::TranslationMismatch);
    }
    let before = hall_conductivity(ctx, state)?.sigma;
    if strength == 0.0 {
        return Ok(ChernSimons { before, after: before, delta: 0.0 });
    }
    let u = linalg::expi_hermitian(generator.total().matrix().as_ref(), strength);
    let after = hall_conductivity_with(ctx, state, Some(&u))?.sigma;
    Ok(ChernSimons { before, after, delta: (after - before).abs() })
}

#[derive(Clone, Debug, Serialize)]
pub struct ConductanceStats {
    pub segment: usize,
    pub epsilon: f64,
    pub mean_g: f64,
    pub variance: f64,
    /// variance * eps^2 * segment.
    pub scaled_variance: f64,
}

impl ConductanceStats {
    pub fn from_current(segment: usize, epsilon: f64, mean_current: f64, variance_current: f64) -> Self {
        let l = segment as f64;
        let variance = variance_current / (epsilon * epsilon * l * l);
        ConductanceStats {
            segment,
            epsilon,
            mean_g: mean_current / (epsilon * l),
            variance,
            scaled_variance: variance * epsilon * epsilon * l,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CorrelationDecay {
    pub correlations: Vec<(usize, f64)>,
    pub rate: f64,
    pub r2: f64,
}

/// Connected correlations of the bond currents and their exponential fit,
/// using distances 1.. with correlations above `floor`.
pub fn correlation_decay(correlations: Vec<(usize, f64)>, floor: f64) -> CorrelationDecay {
    let (d, c): (Vec<f64>, Vec<f64>) = correlations
        .iter()
        .filter(|(d, c)| *d >= 1 && c.abs() > floor)
        .map(|&(d, c)| (d as f64, c))
        .unzip();
    let (rate, r2) = fit::exponential_fit(&d, &c).unwrap_or((f64::NAN, 0.0));
    CorrelationDecay { correlations, rate, r2 }
}

/// J_L = sum_{m=1}^{L} T_{(m,0)} (J_2)_0 on the full Fock space.
pub fn segment_current_operator(h: &Interaction, v: &Interaction, eps: f64, segment: usize) -> Result<FockOperator> {
    let lat = h.lattice();
    if segment > lat.l {
        return Err(Error::SegmentTooLong { segment, side: lat.l });
    }
    let j0 = current_interaction(h, v, eps, 2)?.origin_term().to_full(lat.n_sites())?;
    let t = MagneticTranslation::new(lat);
    let mut acc = j0.scale_real(0.0);
    for m in 1..=segment {
        acc.add_assign_scaled(&t.translate((m % lat.l, 0), &j0), c64::new(1.0, 0.0));
    }
    Ok(acc)
}

/// Mean and variance of G_L = J_L / (eps L) in a many-body state.
pub fn conductance_stats_ed(
    h: &Interaction,
    v: &Interaction,
    state: &State,
    eps: f64,
    segment: usize,
) -> Result<ConductanceStats> {
    let jl = segment_current_operator(h, v, eps, segment)?;
    let mean = state.expect(&jl)?.re;
    let second = state.expect_product(&jl, &jl)?.re;
    Ok(ConductanceStats::from_current(segment, eps, mean, second - mean * mean))
}
