//! Order-m NEASS generators and the dressed states they produce.
//!
//! Generators are kept both as origin operators K_mu,* and as torus sums
//! K_mu = sum_gamma T_gamma K_mu,*. Iterated commutators are formed on the
//! torus sums; the only place the position operator enters is
//! [i K, X_1] = -i sum_gamma T_gamma L_{X_1} K_*, with coordinates about the
//! origin for the origin operator.

use faer::Mat;
use serde::Serialize;

use crate::c64;
use crate::error::{Error, Result};
use crate::filter::{FlowContext, FlowSpec};
use crate::fock::FockOperator;
use crate::interactions::{position_liouvillian, Interaction, MagneticTranslation};
use crate::lattice::Site;
use crate::linalg::{self, I};
use crate::state::State;

pub const MAX_ORDER: usize = 4;

#[derive(Clone, Debug)]
pub struct NeassGenerators {
    pub order: usize,
    /// K_mu,* on the full frame, attached to the origin.
    pub origin: Vec<FockOperator>,
    /// sum_gamma T_gamma K_mu,*.
    pub totals: Vec<FockOperator>,
    /// L_mu + V_mu as torus sums, for mu >= 2 (index 0 holds V).
    pub sources: Vec<FockOperator>,
}

impl NeassGenerators {
    /// S = sum_mu eps^mu K_mu.
    pub fn s_total(&self, eps: f64) -> FockOperator {
        let mut s = self.totals[0].scale_real(0.0);
        for (mu, k) in self.totals.iter().enumerate() {
            s.add_assign_scaled(k, c64::new(eps.powi(mu as i32 + 1), 0.0));
        }
        s
    }
}

/// All ordered tuples of positive integers summing to `total` with exactly `parts` parts.
fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 0 {
        return if total == 0 { vec![vec![]] } else { vec![] };
    }
    let mut out = Vec::new();
    for first in 1..=total.saturating_sub(parts - 1) {
        for mut rest in compositions(total - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|x| x as f64).product()
}

struct Builder<'a> {
    ctx: &'a FlowContext<'a>,
    v_total: FockOperator,
    translations: MagneticTranslation,
    origin: Vec<FockOperator>,
    totals: Vec<FockOperator>,
}

impl<'a> Builder<'a> {
    /// ad(iK_nu) B = i [K_nu, B].
    fn ad(&self, nu: usize, b: &FockOperator) -> FockOperator {
        self.totals[nu - 1].commutator(b).scale(I)
    }

    /// ad(iK_nu)(X_1) = -i sum_gamma T_gamma L_{X_1} K_nu,*.
    fn ad_position(&self, nu: usize) -> Result<FockOperator> {
        let k = &self.origin[nu - 1];
        let lx = position_liouvillian(self.ctx.lat, 1, k)?;
        Ok(self.translations.periodic_sum(&lx).scale(-I))
    }

    /// ad(iK_{nu_1}) ... ad(iK_{nu_k}) applied to H or to X_1 + V.
    fn chain(&self, tuple: &[usize], on_h: bool) -> Result<FockOperator> {
        let (&last, rest) = tuple.split_last().expect("non-empty tuple");
        let mut b = if on_h {
            self.ad(last, self.ctx.hamiltonian.total())
        } else {
            self.ad(last, &self.v_total).add(&self.ad_position(last)?)
        };
        for &nu in rest.iter().rev() {
            b = self.ad(nu, &b);
        }
        Ok(b)
    }

    /// L_mu + V_mu for mu >= 2.
    fn source(&self, mu: usize) -> Result<FockOperator> {
        let n = self.ctx.lat.n_sites();
        let mut acc = FockOperator::zero().to_full(n)?;
        for k in 2..=mu {
            for t in compositions(mu, k) {
                acc.add_assign_scaled(&self.chain(&t, true)?, c64::new(1.0 / factorial(k), 0.0));
            }
        }
        for k in 1..mu {
            for t in compositions(mu - 1, k) {
                acc.add_assign_scaled(&self.chain(&t, false)?, c64::new(1.0 / factorial(k), 0.0));
            }
        }
        Ok(acc)
    }

    fn push(&mut self, k_origin: FockOperator) {
        let total = self.translations.periodic_sum(&k_origin);
        self.origin.push(k_origin.with_center(Site::ORIGIN));
        self.totals.push(total);
    }
}

/// K_1 = -I(X_1 + V) and K_mu = -I(L_mu + V_mu).
pub fn neass_generators(ctx: &FlowContext, v: &Interaction, order: usize) -> Result<NeassGenerators> {
    if order == 0 || order > MAX_ORDER {
        return Err(Error::OrderOverflow(order));
    }
    let v_total = v.total().clone();
    let mut b = Builder {
        ctx,
        v_total: v_total.clone(),
        translations: MagneticTranslation::new(ctx.lat),
        origin: Vec::new(),
        totals: Vec::new(),
    };
    let spec1 = FlowSpec { p: 1.0, y_total: Some(v_total.clone()), q: 1.0, j: 1, alpha: None };
    b.push(ctx.inverse_liouvillian(&spec1)?.scale_real(-1.0));
    let mut sources = vec![v_total];
    for mu in 2..=order {
        let src = b.source(mu)?;
        let spec = FlowSpec::bounded_total(1.0, src.clone());
        b.push(ctx.inverse_liouvillian(&spec)?.scale_real(-1.0));
        sources.push(src);
    }
    Ok(NeassGenerators { order, origin: b.origin, totals: b.totals, sources })
}

/// max over probes of |omega_0(L_{H_mu + V_mu} B)| for each order mu.
pub fn order_conditions(
    ctx: &FlowContext,
    gens: &NeassGenerators,
    state: &State,
    probes: &[FockOperator],
) -> Result<Vec<f64>> {
    let h = ctx.hamiltonian.total();
    let mut out = Vec::new();
    for mu in 0..gens.order {
        let block = gens.totals[mu].commutator(h).scale(I).add(&gens.sources[mu]);
        let mut worst = 0.0f64;
        for a in probes {
            let mut val = state.expect(&block.commutator(a))?;
            if mu == 0 {
                val += state.expect(&position_liouvillian(ctx.lat, 1, a)?)?;
            }
            worst = worst.max(val.abs());
        }
        out.push(worst);
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct DressedState {
    pub epsilon: f64,
    pub s_total: FockOperator,
    pub state: State,
}

/// omega_eps(A) = omega_0(e^{iS} A e^{-iS}), S = sum_mu eps^mu K_mu.
pub fn dress_state(ground: &State, gens: &NeassGenerators, eps: f64) -> Result<DressedState> {
    let s = gens.s_total(eps);
    if eps == 0.0 {
        return Ok(DressedState { epsilon: eps, s_total: s, state: ground.clone() });
    }
    let u: Mat<c64> = linalg::expi_hermitian(s.matrix().as_ref(), -1.0);
    Ok(DressedState { epsilon: eps, s_total: s, state: ground.transformed(&u)? })
}

#[derive(Clone, Debug, Serialize)]
pub struct StationarityRow {
    pub epsilon: f64,
    pub residual: f64,
    pub s_norm_over_eps: f64,
}

/// max over probes of |omega_eps(L_H A + eps L_V A + eps L_{X_1} A)| / |A|_nu.
pub fn stationarity_residual(
    dressed: &DressedState,
    hamiltonian: &Interaction,
    v: &Interaction,
    probes: &[FockOperator],
    nu: u32,
) -> Result<f64> {
    let lat = hamiltonian.lattice();
    let eps = dressed.epsilon;
    let mut h_eps = hamiltonian.total().clone();
    h_eps.add_assign_scaled(v.total(), c64::new(eps, 0.0));
    let mut worst = 0.0f64;
    for a in probes {
        let mut gen = h_eps.commutator(a);
        if eps != 0.0 {
            gen.add_assign_scaled(&position_liouvillian(lat, 1, a)?, c64::new(eps, 0.0));
        }
        let center = a.center().or_else(|| lat.centroid(a.modes())).unwrap_or(Site::ORIGIN);
        let norm = a.decay_norm(lat, nu, center)?;
        worst = worst.max(dressed.state.expect(&gen)?.abs() / norm);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn composition_counts() {
        assert_eq!(compositions(4, 2).len(), 3);
        assert_eq!(compositions(4, 4), vec![vec![1, 1, 1, 1]]);
        assert_eq!((1..=4).map(|k| compositions(4, k).len()).sum::<usize>(), 8);
        assert!(compositions(2, 3).is_empty());
    }
}
