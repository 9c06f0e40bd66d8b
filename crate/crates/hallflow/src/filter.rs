//! The filter W_g and the maps built from it: I_H, the off-diagonal map and
//! the quasi-local inverse Liouvillian.
//!
//! The weight `w(k) = int W_g(s) e^{iks} ds` is `i/k` outside the gap and an
//! odd polynomial profile inside. Every map has an exact eigenbasis form,
//! which is the production path, and a time-quadrature form that integrates
//! the defining time integrals with W_g sampled in closed form, closing
//! [T_max, inf) with the asymptotic expansion of W_g.

use std::f64::consts::PI;
use std::sync::OnceLock;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::c64;
use crate::error::{Error, Result};
use crate::fock::FockOperator;
use crate::hofstadter::SpectralCache;
use crate::interactions::{position_liouvillian, Interaction, MagneticTranslation};
use crate::lattice::{Site, TorusLattice};
use crate::linalg::{self, ZERO};
use crate::state::State;

/// Odd profile r(t) on [0, 1], with w(k) = (i/g) r(k/g) inside the gap.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum InsideProfile {
    /// 2t - t^3, C^1 at the gap edge.
    #[default]
    Cubic,
    /// 3t - 3t^3 + t^5, C^2 at the gap edge.
    Quintic,
}

impl InsideProfile {
    fn coefficients(self) -> &'static [(u32, f64)] {
        match self {
            InsideProfile::Cubic => &[(1, 2.0), (3, -1.0)],
            InsideProfile::Quintic => &[(1, 3.0), (3, -3.0), (5, 1.0)],
        }
    }

    pub fn value(self, t: f64) -> f64 {
        self.coefficients().iter().map(|&(n, c)| c * t.powi(n as i32)).sum()
    }

    /// r^{(j)}(1).
    pub fn derivative_at_one(self, j: usize) -> f64 {
        self.coefficients()
            .iter()
            .map(|&(n, c)| if j as u32 > n { 0.0 } else { c * ((n - j as u32 + 1)..=n).map(|k| k as f64).product::<f64>() })
            .sum()
    }

    /// r'(0).
    pub fn slope_at_zero(self) -> f64 {
        self.coefficients().iter().find(|x| x.0 == 1).map(|x| x.1).unwrap_or(0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureMode {
    IMap,
    Od,
    Inverse,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FilterKernel {
    pub g: f64,
    pub profile: InsideProfile,
    pub t_max: f64,
    pub nodes: usize,
    #[serde(skip)]
    samples: OnceLock<Vec<(f64, f64)>>,
}

impl FilterKernel {
    pub fn new(g: f64, profile: InsideProfile) -> Self {
        FilterKernel { g, profile, t_max: 1500.0, nodes: 600_000, samples: OnceLock::new() }
    }

    pub fn with_quadrature(mut self, t_max: f64, nodes: usize) -> Self {
        self.t_max = t_max;
        self.nodes = nodes + nodes % 2;
        self.samples = OnceLock::new();
        self
    }

    /// int W_g(s) e^{iks} ds.
    pub fn weight(&self, k: f64) -> c64 {
        c64::new(0.0, self.real_weight(k))
    }

    fn real_weight(&self, k: f64) -> f64 {
        if k.abs() >= self.g {
            1.0 / k
        } else {
            self.profile.value(k / self.g) / self.g
        }
    }

    /// Kernel of the inverse Liouvillian, -w(d)/(i d), continuous at d = 0.
    pub fn inverse_weight(&self, d: f64) -> f64 {
        if d.abs() >= self.g {
            -1.0 / (d * d)
        } else if d == 0.0 {
            -self.profile.slope_at_zero() / (self.g * self.g)
        } else {
            -self.real_weight(d) / d
        }
    }

    /// W_g(s) = (1/2pi) int w(k) e^{-iks} dk, odd in s.
    pub fn time_profile(&self, s: f64) -> f64 {
        if s == 0.0 {
            return 0.0;
        }
        let a = self.g * s.abs();
        let mut inside = 0.0;
        let moments = sine_moments(a, 5);
        for &(n, c) in self.profile.coefficients() {
            inside += c * moments[n as usize];
        }
        let w = 0.5 - sine_integral(a) / PI + inside / PI;
        w * s.signum()
    }

    fn samples(&self) -> &[(f64, f64)] {
        self.samples.get_or_init(|| {
            let n = self.nodes;
            let h = self.t_max / n as f64;
            (1..=n)
                .map(|k| {
                    let s = k as f64 * h;
                    let simpson = if k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
                    (s, self.time_profile(s) * simpson * h / 3.0)
                })
                .collect()
        })
    }

    /// 2 int_0^inf W(s) sin(d s) ds: Simpson on [0, T_max] plus the tail
    /// integrated from the asymptotic expansion of W.
    pub fn quadrature_weight(&self, d: f64) -> f64 {
        let head: f64 = self.samples().iter().map(|&(s, w)| w * (d * s).sin()).sum();
        2.0 * (head + self.tail(|p, g| {
            let plus = tail_integral(p, d + g, self.t_max);
            let minus = tail_integral(p, d - g, self.t_max);
            (0.5 * (plus.im + minus.im), 0.5 * (minus.re - plus.re))
        }, 0))
    }

    /// -2 int_0^inf s W(s) ds, the d = 0 value of the inverse kernel.
    fn quadrature_first_moment(&self) -> f64 {
        let head: f64 = self.samples().iter().map(|&(s, w)| w * s).sum();
        -2.0 * (head + self.tail(|p, g| {
            let j = tail_integral(p, g, self.t_max);
            (j.re, j.im)
        }, 1))
    }

    /// Sum over the asymptotic terms c_j trig(g s) / (g s)^{j+1} of W, each
    /// integrated over [T_max, inf) against s^{shift}; `f(p, g)` returns the
    /// (cos, sin) tail integrals with s^{-p}.
    fn tail(&self, f: impl Fn(usize, f64) -> (f64, f64), shift: usize) -> f64 {
        let g = self.g;
        if g * self.t_max < 40.0 {
            return 0.0;
        }
        let mut acc = 0.0;
        let mut fact = 1.0;
        for j in 0..TAIL_TERMS {
            if j > 0 {
                fact *= j as f64;
            }
            // the 1/s and 1/s^2 terms cancel for any profile with r(1) = 1, r'(1) = -1
            if j < 2 {
                continue;
            }
            let deriv = self.profile.derivative_at_one(j);
            let sign = if (j / 2) % 2 == 0 { 1.0 } else { -1.0 };
            let (cos_part, sin_part) = f(j + 1 - shift, g);
            let term = if j % 2 == 0 { sign * (fact - deriv) * cos_part } else { sign * (fact + deriv) * sin_part };
            acc += term / g.powi(j as i32 + 1);
        }
        acc / PI
    }

    pub fn quadrature_inverse_weight(&self, d: f64) -> f64 {
        if d == 0.0 {
            self.quadrature_first_moment()
        } else {
            -self.quadrature_weight(d) / d
        }
    }
}

const TAIL_TERMS: usize = 14;

/// int_T^inf s^{-p} e^{i w s} ds = T^{1-p} E_p(-i w T), p >= 2.
fn tail_integral(p: usize, w: f64, t: f64) -> c64 {
    expint_imaginary(p, w * t) * t.powi(1 - p as i32)
}

/// E_p(-i theta) = int_1^inf u^{-p} e^{i theta u} du for p >= 2.
pub fn expint_imaginary(p: usize, theta: f64) -> c64 {
    assert!(p >= 2, "E_p needs p >= 2 here");
    let one = c64::new(1.0, 0.0);
    if theta == 0.0 {
        return c64::new(1.0 / (p - 1) as f64, 0.0);
    }
    let z = c64::new(0.0, -theta);
    if theta.abs() < 1.0 {
        // series around 0
        let euler = 0.577_215_664_901_532_9;
        let psi = -euler + (1..p).map(|k| 1.0 / k as f64).sum::<f64>();
        let ln_z = c64::new(theta.abs().ln(), -theta.signum() * PI / 2.0);
        let minus_z = c64::new(0.0, theta);
        let mut pow = one;
        let mut fact = 1.0;
        let mut sum = c64::new(0.0, 0.0);
        let mut lead = c64::new(0.0, 0.0);
        for m in 0..200 {
            if m > 0 {
                pow *= minus_z;
                fact *= m as f64;
            }
            if m == p - 1 {
                lead = pow * (c64::new(psi, 0.0) - ln_z) * (1.0 / fact);
                continue;
            }
            let add = pow * (1.0 / ((m as f64 - p as f64 + 1.0) * fact));
            sum -= add;
            if m > p && add.abs() < 1e-18 {
                break;
            }
        }
        return lead + sum;
    }
    // continued fraction, modified Lentz
    let tiny = 1e-300;
    let mut b = z + c64::new(p as f64, 0.0);
    let mut c = c64::new(1.0 / tiny, 0.0);
    let mut d = one / b;
    let mut h = d;
    for i in 1..100_000 {
        let an = -((i * (p - 1 + i)) as f64);
        b += c64::new(2.0, 0.0);
        d = one / (d * an + b);
        c = b + c64::new(an, 0.0) / c;
        let del = c * d;
        h *= del;
        if (del - one).abs() < 1e-16 {
            break;
        }
    }
    h * c64::new(theta.cos(), theta.sin())
}

/// Si(x) = int_0^x sin(t)/t dt.
pub fn sine_integral(x: f64) -> f64 {
    if x < 0.0 {
        return -sine_integral(-x);
    }
    if x <= 4.0 {
        let mut term = x;
        let mut sum = x;
        let x2 = x * x;
        let mut n = 0;
        loop {
            n += 1;
            term *= -x2 / ((2 * n) as f64 * (2 * n + 1) as f64);
            let add = term / (2 * n + 1) as f64;
            sum += add;
            if add.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        return sum;
    }
    // continued fraction for E_1(ix), modified Lentz
    let tiny = 1e-300;
    let mut b = c64::new(1.0, x);
    let mut c = c64::new(1.0 / tiny, 0.0);
    let mut d = c64::new(1.0, 0.0) / b;
    let mut h = d;
    for i in 2..10_000 {
        let a = -((i - 1) * (i - 1)) as f64;
        b += c64::new(2.0, 0.0);
        d = c64::new(1.0, 0.0) / (d * a + b);
        c = b + c64::new(a, 0.0) / c;
        let del = c * d;
        h *= del;
        if (del - c64::new(1.0, 0.0)).abs() < 1e-16 {
            break;
        }
    }
    h *= c64::new(x.cos(), -x.sin());
    PI / 2.0 + h.im
}

/// M_n(a) = int_0^1 t^n sin(a t) dt for n = 0..=n_max.
pub fn sine_moments(a: f64, n_max: usize) -> Vec<f64> {
    if a.abs() < 2.0 {
        return (0..=n_max)
            .map(|n| {
                let mut sum = 0.0;
                let mut pow = a;
                let mut fact = 1.0;
                for k in 0..40 {
                    let add = pow / (fact * (n + 2 * k + 2) as f64);
                    sum += if k % 2 == 0 { add } else { -add };
                    if add.abs() < 1e-20 {
                        break;
                    }
                    pow *= a * a;
                    fact *= ((2 * k + 2) * (2 * k + 3)) as f64;
                }
                sum
            })
            .collect();
    }
    let (s, c) = a.sin_cos();
    let mut m = vec![0.0; n_max + 1];
    let mut cm = vec![0.0; n_max + 1];
    m[0] = (1.0 - c) / a;
    cm[0] = s / a;
    for n in 1..=n_max {
        m[n] = -c / a + n as f64 / a * cm[n - 1];
        cm[n] = s / a - n as f64 / a * m[n - 1];
    }
    m
}

/// Applies f(E_m - E_n) entrywise in the eigenbasis of the cache.
pub fn eigenbasis_filter(cache: &SpectralCache, a: &Mat<c64>, f: impl Fn(f64) -> c64) -> Mat<c64> {
    let u = cache.vectors.as_ref();
    let ab = linalg::to_basis(u, a.as_ref());
    let e = &cache.values;
    let w = Mat::from_fn(ab.nrows(), ab.ncols(), |m, n| {
        let v = ab.read(m, n);
        if v == ZERO {
            ZERO
        } else {
            v * f(e[m] - e[n])
        }
    });
    linalg::from_basis(u, w.as_ref())
}

fn full_frame(cache: &SpectralCache, a: &FockOperator) -> Result<FockOperator> {
    let n = cache.dim().trailing_zeros() as usize;
    a.to_full(n)
}

/// (I_H A)_{mn} = w(E_m - E_n) A_{mn}.
pub fn i_map(cache: &SpectralCache, a: &FockOperator, kernel: &FilterKernel) -> Result<FockOperator> {
    let full = full_frame(cache, a)?;
    let m = eigenbasis_filter(cache, full.matrix(), |d| kernel.weight(d));
    Ok(FockOperator::from_parts(full.modes().to_vec(), m, a.center()))
}

/// Time-integral evaluation of the filter maps; errors when halving the
/// node count moves the result by more than 1e-6.
pub fn time_quadrature_filter(
    cache: &SpectralCache,
    a: &FockOperator,
    kernel: &FilterKernel,
    mode: QuadratureMode,
) -> Result<FockOperator> {
    let full = full_frame(cache, a)?;
    let fine = quadrature_apply(cache, full.matrix(), kernel, mode);
    let coarse_kernel = kernel.clone().with_quadrature(kernel.t_max, kernel.nodes / 2);
    let coarse = quadrature_apply(cache, full.matrix(), &coarse_kernel, mode);
    let plateau = linalg::max_abs((&fine - &coarse).as_ref());
    if plateau > 1e-6 * linalg::max_abs(full.matrix().as_ref()).max(1.0) {
        return Err(Error::QuadratureDiverged(plateau));
    }
    Ok(FockOperator::from_parts(full.modes().to_vec(), fine, a.center()))
}

fn quadrature_apply(cache: &SpectralCache, a: &Mat<c64>, kernel: &FilterKernel, mode: QuadratureMode) -> Mat<c64> {
    let mut memo: Vec<(f64, f64)> = Vec::new();
    let mut lookup = |d: f64| -> f64 {
        if let Some(&(_, v)) = memo.iter().find(|x| (x.0 - d).abs() < 1e-13) {
            return v;
        }
        let v = match mode {
            QuadratureMode::IMap | QuadratureMode::Od => kernel.quadrature_weight(d),
            QuadratureMode::Inverse => kernel.quadrature_inverse_weight(d),
        };
        memo.push((d, v));
        v
    };
    let u = cache.vectors.as_ref();
    let ab = linalg::to_basis(u, a.as_ref());
    let e = &cache.values;
    let mut w = Mat::zeros(ab.nrows(), ab.ncols());
    for n in 0..ab.ncols() {
        for m in 0..ab.nrows() {
            let v = ab.read(m, n);
            if v == ZERO {
                continue;
            }
            let k = lookup(e[m] - e[n]);
            let factor = match mode {
                QuadratureMode::IMap | QuadratureMode::Od => c64::new(0.0, k),
                QuadratureMode::Inverse => c64::new(k, 0.0),
            };
            w.write(m, n, v * factor);
        }
    }
    linalg::from_basis(u, w.as_ref())
}

/// Generator Psi = p Y + q X_j, with Y given by its total operator, and an
/// optional automorphism alpha(A) = U A U^*.
#[derive(Clone, Debug)]
pub struct FlowSpec {
    pub p: f64,
    pub y_total: Option<FockOperator>,
    pub q: f64,
    pub j: usize,
    pub alpha: Option<Mat<c64>>,
}

impl FlowSpec {
    pub fn position(j: usize) -> Self {
        FlowSpec { p: 0.0, y_total: None, q: 1.0, j, alpha: None }
    }

    pub fn bounded(p: f64, y: &Interaction) -> Self {
        FlowSpec { p, y_total: Some(y.total().clone()), q: 0.0, j: 1, alpha: None }
    }

    pub fn bounded_total(p: f64, y_total: FockOperator) -> Self {
        FlowSpec { p, y_total: Some(y_total), q: 0.0, j: 1, alpha: None }
    }

    pub fn mixed(p: f64, y: &Interaction, q: f64, j: usize) -> Self {
        FlowSpec { p, y_total: Some(y.total().clone()), q, j, alpha: None }
    }

    pub fn with_alpha(mut self, u: Mat<c64>) -> Self {
        self.alpha = Some(u);
        self
    }

    /// L_Psi B = p [Y, B] + q L_{X_j} B, with B's declared center (or centroid).
    pub fn liouvillian(&self, lat: &TorusLattice, b: &FockOperator) -> Result<FockOperator> {
        let mut out = FockOperator::zero().with_center_opt(b.center());
        if self.p != 0.0 {
            if let Some(y) = &self.y_total {
                out.add_assign_scaled(&y.commutator(b), c64::new(self.p, 0.0));
            }
        }
        if self.q != 0.0 {
            out.add_assign_scaled(&position_liouvillian(lat, self.j, b)?, c64::new(self.q, 0.0));
        }
        Ok(out.with_center_opt(b.center()))
    }
}

/// A gapped Hamiltonian with its origin term, spectral data and filter.
#[derive(Clone, Debug)]
pub struct FlowContext<'a> {
    pub lat: &'a TorusLattice,
    pub hamiltonian: &'a Interaction,
    pub cache: &'a SpectralCache,
    pub kernel: &'a FilterKernel,
}

impl<'a> FlowContext<'a> {
    pub fn new(hamiltonian: &'a Interaction, cache: &'a SpectralCache, kernel: &'a FilterKernel) -> Self {
        FlowContext { lat: hamiltonian.lattice(), hamiltonian, cache, kernel }
    }

    fn check_gap(&self) -> Result<()> {
        if self.cache.gap < self.kernel.g {
            return Err(Error::GapTooSmall { actual: self.cache.gap, required: self.kernel.g });
        }
        Ok(())
    }

    fn n_modes(&self) -> usize {
        self.lat.n_sites()
    }

    fn conjugate(u: &Mat<c64>, a: &FockOperator, inverse: bool) -> FockOperator {
        let m = if inverse {
            linalg::to_basis(u.as_ref(), a.matrix().as_ref())
        } else {
            linalg::from_basis(u.as_ref(), a.matrix().as_ref())
        };
        FockOperator::from_parts(a.modes().to_vec(), m, a.center())
    }

    /// (Psi^OD_alpha)_* = alpha^{-1} I_H alpha i L_Psi alpha^{-1} h_0, on the full frame.
    pub fn od_map(&self, spec: &FlowSpec) -> Result<FockOperator> {
        self.check_gap()?;
        let h0 = self.hamiltonian.origin_term().to_full(self.n_modes())?.with_center(Site::ORIGIN);
        let mut b = match &spec.alpha {
            Some(u) => Self::conjugate(u, &h0, true),
            None => h0,
        };
        b = spec.liouvillian(self.lat, &b)?.scale(linalg::I);
        if let Some(u) = &spec.alpha {
            b = Self::conjugate(u, &b, false);
        }
        let mut out = i_map(self.cache, &b, self.kernel)?;
        if let Some(u) = &spec.alpha {
            out = Self::conjugate(u, &out, true);
        }
        Ok(out.with_center(Site::ORIGIN))
    }

    /// I(Psi)_*: entries of i L_Psi h_0 times -w(d)/(i d).
    pub fn inverse_liouvillian(&self, spec: &FlowSpec) -> Result<FockOperator> {
        self.check_gap()?;
        let b = self.generator_image(spec)?;
        let m = eigenbasis_filter(self.cache, b.matrix(), |d| c64::new(self.kernel.inverse_weight(d), 0.0));
        Ok(FockOperator::from_parts(b.modes().to_vec(), m, Some(Site::ORIGIN)))
    }

    /// i L_Psi h_0 on the full frame.
    pub fn generator_image(&self, spec: &FlowSpec) -> Result<FockOperator> {
        let h0 = self.hamiltonian.origin_term().with_center(Site::ORIGIN);
        let b = spec.liouvillian(self.lat, &h0)?.scale(linalg::I);
        Ok(b.to_full(self.n_modes())?.with_center(Site::ORIGIN))
    }

    /// Sum of all translates of an origin operator.
    pub fn total(&self, origin: &FockOperator) -> FockOperator {
        MagneticTranslation::new(self.lat).periodic_sum(origin)
    }

    /// max over probes of |omega_alpha(L_Psi A) - omega_alpha(L_{Psi^OD} A)|.
    pub fn od_property_residual(&self, state: &State, spec: &FlowSpec, probes: &[FockOperator]) -> Result<f64> {
        let od_total = self.total(&self.od_map(spec)?);
        let dressed = match &spec.alpha {
            Some(u) => state.transformed(&u.adjoint().to_owned())?,
            None => state.clone(),
        };
        let mut worst = 0.0f64;
        for a in probes {
            let lhs = dressed.expect(&spec.liouvillian(self.lat, a)?)?;
            let rhs = dressed.expect(&od_total.commutator(a))?;
            worst = worst.max((lhs - rhs).abs());
        }
        Ok(worst)
    }

    /// max over probes of |L_{i[I(Psi), H]} A - L_{Psi^OD} A|, in Hilbert-Schmidt norm.
    pub fn inversion_residual(&self, spec: &FlowSpec, probes: &[FockOperator]) -> Result<f64> {
        let plain = FlowSpec { alpha: None, ..spec.clone() };
        let inv_total = self.total(&self.inverse_liouvillian(&plain)?);
        let od_total = self.total(&self.od_map(&plain)?);
        let gen = inv_total.commutator(self.hamiltonian.total()).scale(linalg::I).sub(&od_total);
        let mut worst = 0.0f64;
        for a in probes {
            worst = worst.max(gen.commutator(a).frobenius());
        }
        Ok(worst)
    }
}
