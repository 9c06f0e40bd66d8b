//! Fermionic operators in the Jordan-Wigner representation.
//!
//! A [`FockOperator`] is stored on a *frame*: a sorted list of mode indices
//! together with a dense matrix on the 2^|frame| dimensional Fock space of
//! those modes. Local basis state `s` has bit `i` set when mode `frame[i]` is
//! occupied, and creation operators carry the sign string over lower frame
//! modes. Operators on different frames are combined by embedding both into
//! the union frame, which is a *-homomorphism for even and odd operators alike.

use std::collections::BTreeSet;

use faer::{Col, Mat};
use rand::Rng;

use crate::c64;
use crate::error::{Error, Result};
use crate::lattice::{Site, TorusLattice};
use crate::linalg::{self, ONE, ZERO};

#[derive(Clone, Debug)]
pub struct FockOperator {
    modes: Vec<usize>,
    matrix: Mat<c64>,
    center: Option<Site>,
}

fn jw_sign(state: usize, pos: usize) -> f64 {
    if (state & ((1usize << pos) - 1)).count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Sign of reordering a state of `frame` so that the modes at positions
/// `inner` come first (each keeping its relative order).
fn split_sign(state: usize, inner_mask: usize) -> f64 {
    let mut outer_seen = 0u32;
    let mut inversions = 0u32;
    let mut s = state;
    let mut pos = 0;
    while s != 0 {
        if s & 1 == 1 {
            if inner_mask >> pos & 1 == 1 {
                inversions += outer_seen;
            } else {
                outer_seen += 1;
            }
        }
        s >>= 1;
        pos += 1;
    }
    if inversions % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

fn union(a: &[usize], b: &[usize]) -> Vec<usize> {
    let set: BTreeSet<usize> = a.iter().chain(b.iter()).copied().collect();
    set.into_iter().collect()
}

impl FockOperator {
    pub fn new(modes: Vec<usize>, matrix: Mat<c64>) -> Result<Self> {
        let dim = 1usize << modes.len();
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::Dimension(format!(
                "frame of {} modes needs a {dim}x{dim} matrix, got {}x{}",
                modes.len(),
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if modes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Dimension("frame modes must be strictly increasing".into()));
        }
        Ok(FockOperator { modes, matrix, center: None })
    }

    pub(crate) fn from_parts(modes: Vec<usize>, matrix: Mat<c64>, center: Option<Site>) -> Self {
        debug_assert_eq!(matrix.nrows(), 1usize << modes.len());
        FockOperator { modes, matrix, center }
    }

    pub fn identity() -> Self {
        FockOperator { modes: Vec::new(), matrix: Mat::from_fn(1, 1, |_, _| ONE), center: None }
    }

    pub fn scalar(z: c64) -> Self {
        FockOperator { modes: Vec::new(), matrix: Mat::from_fn(1, 1, |_, _| z), center: None }
    }

    pub fn zero() -> Self {
        Self::scalar(ZERO)
    }

    pub fn identity_on(modes: &[usize]) -> Self {
        let dim = 1usize << modes.len();
        FockOperator { modes: modes.to_vec(), matrix: Mat::identity(dim, dim), center: None }
    }

    /// a^*_x on the one-mode frame {x}.
    pub fn creation(lat: &TorusLattice, x: Site) -> Result<Self> {
        let s = lat.checked_site(x.x1, x.x2)?;
        let mut m = Mat::zeros(2, 2);
        m.write(1, 0, ONE);
        Ok(FockOperator { modes: vec![lat.index(s)], matrix: m, center: Some(s) })
    }

    pub fn annihilation(lat: &TorusLattice, x: Site) -> Result<Self> {
        Ok(Self::creation(lat, x)?.adjoint())
    }

    pub fn number(lat: &TorusLattice, x: Site) -> Result<Self> {
        let s = lat.checked_site(x.x1, x.x2)?;
        let mut m = Mat::zeros(2, 2);
        m.write(1, 1, ONE);
        Ok(FockOperator { modes: vec![lat.index(s)], matrix: m, center: Some(s) })
    }

    /// Sum of a^*_x M_{xy} a_y over the given modes (one-body operator d Gamma(M)).
    pub fn quadratic(modes: &[usize], m: &Mat<c64>) -> Self {
        let n = modes.len();
        let dim = 1usize << n;
        let mut out = Mat::zeros(dim, dim);
        for s in 0..dim {
            for y in 0..n {
                if s >> y & 1 == 0 {
                    continue;
                }
                let s1 = s ^ (1 << y);
                let sy = jw_sign(s, y);
                for x in 0..n {
                    let coeff = m.read(x, y);
                    if coeff == ZERO || s1 >> x & 1 == 1 {
                        continue;
                    }
                    let t = s1 | (1 << x);
                    let v = out.read(t, s) + coeff * (sy * jw_sign(s1, x));
                    out.write(t, s, v);
                }
            }
        }
        FockOperator { modes: modes.to_vec(), matrix: out, center: None }
    }

    pub fn modes(&self) -> &[usize] {
        &self.modes
    }

    pub fn support(&self) -> &[usize] {
        &self.modes
    }

    pub fn matrix(&self) -> &Mat<c64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> Mat<c64> {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn center(&self) -> Option<Site> {
        self.center
    }

    pub fn with_center(mut self, c: Site) -> Self {
        self.center = Some(c);
        self
    }

    pub fn set_center(&mut self, c: Option<Site>) {
        self.center = c;
    }

    /// Representation on a larger frame.
    pub fn embed(&self, frame: &[usize]) -> Result<FockOperator> {
        if frame == self.modes.as_slice() {
            return Ok(self.clone());
        }
        let mut pos = Vec::with_capacity(self.modes.len());
        for &m in &self.modes {
            match frame.binary_search(&m) {
                Ok(p) => pos.push(p),
                Err(_) => return Err(Error::ModeOutOfFrame { mode: m }),
            }
        }
        let inner_mask: usize = pos.iter().map(|&p| 1usize << p).sum();
        let outer: Vec<usize> = (0..frame.len()).filter(|p| inner_mask >> p & 1 == 0).collect();
        let small = 1usize << self.modes.len();
        let spread = |local: usize| -> usize {
            let mut s = 0;
            for (i, &p) in pos.iter().enumerate() {
                if local >> i & 1 == 1 {
                    s |= 1 << p;
                }
            }
            s
        };
        let spread_outer = |rest: usize| -> usize {
            let mut s = 0;
            for (i, &p) in outer.iter().enumerate() {
                if rest >> i & 1 == 1 {
                    s |= 1 << p;
                }
            }
            s
        };
        let inner_states: Vec<usize> = (0..small).map(spread).collect();
        let dim = 1usize << frame.len();
        let mut out = Mat::zeros(dim, dim);
        for rest in 0..(1usize << outer.len()) {
            let r = spread_outer(rest);
            let signs: Vec<f64> = inner_states.iter().map(|&s| split_sign(s | r, inner_mask)).collect();
            for b in 0..small {
                for a in 0..small {
                    let v = self.matrix.read(a, b);
                    if v == ZERO {
                        continue;
                    }
                    out.write(inner_states[a] | r, inner_states[b] | r, v * (signs[a] * signs[b]));
                }
            }
        }
        Ok(FockOperator { modes: frame.to_vec(), matrix: out, center: self.center })
    }

    /// Full Fock-space matrix on `n_modes` modes.
    pub fn to_full(&self, n_modes: usize) -> Result<FockOperator> {
        let frame: Vec<usize> = (0..n_modes).collect();
        self.embed(&frame)
    }

    /// Restriction to a sub-frame, valid when the operator lies in the
    /// sub-frame algebra (checked by the caller if needed).
    pub fn restrict(&self, frame: &[usize]) -> Result<FockOperator> {
        let mut pos = Vec::with_capacity(frame.len());
        for &m in frame {
            match self.modes.binary_search(&m) {
                Ok(p) => pos.push(p),
                Err(_) => return Err(Error::ModeOutOfFrame { mode: m }),
            }
        }
        let spread = |local: usize| -> usize {
            let mut s = 0;
            for (i, &p) in pos.iter().enumerate() {
                if local >> i & 1 == 1 {
                    s |= 1 << p;
                }
            }
            s
        };
        let dim = 1usize << frame.len();
        let states: Vec<usize> = (0..dim).map(spread).collect();
        let m = Mat::from_fn(dim, dim, |a, b| self.matrix.read(states[a], states[b]));
        Ok(FockOperator { modes: frame.to_vec(), matrix: m, center: self.center })
    }

    fn aligned(&self, other: &FockOperator) -> (FockOperator, FockOperator) {
        if self.modes == other.modes {
            return (self.clone(), other.clone());
        }
        let frame = union(&self.modes, &other.modes);
        (self.embed(&frame).expect("union frame"), other.embed(&frame).expect("union frame"))
    }

    fn with_matrix(&self, matrix: Mat<c64>) -> FockOperator {
        FockOperator { modes: self.modes.clone(), matrix, center: self.center }
    }

    pub fn mul(&self, other: &FockOperator) -> FockOperator {
        if self.modes == other.modes {
            return self.with_matrix(&self.matrix * &other.matrix);
        }
        let (a, b) = self.aligned(other);
        a.with_matrix(&a.matrix * &b.matrix)
    }

    pub fn add(&self, other: &FockOperator) -> FockOperator {
        if self.modes == other.modes {
            return self.with_matrix(&self.matrix + &other.matrix);
        }
        let (a, b) = self.aligned(other);
        a.with_matrix(&a.matrix + &b.matrix)
    }

    pub fn sub(&self, other: &FockOperator) -> FockOperator {
        if self.modes == other.modes {
            return self.with_matrix(&self.matrix - &other.matrix);
        }
        let (a, b) = self.aligned(other);
        a.with_matrix(&a.matrix - &b.matrix)
    }

    pub fn scale(&self, z: c64) -> FockOperator {
        self.with_matrix(linalg::scale(self.matrix.as_ref(), z))
    }

    pub fn scale_real(&self, x: f64) -> FockOperator {
        self.scale(c64::new(x, 0.0))
    }

    pub fn add_assign_scaled(&mut self, other: &FockOperator, z: c64) {
        if self.modes != other.modes {
            let frame = union(&self.modes, &other.modes);
            *self = self.embed(&frame).expect("union frame");
            let o = other.embed(&frame).expect("union frame");
            self.matrix += linalg::scale(o.matrix.as_ref(), z);
        } else {
            self.matrix += linalg::scale(other.matrix.as_ref(), z);
        }
    }

    pub fn adjoint(&self) -> FockOperator {
        self.with_matrix(linalg::adjoint(self.matrix.as_ref()))
    }

    pub fn commutator(&self, other: &FockOperator) -> FockOperator {
        let (a, b) = self.aligned(other);
        a.with_matrix(linalg::commutator(a.matrix.as_ref(), b.matrix.as_ref()))
    }

    pub fn anticommutator(&self, other: &FockOperator) -> FockOperator {
        let (a, b) = self.aligned(other);
        a.with_matrix(linalg::anticommutator(a.matrix.as_ref(), b.matrix.as_ref()))
    }

    /// Operator norm (largest singular value).
    pub fn norm(&self) -> f64 {
        linalg::op_norm(self.matrix.as_ref())
    }

    /// Hilbert-Schmidt norm; an upper bound for `norm` that avoids an SVD.
    pub fn frobenius(&self) -> f64 {
        linalg::frobenius(self.matrix.as_ref())
    }

    pub fn max_abs(&self) -> f64 {
        linalg::max_abs(self.matrix.as_ref())
    }

    /// Normalized trace, the tracial state.
    pub fn tracial_expectation(&self) -> c64 {
        linalg::trace(self.matrix.as_ref()) * (1.0 / self.dim() as f64)
    }

    pub fn hermitian_defect(&self) -> f64 {
        linalg::hermitian_defect(self.matrix.as_ref())
    }

    pub fn is_self_adjoint(&self, tol: f64) -> bool {
        self.hermitian_defect() <= tol
    }

    /// Frobenius norm of [A, N].
    pub fn gauge_defect(&self) -> f64 {
        let mut acc = 0.0f64;
        for t in 0..self.dim() {
            let nt = t.count_ones() as f64;
            for s in 0..self.dim() {
                let d = nt - s.count_ones() as f64;
                if d != 0.0 {
                    acc += linalg::norm_sqr(self.matrix.read(s, t)) * d * d;
                }
            }
        }
        acc.sqrt()
    }

    pub fn is_gauge_invariant(&self, tol: f64) -> bool {
        self.gauge_defect() <= tol
    }

    /// Largest entry connecting states of different fermion parity.
    pub fn odd_part(&self) -> f64 {
        let mut best = 0.0f64;
        for t in 0..self.dim() {
            for s in 0..self.dim() {
                if (s.count_ones() + t.count_ones()) % 2 == 1 {
                    best = best.max(self.matrix.read(s, t).abs());
                }
            }
        }
        best
    }

    fn require_gauge_invariant(&self) -> Result<()> {
        let d = self.gauge_defect();
        let scale = self.matrix.norm_l2().max(1.0);
        if d > 1e-9 * scale {
            return Err(Error::NotGaugeInvariant(d));
        }
        Ok(())
    }

    /// Tracial conditional expectation onto the modes in `region`.
    pub fn conditional_expectation(&self, region: &[usize]) -> Result<FockOperator> {
        self.require_gauge_invariant()?;
        Ok(self.conditional_expectation_even(region))
    }

    /// Conditional expectation for operators already known to be even.
    pub(crate) fn conditional_expectation_even(&self, region: &[usize]) -> FockOperator {
        let keep: BTreeSet<usize> = region.iter().copied().collect();
        let mut out = self.clone();
        let drop: Vec<usize> = self.modes.iter().copied().filter(|m| !keep.contains(m)).collect();
        for m in drop.into_iter().rev() {
            out = out.trace_out(m);
        }
        out
    }

    /// Average over conjugation by {1, (-1)^{n_j}, c_j, d_j}; restricted to the
    /// frame without mode j. Exact for even operators.
    fn trace_out(&self, mode: usize) -> FockOperator {
        let i = self.modes.binary_search(&mode).expect("mode in frame");
        let low = (1usize << i) - 1;
        let insert = |s: usize, bit: usize| -> usize { (s & low) | (bit << i) | ((s & !low) << 1) };
        let half = self.dim() / 2;
        let mut m = Mat::zeros(half, half);
        for b in 0..half {
            let b0 = insert(b, 0);
            let b1 = insert(b, 1);
            for a in 0..half {
                let a0 = insert(a, 0);
                let a1 = insert(a, 1);
                let sign = jw_sign(a0, i) * jw_sign(b0, i);
                let v = (self.matrix.read(a0, b0) + self.matrix.read(a1, b1) * sign) * 0.5;
                m.write(a, b, v);
            }
        }
        let mut modes = self.modes.clone();
        modes.remove(i);
        FockOperator { modes, matrix: m, center: self.center }
    }

    /// Decay norm |A| + max_k |A - E_{Lambda_k} A| (1 + k)^nu with boxes of
    /// radius k = 0..=L/2 around `center`.
    pub fn decay_norm(&self, lat: &TorusLattice, nu: u32, center: Site) -> Result<f64> {
        self.require_gauge_invariant()?;
        let base = self.norm();
        let mut tail = 0.0f64;
        for k in 0..=lat.l / 2 {
            let region = lat.box_modes(center, k);
            let e = self.conditional_expectation_even(&region);
            let diff = self.sub(&e).norm();
            tail = tail.max(diff * ((1 + k) as f64).powi(nu as i32));
        }
        Ok(base + tail)
    }

    /// Random operator on `modes` that conserves particle number.
    pub fn random_gauge_invariant<R: Rng>(modes: &[usize], rng: &mut R, hermitian: bool) -> Self {
        let dim = 1usize << modes.len();
        let mut m = Mat::from_fn(dim, dim, |a, b| {
            if a.count_ones() == b.count_ones() {
                c64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            } else {
                ZERO
            }
        });
        if hermitian {
            let adj = linalg::adjoint(m.as_ref());
            m = linalg::scale((&m + &adj).as_ref(), c64::new(0.5, 0.0));
        }
        FockOperator { modes: modes.to_vec(), matrix: m, center: None }
    }

    /// Random even operator that need not conserve particle number.
    pub fn random_even<R: Rng>(modes: &[usize], rng: &mut R) -> Self {
        let dim = 1usize << modes.len();
        let m = Mat::from_fn(dim, dim, |a, b| {
            if (a.count_ones() + b.count_ones()) % 2 == 0 {
                c64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            } else {
                ZERO
            }
        });
        FockOperator { modes: modes.to_vec(), matrix: m, center: None }
    }

    /// Applies the operator, embedded into the full Fock space of `n_modes`
    /// modes, to a state vector.
    pub fn apply_full(&self, n_modes: usize, v: &Col<c64>) -> Col<c64> {
        let full = 1usize << n_modes;
        if self.modes.len() == n_modes {
            return &self.matrix * v;
        }
        let inner_mask: usize = self.modes.iter().map(|&m| 1usize << m).sum();
        let small = self.dim();
        let spread = |local: usize| -> usize {
            let mut s = 0;
            for (i, &m) in self.modes.iter().enumerate() {
                if local >> i & 1 == 1 {
                    s |= 1 << m;
                }
            }
            s
        };
        let inner_states: Vec<usize> = (0..small).map(spread).collect();
        let mut out = Col::zeros(full);
        let outer_mask = (full - 1) & !inner_mask;
        let mut r = 0usize;
        loop {
            let signs: Vec<f64> = inner_states.iter().map(|&s| split_sign(s | r, inner_mask)).collect();
            for b in 0..small {
                let x = v.read(inner_states[b] | r);
                if x == ZERO {
                    continue;
                }
                let xb = x * signs[b];
                for a in 0..small {
                    let m = self.matrix.read(a, b);
                    if m != ZERO {
                        let idx = inner_states[a] | r;
                        out.write(idx, out.read(idx) + m * xb * signs[a]);
                    }
                }
            }
            if r == outer_mask {
                break;
            }
            r = (r.wrapping_sub(outer_mask)) & outer_mask;
        }
        out
    }

    /// Position-weighted commutator sum_{x in frame} x_j [n_x, A], with x_j the
    /// minimal-image coordinate relative to `center`.
    pub fn position_commutator_about(&self, lat: &TorusLattice, j: usize, center: Site) -> FockOperator {
        let weights: Vec<f64> = self
            .modes
            .iter()
            .map(|&m| lat.relative_coordinate(center, lat.site(m), j) as f64)
            .collect();
        self.diagonal_commutator(&weights)
    }

    /// [sum_x w_x n_x, A] for frame-local weights.
    pub fn diagonal_commutator(&self, weights: &[f64]) -> FockOperator {
        let dim = self.dim();
        let occ: Vec<f64> = (0..dim)
            .map(|s| weights.iter().enumerate().filter(|(i, _)| s >> i & 1 == 1).map(|(_, w)| w).sum())
            .collect();
        let m = Mat::from_fn(dim, dim, |a, b| self.matrix.read(a, b) * (occ[a] - occ[b]));
        self.with_matrix(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lat() -> TorusLattice {
        TorusLattice::new(2, 0.0, true).unwrap()
    }

    fn close(a: &FockOperator, b: &FockOperator) -> f64 {
        a.sub(b).max_abs()
    }

    #[test]
    fn car_relations() {
        let lat = lat();
        let sites: Vec<Site> = (0..4).map(|m| lat.site(m)).collect();
        for &x in &sites {
            let a = FockOperator::annihilation(&lat, x).unwrap();
            let ad = FockOperator::creation(&lat, x).unwrap();
            assert!(close(&a.anticommutator(&ad), &FockOperator::identity_on(a.modes())) < 1e-14);
            assert!(ad.mul(&ad).max_abs() < 1e-14);
            for &y in &sites {
                if x == y {
                    continue;
                }
                let b = FockOperator::annihilation(&lat, y).unwrap();
                let bd = FockOperator::creation(&lat, y).unwrap();
                assert!(a.anticommutator(&b).max_abs() < 1e-14);
                assert!(a.anticommutator(&bd).max_abs() < 1e-14);
            }
        }
    }

    #[test]
    fn embedding_matches_hand_sign() {
        // a^*_0 a_2 on 3 modes maps |{1,2}> to -|{0,1}>
        let frame = [0usize, 2];
        let mut m = Mat::zeros(4, 4);
        m.write(0b01, 0b10, ONE);
        let op = FockOperator::new(frame.to_vec(), m).unwrap();
        let full = op.embed(&[0, 1, 2]).unwrap();
        assert_eq!(full.matrix().read(0b011, 0b110), c64::new(-1.0, 0.0));
    }

    #[test]
    fn tracial_values() {
        let lat = lat();
        let n = FockOperator::number(&lat, Site::new(0, 0)).unwrap();
        assert!((n.tracial_expectation().re - 0.5).abs() < 1e-15);
        let hop = FockOperator::creation(&lat, Site::new(0, 0))
            .unwrap()
            .mul(&FockOperator::annihilation(&lat, Site::new(1, 1)).unwrap());
        assert!(hop.tracial_expectation().abs() < 1e-15);
    }

    #[test]
    fn conditional_expectation_examples() {
        let lat = lat();
        let x = Site::new(0, 0);
        let y = Site::new(1, 0);
        let hop = FockOperator::creation(&lat, x)
            .unwrap()
            .mul(&FockOperator::annihilation(&lat, y).unwrap());
        let e = hop.conditional_expectation(&[lat.index(x)]).unwrap();
        assert!(e.max_abs() < 1e-15);
        let kept = hop.conditional_expectation(&[lat.index(x), lat.index(y)]).unwrap();
        assert!(close(&kept, &hop) < 1e-15);
        let n = FockOperator::number(&lat, y).unwrap();
        let e = n.conditional_expectation(&[]).unwrap();
        assert!((e.matrix().read(0, 0).re - 0.5).abs() < 1e-15);
        let c = FockOperator::creation(&lat, x).unwrap();
        assert!(c.conditional_expectation(&[0]).is_err());
    }

    #[test]
    fn conditional_expectation_defining_property() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let frame = [0usize, 1, 2, 3];
        for _ in 0..10 {
            let a = FockOperator::random_gauge_invariant(&frame, &mut rng, false);
            let region = [0usize, 2];
            let e = a.conditional_expectation(&region).unwrap();
            assert_eq!(e.modes(), &region);
            let b = FockOperator::random_even(&region, &mut rng);
            let lhs = a.mul(&b).tracial_expectation();
            let rhs = e.mul(&b).tracial_expectation();
            assert!((lhs - rhs).abs() < 1e-12);
            assert!(e.norm() <= a.norm() + 1e-12);
        }
    }

    #[test]
    fn decay_norm_local_operator() {
        let lat = TorusLattice::new(3, 0.0, true).unwrap();
        let c = Site::new(1, 1);
        let n = FockOperator::number(&lat, c).unwrap();
        assert!((n.decay_norm(&lat, 3, c).unwrap() - 1.0).abs() < 1e-12);
        let id = FockOperator::identity();
        assert!((id.decay_norm(&lat, 2, c).unwrap() - 1.0).abs() < 1e-12);
    }
}
