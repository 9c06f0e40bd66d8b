use faer::{Col, Mat};

use crate::c64;
use crate::error::{Error, Result};
use crate::fock::FockOperator;
use crate::linalg::{self, ZERO};

/// States on the full Fock space of `n_modes` modes.
///
/// `QuasiFree` stores the two-point matrix `gamma[(x, y)] = omega(a^*_x a_y)`.
#[derive(Clone, Debug)]
pub enum State {
    Pure { n_modes: usize, vector: Col<c64> },
    Mixture { n_modes: usize, vectors: Mat<c64>, weights: Vec<f64> },
    QuasiFree { gamma: Mat<c64> },
}

impl State {
    pub fn pure(n_modes: usize, vector: Col<c64>) -> Result<State> {
        if vector.nrows() != 1usize << n_modes {
            return Err(Error::Dimension(format!("vector of length {} on {n_modes} modes", vector.nrows())));
        }
        let norm = linalg::col_norm(&vector);
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::Dimension(format!("state vector has norm {norm}")));
        }
        Ok(State::Pure { n_modes, vector })
    }

    /// Uniform mixture over the columns of `vectors`.
    pub fn uniform_mixture(n_modes: usize, vectors: Mat<c64>) -> State {
        let k = vectors.ncols();
        if k == 1 {
            return State::Pure { n_modes, vector: vectors.col(0).to_owned() };
        }
        State::Mixture { n_modes, vectors, weights: vec![1.0 / k as f64; k] }
    }

    pub fn quasi_free(gamma: Mat<c64>) -> Result<State> {
        if linalg::hermitian_defect(gamma.as_ref()) > 1e-10 {
            return Err(Error::Dimension("two-point matrix is not hermitian".into()));
        }
        let (vals, _) = linalg::eigh(gamma.as_ref());
        if vals.iter().any(|&v| !(-1e-10..=1.0 + 1e-10).contains(&v)) {
            return Err(Error::Dimension("two-point matrix is not between 0 and 1".into()));
        }
        Ok(State::QuasiFree { gamma })
    }

    pub fn vacuum(n_modes: usize) -> State {
        let mut v = Col::zeros(1usize << n_modes);
        v.write(0, linalg::ONE);
        State::Pure { n_modes, vector: v }
    }

    /// Slater determinant of the orthonormal orbitals in the columns of `orbitals`.
    pub fn slater(orbitals: &Mat<c64>) -> State {
        let n_modes = orbitals.nrows();
        let k = orbitals.ncols();
        let mut v = Col::zeros(1usize << n_modes);
        // amplitude of |s> = det of the k x k minor on the occupied rows
        for s in 0usize..(1 << n_modes) {
            if s.count_ones() as usize != k {
                continue;
            }
            let rows: Vec<usize> = (0..n_modes).filter(|i| s >> i & 1 == 1).collect();
            let minor = Mat::from_fn(k, k, |a, b| orbitals.read(rows[a], b));
            v.write(s, determinant(&minor));
        }
        State::Pure { n_modes, vector: v }
    }

    pub fn n_modes(&self) -> usize {
        match self {
            State::Pure { n_modes, .. } | State::Mixture { n_modes, .. } => *n_modes,
            State::QuasiFree { gamma } => gamma.nrows(),
        }
    }

    fn components(&self) -> Result<Vec<(f64, Col<c64>)>> {
        match self {
            State::Pure { vector, .. } => Ok(vec![(1.0, vector.clone())]),
            State::Mixture { vectors, weights, .. } => {
                Ok(weights.iter().enumerate().map(|(i, &w)| (w, vectors.col(i).to_owned())).collect())
            }
            State::QuasiFree { .. } => Err(Error::UnsupportedState),
        }
    }

    /// Expectation value of an operator.
    pub fn expect(&self, a: &FockOperator) -> Result<c64> {
        if let State::QuasiFree { gamma } = self {
            return self.quasi_free_expect(gamma, a);
        }
        let n = self.n_modes();
        let mut acc = ZERO;
        for (w, v) in self.components()? {
            let av = a.apply_full(n, &v);
            acc += linalg::dot(&v, &av) * w;
        }
        Ok(acc)
    }

    /// omega(A^* B).
    pub fn expect_product(&self, a: &FockOperator, b: &FockOperator) -> Result<c64> {
        let n = self.n_modes();
        let mut acc = ZERO;
        for (w, v) in self.components()? {
            let av = a.apply_full(n, &v);
            let bv = b.apply_full(n, &v);
            acc += linalg::dot(&av, &bv) * w;
        }
        Ok(acc)
    }

    fn quasi_free_expect(&self, gamma: &Mat<c64>, a: &FockOperator) -> Result<c64> {
        // materialize the Slater determinant when the two-point matrix is a projector
        let g = gamma.transpose().to_owned();
        let (vals, vecs) = linalg::eigh(g.as_ref());
        if vals.iter().any(|&v| v.abs() > 1e-9 && (v - 1.0).abs() > 1e-9) {
            return Err(Error::UnsupportedState);
        }
        if gamma.nrows() > 14 {
            return Err(Error::Oversize { modes: gamma.nrows(), cap: 14 });
        }
        let occ: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] > 0.5).collect();
        let orbitals = Mat::from_fn(g.nrows(), occ.len(), |i, j| vecs.read(i, occ[j]));
        State::slater(&orbitals).expect(a)
    }

    /// Conjugated state A -> omega(U^* A U), i.e. vectors mapped to U v.
    pub fn transformed(&self, u: &Mat<c64>) -> Result<State> {
        match self {
            State::Pure { n_modes, vector } => Ok(State::Pure { n_modes: *n_modes, vector: u * vector }),
            State::Mixture { n_modes, vectors, weights } => Ok(State::Mixture {
                n_modes: *n_modes,
                vectors: u * vectors,
                weights: weights.clone(),
            }),
            State::QuasiFree { .. } => Err(Error::UnsupportedState),
        }
    }

    /// Two-point matrix omega(a^*_x a_y).
    pub fn two_point(&self, lat_modes: usize) -> Result<Mat<c64>> {
        if let State::QuasiFree { gamma } = self {
            return Ok(gamma.clone());
        }
        let mut g = Mat::zeros(lat_modes, lat_modes);
        for x in 0..lat_modes {
            for y in 0..lat_modes {
                let op = hop(x, y);
                g.write(x, y, self.expect(&op)?);
            }
        }
        Ok(g)
    }

    pub fn norm_defect(&self) -> f64 {
        match self {
            State::Pure { vector, .. } => (linalg::col_norm(vector) - 1.0).abs(),
            State::Mixture { vectors, weights, .. } => {
                let total: f64 = weights.iter().sum();
                let mut d = (total - 1.0).abs();
                for i in 0..vectors.ncols() {
                    let c = vectors.col(i).to_owned();
                    d = d.max((linalg::col_norm(&c) - 1.0).abs());
                }
                d
            }
            State::QuasiFree { gamma } => {
                let (vals, _) = linalg::eigh(gamma.as_ref());
                vals.iter().map(|&v| (-v).max(v - 1.0).max(0.0)).fold(0.0, f64::max)
            }
        }
    }
}

/// a^*_x a_y on the frame {x, y}.
pub(crate) fn hop(x: usize, y: usize) -> FockOperator {
    if x == y {
        let mut m = Mat::zeros(2, 2);
        m.write(1, 1, linalg::ONE);
        return FockOperator::new(vec![x], m).expect("one-mode frame");
    }
    let (lo, hi) = (x.min(y), x.max(y));
    let bit = |s: usize| if s == lo { 0b01 } else { 0b10 };
    let mut m = Mat::zeros(4, 4);
    // a^*_x a_y |y> = |x>; no mode between them inside the frame, no sign
    m.write(bit(x), bit(y), linalg::ONE);
    FockOperator::new(vec![lo, hi], m).expect("two-mode frame")
}

fn determinant(m: &Mat<c64>) -> c64 {
    let n = m.nrows();
    if n == 0 {
        return linalg::ONE;
    }
    let mut a = m.clone();
    let mut det = linalg::ONE;
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a.read(i, col).abs().total_cmp(&a.read(j, col).abs())).unwrap();
        if a.read(pivot, col).abs() == 0.0 {
            return ZERO;
        }
        if pivot != col {
            for k in 0..n {
                let t = a.read(col, k);
                a.write(col, k, a.read(pivot, k));
                a.write(pivot, k, t);
            }
            det = -det;
        }
        let p = a.read(col, col);
        det *= p;
        for i in col + 1..n {
            let f = a.read(i, col) / p;
            for k in col..n {
                let v = a.read(i, k) - f * a.read(col, k);
                a.write(i, k, v);
            }
        }
    }
    det
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;

    #[test]
    fn vacuum_and_number() {
        let s = State::vacuum(3);
        let n = FockOperator::new(vec![1], Mat::from_fn(2, 2, |i, j| if i == 1 && j == 1 { c(1.0, 0.0) } else { ZERO }))
            .unwrap();
        assert_eq!(s.expect(&n).unwrap(), ZERO);
    }

    #[test]
    fn slater_two_point_is_transposed_projector() {
        let orb = Mat::from_fn(3, 1, |i, _| [c(0.6, 0.0), c(0.0, 0.8), ZERO][i]);
        let s = State::slater(&orb);
        let g = s.two_point(3).unwrap();
        let p = &orb * orb.adjoint();
        for x in 0..3 {
            for y in 0..3 {
                assert!((g.read(x, y) - p.read(y, x)).abs() < 1e-14);
            }
        }
    }
}
