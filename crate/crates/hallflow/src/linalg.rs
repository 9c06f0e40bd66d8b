//! Thin helpers over faer for the dense complex kernels used everywhere.

use faer::{Col, Mat, MatRef, Side};

use crate::c64;

pub const ZERO: c64 = c64 { re: 0.0, im: 0.0 };
pub const ONE: c64 = c64 { re: 1.0, im: 0.0 };
pub const I: c64 = c64 { re: 0.0, im: 1.0 };

pub fn c(re: f64, im: f64) -> c64 {
    c64::new(re, im)
}

pub fn norm_sqr(z: c64) -> f64 {
    z.re * z.re + z.im * z.im
}

pub fn cis(theta: f64) -> c64 {
    c64::new(theta.cos(), theta.sin())
}

pub fn scale(m: MatRef<'_, c64>, s: c64) -> Mat<c64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m.read(i, j) * s)
}

pub fn adjoint(m: MatRef<'_, c64>) -> Mat<c64> {
    m.adjoint().to_owned()
}

pub fn commutator(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> Mat<c64> {
    let ab = a * b;
    let ba = b * a;
    ab - ba
}

pub fn anticommutator(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> Mat<c64> {
    let ab = a * b;
    let ba = b * a;
    ab + ba
}

pub fn trace(m: MatRef<'_, c64>) -> c64 {
    let mut t = ZERO;
    for i in 0..m.nrows().min(m.ncols()) {
        t += m.read(i, i);
    }
    t
}

pub fn max_abs(m: MatRef<'_, c64>) -> f64 {
    let mut best = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            best = best.max(m.read(i, j).abs());
        }
    }
    best
}

pub fn frobenius(m: MatRef<'_, c64>) -> f64 {
    m.norm_l2()
}

/// Largest singular value.
pub fn op_norm(m: MatRef<'_, c64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    if max_abs(m) == 0.0 {
        return 0.0;
    }
    m.singular_values().into_iter().fold(0.0, f64::max)
}

pub fn hermitian_defect(m: MatRef<'_, c64>) -> f64 {
    let mut best = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            best = best.max((m.read(i, j) - m.read(j, i).conj()).abs());
        }
    }
    best
}

/// Eigen-decomposition of a Hermitian matrix with ascending eigenvalues.
pub fn eigh(m: MatRef<'_, c64>) -> (Vec<f64>, Mat<c64>) {
    let n = m.nrows();
    let evd = m.selfadjoint_eigendecomposition(Side::Lower);
    let s = evd.s().column_vector();
    let mut vals: Vec<(f64, usize)> = (0..n).map(|i| (s.read(i).re, i)).collect();
    vals.sort_by(|a, b| a.0.total_cmp(&b.0));
    let u = evd.u();
    let vecs = Mat::from_fn(n, n, |i, j| u.read(i, vals[j].1));
    (vals.into_iter().map(|v| v.0).collect(), vecs)
}

/// U f(D) U^* for real diagonal data.
pub fn from_eigen(vals: &[f64], vecs: MatRef<'_, c64>, f: impl Fn(f64) -> c64) -> Mat<c64> {
    let n = vals.len();
    let scaled = Mat::from_fn(n, n, |i, j| vecs.read(i, j) * f(vals[j]));
    &scaled * vecs.adjoint()
}

/// exp(i t H) for Hermitian H.
pub fn expi_hermitian(h: MatRef<'_, c64>, t: f64) -> Mat<c64> {
    let (vals, vecs) = eigh(h);
    from_eigen(&vals, vecs.as_ref(), |e| cis(t * e))
}

/// Change of basis U^* A U.
pub fn to_basis(u: MatRef<'_, c64>, a: MatRef<'_, c64>) -> Mat<c64> {
    let t = a * u;
    u.adjoint() * &t
}

/// Inverse change of basis U A U^*.
pub fn from_basis(u: MatRef<'_, c64>, a: MatRef<'_, c64>) -> Mat<c64> {
    let t = u * a;
    &t * u.adjoint()
}

pub fn dot(a: &Col<c64>, b: &Col<c64>) -> c64 {
    let mut s = ZERO;
    for i in 0..a.nrows() {
        s += a.read(i).conj() * b.read(i);
    }
    s
}

pub fn col_norm(a: &Col<c64>) -> f64 {
    dot(a, a).re.max(0.0).sqrt()
}

pub fn matvec(m: MatRef<'_, c64>, v: &Col<c64>) -> Col<c64> {
    m * v
}
