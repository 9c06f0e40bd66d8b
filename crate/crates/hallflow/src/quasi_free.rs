//! One-body reductions at lambda = 0.
//!
//! For a quadratic Hamiltonian every map of the many-body theory acts on
//! one-body kernels: dGamma(k) is dressed by dGamma(s), Slater states by
//! their projector P, and expectations of quadratic operators are
//! `omega(dGamma(q)) = tr(q P)` and
//! `omega(dGamma(q) dGamma(r)) - omega(dGamma(q)) omega(dGamma(r)) = tr(q (1 - P) r P)`.

use faer::Mat;

use crate::c64;
use crate::error::{Error, Result};
use crate::filter::FilterKernel;
use crate::hofstadter::OneBodyModel;
use crate::lattice::{Flux, Site, TorusLattice};
use crate::linalg::{self, I, ZERO};

/// Sparse one-body kernel as (row, column, value) triples.
pub type Sparse = Vec<(usize, usize, c64)>;

/// One-body magnetic translation of a kernel: k -> t k t^*, t|y> = e^{i b y_1 gamma_2}|y + gamma>.
pub fn translate_sparse(lat: &TorusLattice, gamma: (usize, usize), k: &Sparse) -> Sparse {
    let image = |m: usize| {
        let y = lat.site(m);
        (lat.index(lat.shift(y, gamma)), linalg::cis(lat.b * (y.x1 * gamma.1) as f64))
    };
    k.iter()
        .map(|&(x, y, v)| {
            let (a, pa) = image(x);
            let (b, pb) = image(y);
            (a, b, pa * v * pb.conj())
        })
        .collect()
}

/// Kernel of (J_2)_0 = -i L_{X_2} h_0 at lambda = 0: the vertical bond current at the origin.
pub fn origin_current_kernel(lat: &TorusLattice, j: usize) -> Sparse {
    let o = lat.index(Site::ORIGIN);
    let mut out = Vec::new();
    for d in [(1usize, 0usize), (0, 1)] {
        let y = lat.index(lat.shift(Site::ORIGIN, d));
        let w = if (j == 1) == (d.0 == 1) { 1.0 } else { 0.0 };
        if w == 0.0 {
            continue;
        }
        // hop a^*_y a_0 with coordinate difference +1, plus its adjoint with -1
        out.push((y, o, -I));
        out.push((o, y, I));
    }
    out
}

/// Dense kernel of -i sum_x x_j [h, .]-weighted hoppings of i[x_j, h] filtered by the inverse kernel:
/// the one-body K_1 = -I(X_1) at lambda = 0, V = 0.
pub fn first_order_generator(model: &OneBodyModel, kernel: &FilterKernel) -> Mat<c64> {
    let lat = &model.lat;
    let n = lat.n_sites();
    // i L_{X_1} dGamma(h) has kernel i (x_1 - y_1) h(x, y), minimal image per bond
    let d = Mat::from_fn(n, n, |x, y| {
        let v = model.h.read(x, y);
        if v == ZERO {
            ZERO
        } else {
            v * I * lat.relative_coordinate(lat.site(y), lat.site(x), 1) as f64
        }
    });
    let u = model.vectors.as_ref();
    let db = linalg::to_basis(u, d.as_ref());
    let e = &model.values;
    let w = Mat::from_fn(n, n, |a, b| db.read(a, b) * (-kernel.inverse_weight(e[a] - e[b])));
    linalg::from_basis(u, w.as_ref())
}

/// P_eps = e^{-i eps k} P e^{i eps k}.
pub fn dressed_projection(p: &Mat<c64>, k: &Mat<c64>, eps: f64) -> Mat<c64> {
    if eps == 0.0 {
        return p.clone();
    }
    let u = linalg::expi_hermitian(k.as_ref(), -eps);
    let t = &u * p;
    &t * u.adjoint()
}

/// Entry access to a one-body projector kernel P(x, y).
pub trait Projection {
    fn entry(&self, x: usize, y: usize) -> c64;
}

impl Projection for Mat<c64> {
    fn entry(&self, x: usize, y: usize) -> c64 {
        self.read(x, y)
    }
}

/// tr(q P) for sparse q.
pub fn expectation<P: Projection + ?Sized>(q: &Sparse, p: &P) -> c64 {
    q.iter().map(|&(x, y, v)| v * p.entry(y, x)).fold(ZERO, |a, b| a + b)
}

/// tr(q (1 - P) r P) for sparse q and r.
pub fn covariance<P: Projection + ?Sized>(q: &Sparse, r: &Sparse, p: &P) -> c64 {
    let mut acc = ZERO;
    for &(a, b, qv) in q {
        for &(c, d, rv) in r {
            let qbc = if b == c { c64::new(1.0, 0.0) } else { ZERO } - p.entry(b, c);
            acc += qv * qbc * rv * p.entry(d, a);
        }
    }
    acc
}

/// P_eps of the Hofstadter torus at rational flux p/q with q | L, kept as
/// q x q blocks over the magnetic Brillouin zone.
///
/// Sites are grouped into cells (x_1, c) with x_2 = q c + a. The kernel h is
/// invariant under ordinary shifts by (1, 0) and (0, q), so with
/// |k, a> = N^{-1/2} sum e^{i (k_1 x_1 + k_2 c)} |x_1, q c + a> every operator
/// used here is block diagonal.
#[derive(Clone, Debug)]
pub struct BlochProjection {
    l: usize,
    q: usize,
    cells2: usize,
    /// (k_1 index, k_2 index) -> q x q block of P_eps.
    blocks: Vec<Mat<c64>>,
}

impl BlochProjection {
    /// Block of i (x_1 - y_1) h at (k_1, k_2): diagonal 2 sin(k_1 - b a).
    fn blocks_at(flux: Flux, k1: f64, k2: f64) -> (Mat<c64>, Mat<c64>) {
        let q = flux.q as usize;
        let b = flux.b();
        let mut h = Mat::<c64>::zeros(q, q);
        let mut d = Mat::<c64>::zeros(q, q);
        for a in 0..q {
            let theta = k1 - b * a as f64;
            h.write(a, a, h.read(a, a) + c64::new(2.0 * theta.cos(), 0.0));
            d.write(a, a, c64::new(2.0 * theta.sin(), 0.0));
            // vertical bond a -> a + 1; leaving the cell picks up e^{i k_2}
            let up = (a + 1) % q;
            let hop = if a + 1 == q { linalg::cis(-k2) } else { c64::new(1.0, 0.0) };
            h.write(up, a, h.read(up, a) + hop);
            h.write(a, up, h.read(a, up) + hop.conj());
        }
        (h, d)
    }

    /// Fermi projector below `mu`, dressed with the first-order generator at strength `eps`.
    pub fn new(l: usize, flux: Flux, mu: f64, kernel: &FilterKernel, eps: f64) -> Result<Self> {
        TorusLattice::with_flux(l, flux)?;
        let q = flux.q as usize;
        if l % q != 0 {
            return Err(Error::KspacePrecondition(format!("q = {q} does not divide L = {l}")));
        }
        let cells2 = l / q;
        let mut blocks = Vec::with_capacity(l * cells2);
        for i1 in 0..l {
            for i2 in 0..cells2 {
                let k1 = 2.0 * std::f64::consts::PI * i1 as f64 / l as f64;
                let k2 = 2.0 * std::f64::consts::PI * i2 as f64 / cells2 as f64;
                let (h, d) = Self::blocks_at(flux, k1, k2);
                let (e, u) = linalg::eigh(h.as_ref());
                if let Some(dist) = e.iter().map(|x| (x - mu).abs()).reduce(f64::min) {
                    if dist <= 1e-8 {
                        return Err(Error::MuInSpectrum { mu, dist });
                    }
                }
                let p = linalg::from_eigen(&e, u.as_ref(), |x| if x < mu { c64::new(1.0, 0.0) } else { ZERO });
                let block = if eps == 0.0 {
                    p
                } else {
                    let db = linalg::to_basis(u.as_ref(), d.as_ref());
                    let w = Mat::from_fn(q, q, |a, b| db.read(a, b) * (-kernel.inverse_weight(e[a] - e[b])));
                    let k = linalg::from_basis(u.as_ref(), w.as_ref());
                    dressed_projection(&p, &k, eps)
                };
                blocks.push(block);
            }
        }
        Ok(BlochProjection { l, q, cells2, blocks })
    }
}

impl Projection for BlochProjection {
    fn entry(&self, x: usize, y: usize) -> c64 {
        let (x1, x2) = (x / self.l, x % self.l);
        let (y1, y2) = (y / self.l, y % self.l);
        let (cx, ax) = (x2 / self.q, x2 % self.q);
        let (cy, ay) = (y2 / self.q, y2 % self.q);
        let d1 = (x1 + self.l - y1) % self.l;
        let d2 = (cx + self.cells2 - cy) % self.cells2;
        let mut acc = ZERO;
        for i1 in 0..self.l {
            for i2 in 0..self.cells2 {
                let phase = 2.0
                    * std::f64::consts::PI
                    * ((i1 * d1) as f64 / self.l as f64 + (i2 * d2) as f64 / self.cells2 as f64);
                acc += linalg::cis(phase) * self.blocks[i1 * self.cells2 + i2].read(ax, ay);
            }
        }
        acc * (1.0 / (self.l * self.cells2) as f64)
    }
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct SegmentStats {
    pub segment: usize,
    pub mean_current: f64,
    pub variance_current: f64,
}

/// Currents j_m = T_{(m,0)} j_0 for m = 1..=segment.
pub fn segment_currents(lat: &TorusLattice, segment: usize) -> Result<Vec<Sparse>> {
    if segment > lat.l {
        return Err(Error::SegmentTooLong { segment, side: lat.l });
    }
    let j0 = origin_current_kernel(lat, 2);
    Ok((1..=segment).map(|m| translate_sparse(lat, (m % lat.l, 0), &j0)).collect())
}

pub fn segment_stats<P: Projection + ?Sized>(lat: &TorusLattice, p: &P, segment: usize) -> Result<SegmentStats> {
    let js = segment_currents(lat, segment)?;
    let total: Sparse = js.concat();
    Ok(SegmentStats {
        segment,
        mean_current: expectation(&total, p).re,
        variance_current: covariance(&total, &total, p).re,
    })
}

/// Connected correlations cov(j_0, j_d) for d = 0..=max_d.
pub fn current_correlations<P: Projection + ?Sized>(lat: &TorusLattice, p: &P, max_d: usize) -> Vec<(usize, f64)> {
    let j0 = origin_current_kernel(lat, 2);
    (0..=max_d.min(lat.l - 1))
        .map(|d| {
            let jd = translate_sparse(lat, (d, 0), &j0);
            (d, covariance(&j0, &jd, p).re)
        })
        .collect()
}
