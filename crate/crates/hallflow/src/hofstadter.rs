//! The weakly interacting Hofstadter model on a magnetic torus.

use std::f64::consts::PI;

use faer::{Col, Mat};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::c64;
use crate::error::{Error, Result};
use crate::fock::FockOperator;
use crate::interactions::Interaction;
use crate::lattice::{Flux, Site, TorusLattice};
use crate::linalg::{self, ONE, ZERO};
use crate::state::State;

/// Largest number of modes for exact many-body work.
pub const MAX_MANY_BODY_MODES: usize = 12;

/// One-body kernel: 1 on vertical bonds, exp(i b x_2) on the horizontal bond
/// from (x_1, x_2) to (x_1 + 1, x_2). Small tori accumulate repeated bonds.
pub fn one_body_hamiltonian(lat: &TorusLattice) -> Result<Mat<c64>> {
    TorusLattice::new(lat.l, lat.b, lat.magnetic_pbc)?;
    let n = lat.n_sites();
    let mut h = Mat::<c64>::zeros(n, n);
    for m in 0..n {
        let y = lat.site(m);
        let right = lat.index(lat.shift(y, (1, 0)));
        let up = lat.index(lat.shift(y, (0, 1)));
        let ph = linalg::cis(lat.b * y.x2 as f64);
        h.write(right, m, h.read(right, m) + ph);
        h.write(m, right, h.read(m, right) + ph.conj());
        h.write(up, m, h.read(up, m) + ONE);
        h.write(m, up, h.read(m, up) + ONE);
    }
    Ok(h)
}

#[derive(Clone, Debug)]
pub struct OneBodyModel {
    pub lat: TorusLattice,
    pub mu: f64,
    pub flux: Option<Flux>,
    pub h: Mat<c64>,
    pub values: Vec<f64>,
    pub vectors: Mat<c64>,
}

impl OneBodyModel {
    pub fn new(lat: &TorusLattice, mu: f64) -> Result<Self> {
        let h = one_body_hamiltonian(lat)?;
        let (values, vectors) = linalg::eigh(h.as_ref());
        Ok(OneBodyModel { lat: lat.clone(), mu, flux: None, h, values, vectors })
    }

    pub fn with_flux(l: usize, flux: Flux, mu: f64) -> Result<Self> {
        let lat = TorusLattice::with_flux(l, flux)?;
        let mut m = Self::new(&lat, mu)?;
        m.flux = Some(flux);
        Ok(m)
    }

    /// dist(mu, spectrum).
    pub fn gap(&self) -> f64 {
        self.values.iter().map(|e| (e - self.mu).abs()).fold(f64::INFINITY, f64::min)
    }

    pub fn filling(&self) -> usize {
        self.values.iter().filter(|&&e| e < self.mu).count()
    }

    /// Eigenvectors below mu.
    pub fn occupied_orbitals(&self) -> Mat<c64> {
        let k = self.filling();
        Mat::from_fn(self.h.nrows(), k, |i, j| self.vectors.read(i, j))
    }

    /// Spectral projector onto eigenvalues below mu.
    pub fn fermi_projection(&self) -> Result<Mat<c64>> {
        let dist = self.gap();
        if dist <= 1e-8 {
            return Err(Error::MuInSpectrum { mu: self.mu, dist });
        }
        let mu = self.mu;
        Ok(linalg::from_eigen(&self.values, self.vectors.as_ref(), |e| if e < mu { ONE } else { ZERO }))
    }

    /// Gaps of the one-body spectrum wider than `min_width`, as (low, high).
    pub fn spectral_gaps(&self, min_width: f64) -> Vec<(f64, f64)> {
        self.values
            .windows(2)
            .filter(|w| w[1] - w[0] > min_width)
            .map(|w| (w[0], w[1]))
            .collect()
    }

    /// The many-body ground state at lambda = 0.
    pub fn quasi_free_state(&self) -> Result<State> {
        let p = self.fermi_projection()?;
        State::quasi_free(p.transpose().to_owned())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ChernMethod {
    /// (1/L^2) Tr(i P [[x_1, P], [x_2, P]]) with minimal-image position kernels.
    DoubleCommutator,
    /// -(i/L^2) Tr(P [k_1, k_2]) with k_j the off-diagonal parts of i[x_j, h].
    OffDiagonal,
    /// Lattice field strength on the magnetic Brillouin zone, divided by 2 pi.
    Kspace,
}

/// Minimal-image difference kernel (x - y)_j.
fn position_kernel(lat: &TorusLattice, j: usize) -> Mat<f64> {
    let n = lat.n_sites();
    Mat::from_fn(n, n, |x, y| lat.relative_coordinate(lat.site(y), lat.site(x), j) as f64)
}

fn hadamard(k: &Mat<f64>, a: &Mat<c64>) -> Mat<c64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a.read(i, j) * k.read(i, j))
}

pub fn double_commutator_chern(lat: &TorusLattice, p: &Mat<c64>) -> f64 {
    let c1 = hadamard(&position_kernel(lat, 1), p);
    let c2 = hadamard(&position_kernel(lat, 2), p);
    let comm = linalg::commutator(c1.as_ref(), c2.as_ref());
    let t = linalg::trace((p * &comm).as_ref()) * linalg::I;
    t.re / lat.n_sites() as f64
}

/// One-body off-diagonal parts k_j = sum_{E_a != E_b} i/(E_a - E_b) (i[x_j, h])_{ab}.
pub fn one_body_od(model: &OneBodyModel, j: usize) -> Mat<c64> {
    let d = hadamard(&position_kernel(&model.lat, j), &model.h);
    let d = linalg::scale(d.as_ref(), linalg::I);
    let u = &model.vectors;
    let e = &model.values;
    let db = linalg::to_basis(u.as_ref(), d.as_ref());
    let w = Mat::from_fn(db.nrows(), db.ncols(), |a, b| {
        let delta = e[a] - e[b];
        if delta.abs() > 1e-12 {
            db.read(a, b) * c64::new(0.0, 1.0 / delta)
        } else {
            ZERO
        }
    });
    linalg::from_basis(u.as_ref(), w.as_ref())
}

pub fn off_diagonal_chern(model: &OneBodyModel) -> Result<f64> {
    let p = model.fermi_projection()?;
    let k1 = one_body_od(model, 1);
    let k2 = one_body_od(model, 2);
    let comm = linalg::commutator(k1.as_ref(), k2.as_ref());
    let t = linalg::trace((&p * &comm).as_ref()) * c64::new(0.0, -1.0);
    Ok(t.re / model.lat.n_sites() as f64)
}

#[derive(Clone, Debug, Serialize)]
pub struct KspaceChern {
    pub chern: i64,
    pub raw: f64,
    pub grid: usize,
}

/// Bloch Hamiltonian of the q-site magnetic cell (x_2 = 0..q) at (k_1, k_2).
pub fn bloch_hamiltonian(flux: Flux, k1: f64, k2: f64) -> Mat<c64> {
    let q = flux.q as usize;
    let b = flux.b();
    let mut h = Mat::<c64>::zeros(q, q);
    for a in 0..q {
        h.write(a, a, h.read(a, a) + c64::new(2.0 * (k1 - b * a as f64).cos(), 0.0));
        let next = (a + 1) % q;
        let hop = if a + 1 == q { linalg::cis(k2) } else { ONE };
        h.write(next, a, h.read(next, a) + hop);
        h.write(a, next, h.read(a, next) + hop.conj());
    }
    h
}

/// Chern number of the lowest `bands` bands by plaquette Berry phases, with
/// the orientation fixed so that sigma = C / (2 pi) has the sign of the
/// position-space formulas. The grid is refined until the integer repeats.
pub fn kspace_chern(flux: Flux, bands: usize) -> Result<KspaceChern> {
    let q = flux.q as usize;
    if bands == 0 || bands >= q {
        return Err(Error::KspacePrecondition(format!("{bands} filled bands out of {q}")));
    }
    let mut last: Option<i64> = None;
    let mut grid = 8;
    loop {
        let raw = fhs_sum(flux, bands, grid);
        let c = raw.round() as i64;
        if (raw - c as f64).abs() < 1e-6 && last == Some(c) {
            return Ok(KspaceChern { chern: c, raw, grid });
        }
        last = Some(c);
        grid *= 2;
        if grid > 512 {
            return Err(Error::KspacePrecondition(format!("no stable integer, last value {raw}")));
        }
    }
}

fn fhs_sum(flux: Flux, bands: usize, n: usize) -> f64 {
    let q = flux.q as usize;
    let step = 2.0 * PI / n as f64;
    let frames: Vec<Vec<Mat<c64>>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let h = bloch_hamiltonian(flux, i as f64 * step, j as f64 * step);
                    let (_, v) = linalg::eigh(h.as_ref());
                    Mat::from_fn(q, bands, |a, b| v.read(a, b))
                })
                .collect()
        })
        .collect();
    let link = |a: &Mat<c64>, b: &Mat<c64>| -> c64 {
        let m = a.adjoint() * b;
        let d = det(&m);
        d * (1.0 / d.abs())
    };
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            let a = &frames[i][j];
            let b = &frames[(i + 1) % n][j];
            let c = &frames[(i + 1) % n][(j + 1) % n];
            let d = &frames[i][(j + 1) % n];
            let w = link(a, b) * link(b, c) * link(c, d) * link(d, a);
            total += w.im.atan2(w.re);
        }
    }
    -total / (2.0 * PI)
}

fn det(m: &Mat<c64>) -> c64 {
    let n = m.nrows();
    let mut a = m.clone();
    let mut d = ONE;
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a.read(i, c).abs().total_cmp(&a.read(j, c).abs())).unwrap();
        if p != c {
            for k in 0..n {
                let t = a.read(c, k);
                a.write(c, k, a.read(p, k));
                a.write(p, k, t);
            }
            d = -d;
        }
        let piv = a.read(c, c);
        if piv.abs() == 0.0 {
            return ZERO;
        }
        d *= piv;
        for i in c + 1..n {
            let f = a.read(i, c) / piv;
            for k in c..n {
                let v = a.read(i, k) - f * a.read(c, k);
                a.write(i, k, v);
            }
        }
    }
    d
}

/// Approximations of sigma_H for a one-body model.
pub fn one_body_chern(model: &OneBodyModel, method: ChernMethod) -> Result<f64> {
    match method {
        ChernMethod::DoubleCommutator => Ok(double_commutator_chern(&model.lat, &model.fermi_projection()?)),
        ChernMethod::OffDiagonal => off_diagonal_chern(model),
        ChernMethod::Kspace => {
            let flux = model
                .flux
                .ok_or_else(|| Error::KspacePrecondition("model has no rational flux".into()))?;
            if model.lat.l % flux.q as usize != 0 {
                return Err(Error::KspacePrecondition(format!("q = {} does not divide L = {}", flux.q, model.lat.l)));
            }
            let cells = model.lat.n_sites() / flux.q as usize;
            let filled = model.filling();
            if filled % cells != 0 {
                return Err(Error::KspacePrecondition(format!("{filled} states do not fill whole bands")));
            }
            Ok(kspace_chern(flux, filled / cells)?.chern as f64 / (2.0 * PI))
        }
    }
}

/// The many-body model H = dGamma(h - mu) + lambda V.
#[derive(Clone, Debug)]
pub struct HofstadterModel {
    pub lat: TorusLattice,
    pub mu: f64,
    pub lambda: f64,
    pub hamiltonian: Interaction,
    pub interaction: Interaction,
}

/// Origin pieces of the nearest-neighbour density interaction.
pub fn nearest_neighbour_pieces(lat: &TorusLattice) -> Result<Vec<FockOperator>> {
    let n0 = FockOperator::number(lat, Site::ORIGIN)?;
    let mut out = Vec::new();
    for d in [(1usize, 0usize), (0, 1)] {
        let y = lat.shift(Site::ORIGIN, d);
        out.push(n0.mul(&FockOperator::number(lat, y)?).with_center(Site::ORIGIN));
    }
    Ok(out)
}

/// Origin pieces of dGamma(h - mu): the two forward bonds and the on-site term.
pub fn hopping_pieces(lat: &TorusLattice, mu: f64) -> Result<Vec<FockOperator>> {
    let a0 = FockOperator::annihilation(lat, Site::ORIGIN)?;
    let mut out = Vec::new();
    for d in [(1usize, 0usize), (0, 1)] {
        let y = lat.shift(Site::ORIGIN, d);
        let hop = FockOperator::creation(lat, y)?.mul(&a0);
        out.push(hop.add(&hop.adjoint()).with_center(Site::ORIGIN));
    }
    out.push(FockOperator::number(lat, Site::ORIGIN)?.scale_real(-mu).with_center(Site::ORIGIN));
    Ok(out)
}

impl HofstadterModel {
    /// `v_pieces` are origin pieces of V; `None` selects nearest-neighbour n_x n_y.
    pub fn new(lat: &TorusLattice, mu: f64, lambda: f64, v_pieces: Option<Vec<FockOperator>>) -> Result<Self> {
        TorusLattice::new(lat.l, lat.b, lat.magnetic_pbc)?;
        if lat.n_sites() > MAX_MANY_BODY_MODES {
            return Err(Error::Oversize { modes: lat.n_sites(), cap: MAX_MANY_BODY_MODES });
        }
        let v_pieces = match v_pieces {
            Some(v) => v,
            None => nearest_neighbour_pieces(lat)?,
        };
        let interaction = Interaction::periodic_from_pieces(lat, &v_pieces);
        let mut pieces = hopping_pieces(lat, mu)?;
        if lambda != 0.0 {
            pieces.extend(v_pieces.iter().map(|p| p.scale_real(lambda)));
        }
        let hamiltonian = Interaction::periodic_from_pieces(lat, &pieces);
        Ok(HofstadterModel { lat: lat.clone(), mu, lambda, hamiltonian, interaction })
    }

    pub fn origin_term(&self) -> FockOperator {
        self.hamiltonian.origin_term()
    }

    pub fn total(&self) -> &FockOperator {
        self.hamiltonian.total()
    }
}

/// Eigen-decomposition of a many-body Hamiltonian with its ground sector.
#[derive(Clone, Debug)]
pub struct SpectralCache {
    pub values: Vec<f64>,
    pub vectors: Mat<c64>,
    pub ground_energy: f64,
    pub ground_dim: usize,
    pub gap: f64,
}

pub const DEGENERACY_TOL: f64 = 1e-9;

impl SpectralCache {
    pub fn from_matrix(h: &Mat<c64>) -> Self {
        let (values, vectors) = linalg::eigh(h.as_ref());
        Self::from_parts(values, vectors)
    }

    pub fn from_parts(values: Vec<f64>, vectors: Mat<c64>) -> Self {
        let e0 = values[0];
        let ground_dim = values.iter().take_while(|&&e| e - e0 <= DEGENERACY_TOL).count();
        let gap = if ground_dim < values.len() { values[ground_dim] - e0 } else { f64::INFINITY };
        SpectralCache { values, vectors, ground_energy: e0, ground_dim, gap }
    }

    pub fn degenerate(&self) -> bool {
        self.ground_dim > 1
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn ground_vectors(&self) -> Mat<c64> {
        Mat::from_fn(self.dim(), self.ground_dim, |i, j| self.vectors.read(i, j))
    }

    pub fn ground_projector(&self) -> Mat<c64> {
        let g = self.ground_vectors();
        &g * g.adjoint()
    }

    /// |H - U diag(E) U^*| relative to |H|.
    pub fn reconstruction_error(&self, h: &Mat<c64>) -> f64 {
        let back = linalg::from_eigen(&self.values, self.vectors.as_ref(), |e| c64::new(e, 0.0));
        linalg::max_abs((&back - h).as_ref()) / linalg::max_abs(h.as_ref()).max(1e-300)
    }

    pub fn ground_state(&self) -> State {
        let n = self.dim().trailing_zeros() as usize;
        State::uniform_mixture(n, self.ground_vectors())
    }
}

/// Ground state (uniform mixture over the ground sector) and spectral data.
pub fn ground_state(h: &FockOperator) -> Result<(State, SpectralCache)> {
    if h.hermitian_defect() > 1e-10 {
        return Err(Error::Dimension("hamiltonian is not self-adjoint".into()));
    }
    let cache = SpectralCache::from_matrix(h.matrix());
    Ok((cache.ground_state(), cache))
}

#[derive(Clone, Debug, Serialize)]
pub struct GapCertificate {
    pub min_ratio: f64,
    pub evaluated: usize,
    pub skipped: usize,
    pub required: f64,
    pub passed: bool,
}

/// omega(A^* [H, A]) / (omega(A^* A) - |omega(A)|^2), or `None` when the
/// variance is below 1e-14.
pub fn gap_ratio(state: &State, h: &FockOperator, a: &FockOperator) -> Result<Option<f64>> {
    let n = state.n_modes();
    let comps: Vec<(f64, Col<c64>)> = match state {
        State::Pure { vector, .. } => vec![(1.0, vector.clone())],
        State::Mixture { vectors, weights, .. } => {
            weights.iter().enumerate().map(|(i, &w)| (w, vectors.col(i).to_owned())).collect()
        }
        State::QuasiFree { .. } => return Err(Error::UnsupportedState),
    };
    let mut num = ZERO;
    let mut second = ZERO;
    let mut first = ZERO;
    for (w, v) in comps {
        let av = a.apply_full(n, &v);
        let hav = h.apply_full(n, &av);
        let hv = h.apply_full(n, &v);
        let ahv = a.apply_full(n, &hv);
        num += (linalg::dot(&av, &hav) - linalg::dot(&av, &ahv)) * w;
        second += linalg::dot(&av, &av) * w;
        first += linalg::dot(&v, &av) * w;
    }
    let var = second.re - linalg::norm_sqr(first);
    if var < 1e-14 {
        return Ok(None);
    }
    Ok(Some(num.re / var))
}

/// Random gauge-invariant probe on a connected patch of up to `max_sites` sites.
pub fn random_local_probe<R: Rng>(lat: &TorusLattice, rng: &mut R, max_sites: usize) -> FockOperator {
    let k = rng.gen_range(1..=max_sites.min(lat.n_sites()));
    let start = lat.site(rng.gen_range(0..lat.n_sites()));
    let mut sites = vec![lat.index(start)];
    while sites.len() < k {
        let from = lat.site(*sites.choose(rng).unwrap());
        let d = [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)][rng.gen_range(0..4)];
        let next = lat.index(lat.wrap(from.x1 as i64 + d.0, from.x2 as i64 + d.1));
        if !sites.contains(&next) {
            sites.push(next);
        }
    }
    sites.sort_unstable();
    FockOperator::random_gauge_invariant(&sites, rng, false)
}

pub fn gap_certificate<R: Rng>(
    state: &State,
    hamiltonian: &Interaction,
    g: f64,
    samples: usize,
    rng: &mut R,
) -> Result<GapCertificate> {
    let lat = hamiltonian.lattice();
    let h = hamiltonian.total();
    let mut min_ratio = f64::INFINITY;
    let mut skipped = 0;
    for _ in 0..samples {
        let a = random_local_probe(lat, rng, 3);
        match gap_ratio(state, h, &a)? {
            Some(r) => min_ratio = min_ratio.min(r),
            None => skipped += 1,
        }
    }
    let required = g;
    Ok(GapCertificate {
        min_ratio,
        evaluated: samples - skipped,
        skipped,
        required,
        passed: min_ratio >= required - 1e-9,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_flux_dispersion() {
        let lat = TorusLattice::new(4, 0.0, true).unwrap();
        let m = OneBodyModel::new(&lat, 0.0).unwrap();
        let mut expect: Vec<f64> = (0..4)
            .flat_map(|a| (0..4).map(move |b| 2.0 * (PI * a as f64 / 2.0).cos() + 2.0 * (PI * b as f64 / 2.0).cos()))
            .collect();
        expect.sort_by(f64::total_cmp);
        for (x, y) in m.values.iter().zip(&expect) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn bloch_spectrum_matches_torus() {
        // b = 2 pi / 3 on L = 3: allowed momenta are multiples of 2 pi / 3 in k_1 and 2 pi in the cell momentum
        let flux = Flux::new(1, 3);
        let m = OneBodyModel::with_flux(3, flux, 0.0).unwrap();
        let mut bloch = Vec::new();
        for i in 0..3 {
            let (v, _) = linalg::eigh(bloch_hamiltonian(flux, 2.0 * PI * i as f64 / 3.0, 0.0).as_ref());
            bloch.extend(v);
        }
        bloch.sort_by(f64::total_cmp);
        for (x, y) in m.values.iter().zip(&bloch) {
            assert!((x - y).abs() < 1e-10);
        }
    }
}
