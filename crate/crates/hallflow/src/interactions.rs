//! Translation-periodic interactions on the torus.
//!
//! An [`Interaction`] is a list of terms, each a local operator on a site set
//! together with the lattice point it is attached to. Periodic interactions
//! are generated from their origin pieces by magnetic translations, so the
//! term at `gamma` is exactly `T_gamma` of the corresponding origin term. The
//! attachment point matters on small tori, where different translates of a
//! term can share the same site set.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use faer::Mat;

use crate::c64;
use crate::error::{Error, Result};
use crate::fock::FockOperator;
use crate::lattice::{Site, TorusLattice};
use crate::linalg::{self, ONE, ZERO};
use crate::state::State;

/// Magnetic translations `a_y -> exp(-i b y_1 gamma_2) a_{y + gamma}`.
#[derive(Clone, Debug)]
pub struct MagneticTranslation {
    lat: TorusLattice,
}

impl MagneticTranslation {
    pub fn new(lat: &TorusLattice) -> Self {
        MagneticTranslation { lat: lat.clone() }
    }

    pub fn lattice(&self) -> &TorusLattice {
        &self.lat
    }

    /// Image mode and the phase picked up by the creation operator.
    pub fn image(&self, mode: usize, gamma: (usize, usize)) -> (usize, c64) {
        let y = self.lat.site(mode);
        let target = self.lat.shift(y, gamma);
        (self.lat.index(target), linalg::cis(self.lat.b * (y.x1 * gamma.1) as f64))
    }

    /// T_gamma(a_y) as an operator.
    pub fn translate_annihilation(&self, y: Site, gamma: (usize, usize)) -> FockOperator {
        let (m, phase) = self.image(self.lat.index(y), gamma);
        let mut a = Mat::zeros(2, 2);
        a.write(0, 1, phase.conj());
        FockOperator::from_parts(vec![m], a, Some(self.lat.shift(y, gamma)))
    }

    /// Conjugation by the translation unitary.
    pub fn translate(&self, gamma: (usize, usize), a: &FockOperator) -> FockOperator {
        if gamma == (0, 0) {
            return a.clone();
        }
        let images: Vec<(usize, c64)> = a.modes().iter().map(|&m| self.image(m, gamma)).collect();
        let mut frame: Vec<usize> = images.iter().map(|x| x.0).collect();
        frame.sort_unstable();
        // new local position of each old local position
        let pos: Vec<usize> = images.iter().map(|x| frame.binary_search(&x.0).unwrap()).collect();
        let dim = a.dim();
        let mut target = vec![0usize; dim];
        let mut phase = vec![ONE; dim];
        for s in 0..dim {
            let mut t = 0usize;
            let mut u = ONE;
            let mut occupied_new = Vec::with_capacity(pos.len());
            for (i, &p) in pos.iter().enumerate() {
                if s >> i & 1 == 1 {
                    t |= 1 << p;
                    u *= images[i].1;
                    occupied_new.push(p);
                }
            }
            // reorder a^*_{p_1} ... a^*_{p_k} into ascending order
            let mut inv = 0;
            for i in 0..occupied_new.len() {
                for j in i + 1..occupied_new.len() {
                    if occupied_new[i] > occupied_new[j] {
                        inv += 1;
                    }
                }
            }
            if inv % 2 == 1 {
                u = -u;
            }
            target[s] = t;
            phase[s] = u;
        }
        let m = a.matrix();
        let mut out = Mat::zeros(dim, dim);
        for t in 0..dim {
            for s in 0..dim {
                let v = m.read(s, t);
                if v != ZERO {
                    out.write(target[s], target[t], phase[s] * v * phase[t].conj());
                }
            }
        }
        let center = a.center().map(|c| self.lat.shift(c, gamma));
        FockOperator::from_parts(frame, out, center)
    }

    /// Largest deviation from T_gamma T_mu A = T_{gamma + mu} A over all shift pairs.
    pub fn compatibility_defect(&self, a: &FockOperator) -> f64 {
        let shifts = self.lat.shifts();
        let mut worst = 0.0f64;
        for &g in &shifts {
            let tg = self.translate(g, a);
            for &m in &shifts {
                let lhs = self.translate(m, &tg);
                let sum = ((g.0 + m.0) % self.lat.l, (g.1 + m.1) % self.lat.l);
                let rhs = self.translate(sum, a);
                worst = worst.max(lhs.sub(&rhs).max_abs());
            }
        }
        worst
    }

    /// Sum of all translates of an origin operator, on the full frame.
    pub fn periodic_sum(&self, a: &FockOperator) -> FockOperator {
        let n = self.lat.n_sites();
        let full: Vec<usize> = (0..n).collect();
        let base = a.embed(&full).expect("full frame");
        let mut acc = Mat::<c64>::zeros(base.dim(), base.dim());
        for g in self.lat.shifts() {
            acc += self.translate(g, &base).matrix();
        }
        FockOperator::from_parts(full, acc, None)
    }
}

#[derive(Clone, Debug)]
pub struct Term {
    pub center: Site,
    pub op: FockOperator,
}

#[derive(Clone, Debug)]
pub struct Interaction {
    lat: TorusLattice,
    terms: Vec<Term>,
    periodic: bool,
    total: OnceLock<FockOperator>,
}

fn frame_key(t: &Term) -> (Site, Vec<usize>) {
    (t.center, t.op.modes().to_vec())
}

impl Interaction {
    /// Terms given explicitly; `periodic` records whether they are claimed to
    /// be translation covariant (checked by [`Interaction::periodicity_defect`]).
    pub fn from_terms(lat: &TorusLattice, terms: Vec<Term>, periodic: bool) -> Self {
        let mut merged: BTreeMap<(Site, Vec<usize>), FockOperator> = BTreeMap::new();
        for t in terms {
            let key = frame_key(&t);
            match merged.get_mut(&key) {
                Some(op) => *op = op.add(&t.op),
                None => {
                    merged.insert(key, t.op);
                }
            }
        }
        let terms = merged
            .into_iter()
            .filter(|(_, op)| op.max_abs() > 1e-15)
            .map(|((center, _), op)| Term { center, op: op.with_center(center) })
            .collect();
        Interaction { lat: lat.clone(), terms, periodic, total: OnceLock::new() }
    }

    /// Periodic interaction whose origin terms are `pieces`.
    pub fn periodic_from_pieces(lat: &TorusLattice, pieces: &[FockOperator]) -> Self {
        let t = MagneticTranslation::new(lat);
        let mut terms = Vec::new();
        for g in lat.shifts() {
            let center = Site::new(g.0, g.1);
            for p in pieces {
                let piece = p.clone().with_center(Site::ORIGIN);
                terms.push(Term { center, op: t.translate(g, &piece) });
            }
        }
        Self::from_terms(lat, terms, true)
    }

    /// N = sum_x n_x.
    pub fn number(lat: &TorusLattice) -> Self {
        let n0 = FockOperator::number(lat, Site::ORIGIN).expect("origin");
        Self::periodic_from_pieces(lat, &[n0])
    }

    pub fn zero(lat: &TorusLattice) -> Self {
        Interaction { lat: lat.clone(), terms: Vec::new(), periodic: true, total: OnceLock::new() }
    }

    pub fn lattice(&self) -> &TorusLattice {
        &self.lat
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    /// Sum of the terms attached to the origin.
    pub fn origin_term(&self) -> FockOperator {
        let mut acc = FockOperator::zero().with_center(Site::ORIGIN);
        for t in self.terms.iter().filter(|t| t.center == Site::ORIGIN) {
            acc.add_assign_scaled(&t.op, ONE);
        }
        acc.with_center(Site::ORIGIN)
    }

    /// Sum of all terms on the full Fock space.
    pub fn total(&self) -> &FockOperator {
        self.total.get_or_init(|| {
            let n = self.lat.n_sites();
            let full: Vec<usize> = (0..n).collect();
            let dim = 1usize << n;
            let mut acc = Mat::<c64>::zeros(dim, dim);
            for t in &self.terms {
                acc += t.op.embed(&full).expect("full frame").matrix();
            }
            FockOperator::from_parts(full, acc, None)
        })
    }

    pub fn scale(&self, x: f64) -> Interaction {
        let terms = self
            .terms
            .iter()
            .map(|t| Term { center: t.center, op: t.op.scale_real(x) })
            .collect();
        Interaction { lat: self.lat.clone(), terms, periodic: self.periodic, total: OnceLock::new() }
    }

    pub fn add(&self, other: &Interaction) -> Result<Interaction> {
        if self.lat != other.lat {
            return Err(Error::TranslationMismatch);
        }
        let terms = self.terms.iter().chain(other.terms.iter()).cloned().collect();
        Ok(Self::from_terms(&self.lat, terms, self.periodic && other.periodic))
    }

    /// max_x sum_{M containing x} (1 + diam M)^nu |Phi(M)|, terms grouped by site set.
    pub fn norm(&self, nu: u32) -> f64 {
        let mut by_set: BTreeMap<Vec<usize>, FockOperator> = BTreeMap::new();
        for t in &self.terms {
            let key = t.op.modes().to_vec();
            match by_set.get_mut(&key) {
                Some(op) => *op = op.add(&t.op),
                None => {
                    by_set.insert(key, t.op.clone());
                }
            }
        }
        let mut per_site = vec![0.0f64; self.lat.n_sites()];
        for (set, op) in &by_set {
            let w = (1.0 + self.lat.diameter(set) as f64).powi(nu as i32) * op.norm();
            for &x in set {
                per_site[x] += w;
            }
        }
        per_site.into_iter().fold(0.0, f64::max)
    }

    /// Largest deviation between T_gamma of a term and the stored term at the shifted point.
    pub fn periodicity_defect(&self) -> f64 {
        let t = MagneticTranslation::new(&self.lat);
        let index: BTreeMap<(Site, Vec<usize>), &FockOperator> =
            self.terms.iter().map(|x| (frame_key(x), &x.op)).collect();
        let mut worst = 0.0f64;
        for term in self.terms.iter().filter(|x| x.center == Site::ORIGIN) {
            for g in self.lat.shifts() {
                let moved = t.translate(g, &term.op);
                let key = (self.lat.shift(Site::ORIGIN, g), moved.modes().to_vec());
                let d = match index.get(&key) {
                    Some(op) => moved.sub(op).max_abs(),
                    None => moved.max_abs(),
                };
                worst = worst.max(d);
            }
        }
        // every stored term must come from an origin term
        let origin_count = self.terms.iter().filter(|x| x.center == Site::ORIGIN).count();
        if self.terms.len() != origin_count * self.lat.n_sites() {
            worst = worst.max(1.0);
        }
        worst
    }

    /// [Phi, Psi](M) = sum over M1 u M2 = M of [Phi(M1), Psi(M2)], attached at the
    /// point of the Psi term.
    pub fn commutator(&self, other: &Interaction) -> Result<Interaction> {
        if self.lat != other.lat {
            return Err(Error::TranslationMismatch);
        }
        let mut terms = Vec::new();
        for b in &other.terms {
            for a in &self.terms {
                if a.op.modes().iter().any(|m| b.op.modes().binary_search(m).is_ok()) {
                    terms.push(Term { center: b.center, op: a.op.commutator(&b.op) });
                }
            }
        }
        Ok(Self::from_terms(&self.lat, terms, self.periodic && other.periodic))
    }

    /// [X_j, Psi], each term taken about its attachment point.
    pub fn position_commutator(&self, j: usize) -> Interaction {
        let terms = self
            .terms
            .iter()
            .map(|t| Term { center: t.center, op: t.op.position_commutator_about(&self.lat, j, t.center) })
            .collect();
        Self::from_terms(&self.lat, terms, self.periodic)
    }

    /// sum_M [Phi(M), A].
    pub fn liouvillian(&self, a: &FockOperator) -> FockOperator {
        if a.modes().len() == self.lat.n_sites() {
            return self.total().commutator(a).with_center_opt(a.center());
        }
        let mut acc = FockOperator::zero();
        for t in &self.terms {
            if t.op.modes().iter().any(|m| a.modes().binary_search(m).is_ok()) {
                acc.add_assign_scaled(&t.op.commutator(a), ONE);
            }
        }
        acc.with_center_opt(a.center())
    }

    /// Per-volume expectation omega(Phi_0), after checking that omega is
    /// translation invariant on a few local observables.
    pub fn per_volume_expectation(&self, state: &State) -> Result<f64> {
        let defect = periodicity_defect_of_state(&self.lat, state)?;
        if defect > 1e-8 {
            return Err(Error::NonPeriodicState(defect));
        }
        Ok(state.expect(&self.origin_term())?.re)
    }

    /// (1/L^2) sum_M omega(Phi(M)).
    pub fn volume_average(&self, state: &State) -> Result<f64> {
        let mut acc = 0.0;
        for t in &self.terms {
            acc += state.expect(&t.op)?.re;
        }
        Ok(acc / self.lat.n_sites() as f64)
    }
}

impl FockOperator {
    pub(crate) fn with_center_opt(mut self, c: Option<Site>) -> Self {
        self.set_center(c);
        self
    }
}

/// Largest |omega(T_gamma A) - omega(A)| over densities and bonds at the origin.
pub fn periodicity_defect_of_state(lat: &TorusLattice, state: &State) -> Result<f64> {
    let t = MagneticTranslation::new(lat);
    let x0 = Site::ORIGIN;
    let mut probes = vec![FockOperator::number(lat, x0)?];
    for (d1, d2) in [(1usize, 0usize), (0, 1)] {
        let y = lat.shift(x0, (d1, d2));
        if y == x0 {
            continue;
        }
        let hop = FockOperator::creation(lat, y)?.mul(&FockOperator::annihilation(lat, x0)?);
        probes.push(hop.add(&hop.adjoint()));
        probes.push(hop.sub(&hop.adjoint()).scale(linalg::I));
    }
    let mut worst = 0.0f64;
    for p in &probes {
        let base = state.expect(p)?;
        for g in lat.shifts() {
            worst = worst.max((state.expect(&t.translate(g, p))? - base).abs());
        }
    }
    Ok(worst)
}

/// Generator p Phi + q X_j acting by commutators.
#[derive(Clone, Copy, Debug)]
pub struct Liouvillian<'a> {
    pub p: f64,
    pub phi: Option<&'a Interaction>,
    pub q: f64,
    pub j: usize,
}

impl<'a> Liouvillian<'a> {
    pub fn interaction(phi: &'a Interaction) -> Self {
        Liouvillian { p: 1.0, phi: Some(phi), q: 0.0, j: 1 }
    }

    pub fn position(j: usize) -> Self {
        Liouvillian { p: 0.0, phi: None, q: 1.0, j }
    }

    /// p sum_M [Phi(M), A] + q sum_{x in supp A} x_j [n_x, A], coordinates taken
    /// about the declared center of A, or the centroid of its support.
    pub fn apply(&self, lat: &TorusLattice, a: &FockOperator) -> Result<FockOperator> {
        let mut out = FockOperator::zero().with_center_opt(a.center());
        if self.p != 0.0 {
            if let Some(phi) = self.phi {
                out.add_assign_scaled(&phi.liouvillian(a), c64::new(self.p, 0.0));
            }
        }
        if self.q != 0.0 {
            out.add_assign_scaled(&position_liouvillian(lat, self.j, a)?, c64::new(self.q, 0.0));
        }
        Ok(out.with_center_opt(a.center()))
    }
}

/// L_{X_j} A with minimal-image coordinates about the center of A.
pub fn position_liouvillian(lat: &TorusLattice, j: usize, a: &FockOperator) -> Result<FockOperator> {
    let center = match a.center() {
        Some(c) => c,
        None => match lat.centroid(a.modes()) {
            Some(c) => c,
            None if a.modes().is_empty() => Site::ORIGIN,
            None => return Err(Error::WrappingSupport(j)),
        },
    };
    Ok(a.position_commutator_about(lat, j, center))
}

/// Telescoping decomposition of a T-compatible operator into box terms,
/// T_gamma E_{Lambda_0} A and T_gamma (E_{Lambda_k} A - E_{Lambda_{k-1}} A).
pub fn periodize(lat: &TorusLattice, a: &FockOperator) -> Result<Interaction> {
    if a.hermitian_defect() > 1e-10 {
        return Err(Error::Dimension("periodize needs a self-adjoint operator".into()));
    }
    let t = MagneticTranslation::new(lat);
    let defect = t.compatibility_defect(a);
    if defect > 1e-10 * a.max_abs().max(1.0) {
        return Err(Error::NotTCompatible(defect));
    }
    let center = a.center().unwrap_or(Site::ORIGIN);
    let mut pieces: Vec<FockOperator> = Vec::new();
    let mut prev: Option<FockOperator> = None;
    for k in 0..=lat.l / 2 {
        let region = lat.box_modes(center, k);
        let e = a.conditional_expectation(&region)?;
        let piece = match &prev {
            None => e.clone(),
            Some(p) => e.sub(p),
        };
        let piece = piece.restrict(&region).unwrap_or(piece);
        if piece.max_abs() > 1e-15 {
            pieces.push(piece);
        }
        prev = Some(e);
    }
    let mut terms = Vec::new();
    for g in lat.shifts() {
        for p in &pieces {
            let p = p.clone().with_center(center);
            terms.push(Term { center: Site::new(g.0, g.1), op: t.translate(g, &p) });
        }
    }
    Ok(Interaction::from_terms(lat, terms, true))
}

/// Parses a polynomial in site operators, e.g. `n(0,0)*n(1,0)` or
/// `0.5*cd(1,0)*c(0,0) + h.c.`. Factors: `n`, `c` (annihilation), `cd`
/// (creation), real numbers and `i`.
pub fn parse_operator(lat: &TorusLattice, expr: &str) -> Result<FockOperator> {
    let mut src = expr.trim().to_string();
    let mut hc = false;
    for suffix in ["+ h.c.", "+h.c.", "+ hc", "+hc"] {
        if let Some(stripped) = src.strip_suffix(suffix) {
            src = stripped.trim().to_string();
            hc = true;
            break;
        }
    }
    let mut acc = FockOperator::zero();
    for (sign, term) in split_terms(&src)? {
        let mut op = FockOperator::scalar(c64::new(sign, 0.0));
        for factor in term.split('*') {
            let f = factor.trim();
            op = op.mul(&parse_factor(lat, f)?);
        }
        acc.add_assign_scaled(&op, ONE);
    }
    if hc {
        acc = acc.add(&acc.adjoint());
    }
    Ok(acc)
}

fn split_terms(src: &str) -> Result<Vec<(f64, String)>> {
    let mut out = Vec::new();
    let mut depth = 0;
    let mut cur = String::new();
    let mut sign = 1.0;
    for ch in src.chars() {
        match ch {
            '(' => {
                depth += 1;
                cur.push(ch);
            }
            ')' => {
                depth -= 1;
                cur.push(ch);
            }
            '+' | '-' if depth == 0 => {
                if !cur.trim().is_empty() {
                    out.push((sign, cur.trim().to_string()));
                } else if ch == '-' {
                    sign = -sign;
                    continue;
                }
                cur.clear();
                sign = if ch == '-' { -1.0 } else { 1.0 };
            }
            _ => cur.push(ch),
        }
    }
    if cur.trim().is_empty() {
        return Err(Error::Parse(format!("empty term in `{src}`")));
    }
    out.push((sign, cur.trim().to_string()));
    Ok(out)
}

fn parse_factor(lat: &TorusLattice, f: &str) -> Result<FockOperator> {
    let bad = || Error::Parse(format!("cannot parse factor `{f}`"));
    if f == "i" {
        return Ok(FockOperator::scalar(linalg::I));
    }
    if let Ok(x) = f.parse::<f64>() {
        return Ok(FockOperator::scalar(c64::new(x, 0.0)));
    }
    let open = f.find('(').ok_or_else(bad)?;
    let name = &f[..open];
    let args = f[open + 1..].strip_suffix(')').ok_or_else(bad)?;
    let coords: Vec<i64> = args.split(',').map(|s| s.trim().parse::<i64>()).collect::<std::result::Result<_, _>>().map_err(|_| bad())?;
    if coords.len() != 2 {
        return Err(bad());
    }
    let site = lat.wrap(coords[0], coords[1]);
    match name {
        "n" => FockOperator::number(lat, site),
        "c" => FockOperator::annihilation(lat, site),
        "cd" => FockOperator::creation(lat, site),
        _ => Err(bad()),
    }
}
