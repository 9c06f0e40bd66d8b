use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Site {
    pub x1: usize,
    pub x2: usize,
}

impl Site {
    pub const ORIGIN: Site = Site { x1: 0, x2: 0 };

    pub fn new(x1: usize, x2: usize) -> Self {
        Site { x1, x2 }
    }
}

/// Rational flux per plaquette, b = 2 pi p / q.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flux {
    pub p: i64,
    pub q: u64,
}

impl Flux {
    pub fn new(p: i64, q: u64) -> Self {
        Flux { p, q }
    }

    pub fn zero() -> Self {
        Flux { p: 0, q: 1 }
    }

    pub fn b(&self) -> f64 {
        2.0 * PI * self.p as f64 / self.q as f64
    }

    /// True when b L is an integer multiple of 2 pi.
    pub fn fits(&self, l: usize) -> bool {
        (self.p * l as i64).rem_euclid(self.q as i64) == 0
    }
}

impl fmt::Display for Flux {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.p, self.q)
    }
}

impl FromStr for Flux {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("flux `{s}` is not of the form p/q"));
        let (p, q) = match s.split_once('/') {
            Some((p, q)) => (p.trim(), q.trim()),
            None => (s.trim(), "1"),
        };
        let p: i64 = p.parse().map_err(|_| bad())?;
        let q: u64 = q.parse().map_err(|_| bad())?;
        if q == 0 {
            return Err(bad());
        }
        Ok(Flux { p, q })
    }
}

/// L x L torus. Site (x1, x2) carries mode index x1 * L + x2.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusLattice {
    pub l: usize,
    pub b: f64,
    pub magnetic_pbc: bool,
}

impl TorusLattice {
    pub fn new(l: usize, b: f64, magnetic_pbc: bool) -> Result<Self> {
        if magnetic_pbc {
            let ratio = b * l as f64 / (2.0 * PI);
            if (ratio - ratio.round()).abs() > 1e-12 {
                return Err(Error::FluxQuantization { b, l, ratio });
            }
        }
        Ok(TorusLattice { l, b, magnetic_pbc })
    }

    pub fn with_flux(l: usize, flux: Flux) -> Result<Self> {
        if !flux.fits(l) {
            let b = flux.b();
            return Err(Error::FluxQuantization { b, l, ratio: b * l as f64 / (2.0 * PI) });
        }
        Ok(TorusLattice { l, b: flux.b(), magnetic_pbc: true })
    }

    pub fn n_sites(&self) -> usize {
        self.l * self.l
    }

    pub fn index(&self, s: Site) -> usize {
        s.x1 * self.l + s.x2
    }

    pub fn site(&self, index: usize) -> Site {
        Site { x1: index / self.l, x2: index % self.l }
    }

    pub fn checked_site(&self, x1: usize, x2: usize) -> Result<Site> {
        if x1 >= self.l || x2 >= self.l {
            return Err(Error::SiteOutOfRange { x1, x2, l: self.l });
        }
        Ok(Site { x1, x2 })
    }

    pub fn wrap(&self, x1: i64, x2: i64) -> Site {
        let l = self.l as i64;
        Site { x1: x1.rem_euclid(l) as usize, x2: x2.rem_euclid(l) as usize }
    }

    pub fn shift(&self, s: Site, gamma: (usize, usize)) -> Site {
        Site { x1: (s.x1 + gamma.0) % self.l, x2: (s.x2 + gamma.1) % self.l }
    }

    /// All torus shifts, in mode order.
    pub fn shifts(&self) -> Vec<(usize, usize)> {
        (0..self.l).flat_map(|a| (0..self.l).map(move |b| (a, b))).collect()
    }

    /// Representative of d mod L in (-L/2, L/2].
    pub fn min_image(&self, d: i64) -> i64 {
        let l = self.l as i64;
        let r = d.rem_euclid(l);
        if 2 * r > l {
            r - l
        } else {
            r
        }
    }

    pub fn displacement(&self, from: Site, to: Site) -> (i64, i64) {
        (
            self.min_image(to.x1 as i64 - from.x1 as i64),
            self.min_image(to.x2 as i64 - from.x2 as i64),
        )
    }

    pub fn dist_inf(&self, a: Site, b: Site) -> usize {
        let (d1, d2) = self.displacement(a, b);
        d1.unsigned_abs().max(d2.unsigned_abs()) as usize
    }

    /// Minimal-image infinity-diameter of a site set, capped at L - 1.
    pub fn diameter(&self, modes: &[usize]) -> usize {
        let mut d = 0;
        for (i, &a) in modes.iter().enumerate() {
            for &b in &modes[i + 1..] {
                d = d.max(self.dist_inf(self.site(a), self.site(b)));
            }
        }
        d.min(self.l - 1)
    }

    /// Mode indices of the box of radius k around `center`.
    pub fn box_modes(&self, center: Site, k: usize) -> Vec<usize> {
        (0..self.n_sites())
            .filter(|&m| self.dist_inf(center, self.site(m)) <= k)
            .collect()
    }

    /// Coordinate of `s` in direction j (1 or 2) relative to `center`, minimal image.
    pub fn relative_coordinate(&self, center: Site, s: Site, j: usize) -> i64 {
        let (d1, d2) = self.displacement(center, s);
        if j == 1 {
            d1
        } else {
            d2
        }
    }

    /// Lattice point nearest to the minimal-image centroid of a site set, or
    /// `None` when the set wraps around the torus in some direction.
    pub fn centroid(&self, modes: &[usize]) -> Option<Site> {
        if modes.is_empty() {
            return None;
        }
        let sites: Vec<Site> = modes.iter().map(|&m| self.site(m)).collect();
        let mut c = [0i64; 2];
        for j in 0..2 {
            let coords: Vec<usize> = sites.iter().map(|s| if j == 0 { s.x1 } else { s.x2 }).collect();
            let unwrapped = self.unwrap_coordinates(&coords)?;
            let mean = unwrapped.iter().sum::<i64>() as f64 / unwrapped.len() as f64;
            // nearest point with centroid - c in (-1/2, 1/2]
            c[j] = (mean - 0.5).ceil() as i64;
        }
        Some(self.wrap(c[0], c[1]))
    }

    /// Unwraps torus coordinates onto an interval by cutting at the largest
    /// empty arc. Fails when every coordinate value is occupied.
    pub fn unwrap_coordinates(&self, coords: &[usize]) -> Option<Vec<i64>> {
        let l = self.l;
        let mut occupied = vec![false; l];
        for &c in coords {
            occupied[c] = true;
        }
        if occupied.iter().all(|&o| o) {
            return None;
        }
        // start of the longest run of empty values, cyclically
        let mut best = (0usize, 0usize);
        for start in 0..l {
            if occupied[start] || !occupied[(start + l - 1) % l] {
                continue;
            }
            let mut len = 0;
            while !occupied[(start + len) % l] {
                len += 1;
            }
            if len > best.1 {
                best = (start, len);
            }
        }
        let first = (best.0 + best.1) % l;
        Some(
            coords
                .iter()
                .map(|&c| ((c + l - first) % l) as i64 + first as i64)
                .collect(),
        )
    }

    pub fn neighbors(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for m in 0..self.n_sites() {
            let s = self.site(m);
            for (d1, d2) in [(1i64, 0i64), (0, 1)] {
                let t = self.wrap(s.x1 as i64 + d1, s.x2 as i64 + d2);
                out.push((m, self.index(t)));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantization() {
        assert!(TorusLattice::new(3, 2.0 * PI / 3.0, true).is_ok());
        assert!(TorusLattice::new(4, 2.0 * PI / 3.0, true).is_err());
        assert!(TorusLattice::with_flux(9, Flux::new(1, 3)).is_ok());
        assert!(TorusLattice::with_flux(4, Flux::new(1, 3)).is_err());
        assert_eq!("2/5".parse::<Flux>().unwrap(), Flux::new(2, 5));
        assert!("1/0".parse::<Flux>().is_err());
    }

    #[test]
    fn min_image_ranges() {
        let lat = TorusLattice::new(4, 0.0, true).unwrap();
        let v: Vec<i64> = (0..8).map(|d| lat.min_image(d)).collect();
        assert_eq!(v, vec![0, 1, 2, -1, 0, 1, 2, -1]);
        let lat = TorusLattice::new(3, 0.0, true).unwrap();
        assert_eq!(lat.min_image(2), -1);
        assert_eq!(lat.min_image(-2), 1);
    }

    #[test]
    fn centroid_and_wrapping() {
        let lat = TorusLattice::new(5, 0.0, true).unwrap();
        let m = |a, b| lat.index(Site::new(a, b));
        assert_eq!(lat.centroid(&[m(0, 0), m(1, 0)]), Some(Site::new(0, 0)));
        assert_eq!(lat.centroid(&[m(4, 0), m(0, 0)]), Some(Site::new(4, 0)));
        assert_eq!(lat.centroid(&[m(4, 2), m(0, 2), m(1, 2)]), Some(Site::new(0, 2)));
        let row: Vec<usize> = (0..5).map(|a| m(a, 0)).collect();
        assert_eq!(lat.centroid(&row), None);
        assert_eq!(lat.unwrap_coordinates(&[4, 0]), Some(vec![4, 5]));
    }

    #[test]
    fn boxes_and_diameter() {
        let lat = TorusLattice::new(5, 0.0, true).unwrap();
        assert_eq!(lat.box_modes(Site::new(0, 0), 0), vec![0]);
        assert_eq!(lat.box_modes(Site::new(0, 0), 1).len(), 9);
        assert_eq!(lat.box_modes(Site::new(2, 2), 2).len(), 25);
        let a = lat.index(Site::new(0, 0));
        let b = lat.index(Site::new(4, 3));
        assert_eq!(lat.diameter(&[a, b]), 2);
    }
}
