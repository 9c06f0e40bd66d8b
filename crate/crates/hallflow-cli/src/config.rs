//! Run configuration, read from TOML.
//!
//! Units: energies (mu, g, spectra) in units of the hopping amplitude,
//! flux b in radians per plaquette, times (t_max) in inverse hopping units,
//! lengths (l, side, segments) in lattice spacings. `epsilon` is the field
//! strength, an energy per lattice spacing.

use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use hallflow::interactions::parse_operator;
use hallflow::{FilterKernel, Flux, FockOperator, InsideProfile, TorusLattice};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub lattice: LatticeConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default)]
    pub neass: NeassConfig,
    #[serde(default)]
    pub outputs: OutputConfig,
    #[serde(default)]
    pub scan: ScanConfig,
    #[serde(default)]
    pub cs: CsConfig,
    #[serde(default)]
    pub conductance: ConductanceConfig,
    #[serde(default)]
    pub ed: EdConfig,
    #[serde(default)]
    pub selftest: SelftestConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    /// Torus side L.
    pub l: usize,
    /// Flux per plaquette as "p/q", in units of 2 pi.
    pub flux: Option<String>,
    /// Raw flux per plaquette in radians; used when `flux` is absent.
    pub b: Option<f64>,
    /// Magnetic periodic boundary conditions (requires b L in 2 pi Z).
    #[serde(default = "yes")]
    pub pbc: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Chemical potential.
    #[serde(default = "default_mu")]
    pub mu: f64,
    /// Interaction strength.
    #[serde(default)]
    pub lambda: f64,
    /// Origin pieces of V; empty selects nearest-neighbour n_x n_y.
    #[serde(default)]
    pub interaction: Vec<TermRecord>,
}

/// One interaction record: the site set and an operator expression on it.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermRecord {
    pub sites: Vec<[usize; 2]>,
    pub expr: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    /// Filter gap parameter; absent means `gap_fraction` times the measured gap.
    pub g: Option<f64>,
    #[serde(default = "default_gap_fraction")]
    pub gap_fraction: f64,
    #[serde(default)]
    pub profile: InsideProfile,
    /// Time-quadrature cutoff.
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    /// Simpson nodes on [0, t_max].
    #[serde(default = "default_nodes")]
    pub nodes: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeassConfig {
    #[serde(default = "default_order")]
    pub order: usize,
    /// Field strengths; strictly increasing, zero allowed only first.
    #[serde(default = "default_epsilon")]
    pub epsilon: Vec<f64>,
    /// Random probes for residuals and order conditions.
    #[serde(default = "default_probes")]
    pub probes: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out")]
    pub directory: String,
    /// Any of "csv", "json".
    #[serde(default = "default_formats")]
    pub formats: Vec<String>,
    /// Eigendecomposition cache directory; relative to `directory`.
    #[serde(default = "default_cache")]
    pub cache: String,
}

#[derive(Clone, Debug, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    /// Fluxes "p/q" for spectrum and gap-map scans.
    #[serde(default)]
    pub fluxes: Vec<String>,
    /// Alternatively all p/L, p = 0..L (raw b grid), when `fluxes` is empty.
    #[serde(default)]
    pub all_quantized: bool,
    /// Gaps narrower than this are not reported by gap-map.
    #[serde(default = "default_min_gap")]
    pub min_gap: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsConfig {
    #[serde(default = "default_strength")]
    pub strength: f64,
    /// Generator origin piece; absent means a random two-site piece from the seed.
    pub generator: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConductanceConfig {
    /// Side of the one-body torus for the quasi-free path.
    #[serde(default = "default_side")]
    pub side: usize,
    #[serde(default = "default_segments")]
    pub segments: Vec<usize>,
    #[serde(default = "default_cond_eps")]
    pub epsilon: f64,
    /// Largest distance for current correlations.
    #[serde(default = "default_max_distance")]
    pub max_distance: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdConfig {
    /// Random probes for the gap certificate.
    #[serde(default = "default_certificate")]
    pub certificate_probes: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelftestConfig {
    /// Random instances per randomized check.
    #[serde(default = "default_cases")]
    pub cases: usize,
}

/// Numerical tolerances used by the commands.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Cached eigendecompositions: ||H - U D U*|| <= this * ||H||.
    #[serde(default = "t_1e10")]
    pub cache_reconstruction: f64,
    /// Algebraic identities (CAR, conditional expectation, cyclicity).
    #[serde(default = "t_1e12")]
    pub algebra: f64,
    /// Leibniz rule of Liouvillians.
    #[serde(default = "t_1e10")]
    pub leibniz: f64,
    /// Filter weight outside the gap against i/k.
    #[serde(default = "t_1e10")]
    pub filter_weight: f64,
    /// Spectral against time-quadrature filter.
    #[serde(default = "t_1e8")]
    pub quadrature: f64,
    /// OD property, inverse identity and NEASS order conditions.
    #[serde(default = "t_1e8")]
    pub flow_identity: f64,
    /// Origin route against volume average for currents.
    #[serde(default = "t_1e10")]
    pub volume_route: f64,
    /// Discarded imaginary part of sigma_H.
    #[serde(default = "t_1e10")]
    pub imaginary_residue: f64,
    /// Correlations below this are dropped from the decay fit.
    #[serde(default = "t_1e14")]
    pub correlation_floor: f64,
}

fn yes() -> bool {
    true
}
fn default_mu() -> f64 {
    -1.366_025_403_784_438_6
}
fn default_gap_fraction() -> f64 {
    0.9
}
fn default_t_max() -> f64 {
    1500.0
}
fn default_nodes() -> usize {
    FilterKernel::new(1.0, InsideProfile::Cubic).nodes
}
fn default_order() -> usize {
    2
}
fn default_epsilon() -> Vec<f64> {
    (0..7).map(|k| 10f64.powf(-2.5 + 0.25 * k as f64)).collect()
}
fn default_probes() -> usize {
    20
}
fn default_out() -> String {
    "out".into()
}
fn default_formats() -> Vec<String> {
    vec!["csv".into(), "json".into()]
}
fn default_cache() -> String {
    "cache".into()
}
fn default_min_gap() -> f64 {
    1e-3
}
fn default_strength() -> f64 {
    0.1
}
fn default_side() -> usize {
    48
}
fn default_segments() -> Vec<usize> {
    vec![8, 16, 32]
}
fn default_cond_eps() -> f64 {
    0.05
}
fn default_max_distance() -> usize {
    12
}
fn default_certificate() -> usize {
    200
}
fn default_cases() -> usize {
    50
}
fn t_1e8() -> f64 {
    1e-8
}
fn t_1e10() -> f64 {
    1e-10
}
fn t_1e12() -> f64 {
    1e-12
}
fn t_1e14() -> f64 {
    1e-14
}

macro_rules! default_from_serde {
    ($($t:ty),*) => {$(
        impl Default for $t {
            fn default() -> Self {
                toml::from_str("").expect("all fields have defaults")
            }
        }
    )*};
}
default_from_serde!(ModelConfig, FilterConfig, NeassConfig, OutputConfig, CsConfig, ConductanceConfig, EdConfig, SelftestConfig, Tolerances);

/// Parses "p/q" into a flux.
pub fn parse_flux(s: &str) -> Result<Flux> {
    Ok(s.parse::<Flux>()?)
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).context("invalid configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.lattice.l >= 1, "lattice.l must be positive");
        ensure!(
            !(self.lattice.flux.is_some() && self.lattice.b.is_some()),
            "give either lattice.flux or lattice.b, not both"
        );
        self.lattice()?;
        for f in &self.scan.fluxes {
            parse_flux(f)?;
        }
        ensure!(
            (1..=4).contains(&self.neass.order),
            "neass.order = {} is outside 1..=4",
            self.neass.order
        );
        let eps = &self.neass.epsilon;
        ensure!(!eps.is_empty(), "neass.epsilon is empty");
        ensure!(eps.iter().all(|e| e.is_finite() && *e >= 0.0), "neass.epsilon must be non-negative");
        ensure!(eps.windows(2).all(|w| w[0] < w[1]), "neass.epsilon must be strictly increasing");
        ensure!(
            (0.0..1.0).contains(&self.filter.gap_fraction) && self.filter.gap_fraction > 0.0,
            "filter.gap_fraction must lie in (0, 1)"
        );
        if let Some(g) = self.filter.g {
            ensure!(g > 0.0, "filter.g must be positive");
        }
        ensure!(self.filter.t_max > 0.0 && self.filter.nodes >= 2, "filter quadrature needs t_max > 0 and nodes >= 2");
        for f in &self.outputs.formats {
            ensure!(f == "csv" || f == "json", "unknown output format {f:?}");
        }
        ensure!(self.conductance.epsilon > 0.0, "conductance.epsilon must be positive");
        ensure!(!self.conductance.segments.is_empty(), "conductance.segments is empty");
        let t = &self.tolerances;
        ensure!(
            [t.cache_reconstruction, t.algebra, t.leibniz, t.filter_weight, t.quadrature, t.flow_identity, t.volume_route, t.imaginary_residue, t.correlation_floor]
                .iter()
                .all(|x| *x > 0.0),
            "tolerances must be positive"
        );
        Ok(())
    }

    pub fn flux(&self) -> Result<Option<Flux>> {
        self.lattice.flux.as_deref().map(parse_flux).transpose()
    }

    /// The torus; flux violations report the offending (b, L).
    pub fn lattice(&self) -> Result<TorusLattice> {
        let l = self.lattice.l;
        let lat = match (self.flux()?, self.lattice.b) {
            (Some(f), _) if self.lattice.pbc => TorusLattice::with_flux(l, f),
            (Some(f), _) => TorusLattice::new(l, f.b(), false),
            (None, Some(b)) => TorusLattice::new(l, b, self.lattice.pbc),
            (None, None) => TorusLattice::new(l, 0.0, self.lattice.pbc),
        };
        lat.map_err(anyhow::Error::from)
    }

    /// Origin pieces of V from the interaction records.
    pub fn interaction_pieces(&self, lat: &TorusLattice) -> Result<Option<Vec<FockOperator>>> {
        if self.model.interaction.is_empty() {
            return Ok(None);
        }
        let mut out = Vec::new();
        for rec in &self.model.interaction {
            let mut sites = Vec::new();
            for &[x1, x2] in &rec.sites {
                sites.push(lat.index(lat.checked_site(x1, x2)?));
            }
            let op = parse_operator(lat, &rec.expr)?;
            if let Some(m) = op.modes().iter().find(|m| !sites.contains(m)) {
                bail!("expression {:?} acts on site {:?} outside its site set", rec.expr, lat.site(*m));
            }
            if !op.is_self_adjoint(1e-12) {
                bail!("interaction term {:?} is not self-adjoint", rec.expr);
            }
            out.push(op.with_center(hallflow::Site::ORIGIN));
        }
        Ok(Some(out))
    }

    pub fn kernel(&self, gap: f64) -> FilterKernel {
        let g = self.filter.g.unwrap_or(self.filter.gap_fraction * gap);
        FilterKernel::new(g, self.filter.profile).with_quadrature(self.filter.t_max, self.filter.nodes)
    }

    pub fn wants(&self, format: &str) -> bool {
        self.outputs.formats.iter().any(|f| f == format)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = RunConfig::from_toml("[lattice]\nl = 3\nflux = \"1/3\"\n").unwrap();
        assert_eq!(cfg.neass.order, 2);
        assert_eq!(cfg.tolerances.cache_reconstruction, 1e-10);
        assert!((cfg.lattice().unwrap().b - 2.0 * std::f64::consts::PI / 3.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(RunConfig::from_toml("[lattice]\nl = 4\nflux = \"1/3\"\n").is_err());
        assert!(RunConfig::from_toml("[lattice]\nl = 3\n[neass]\norder = 5\n").is_err());
        assert!(RunConfig::from_toml("[lattice]\nl = 3\n[neass]\nepsilon = [0.1, 0.01]\n").is_err());
        assert!(RunConfig::from_toml("[lattice]\nl = 3\nwidth = 2\n").is_err());
        assert!(parse_flux("1/0").is_err());
    }
}
