//! Subcommands. Each returns its artifacts; writing them is left to the caller.

use anyhow::{anyhow, bail, Result};
use hallflow::filter::FlowContext;
use hallflow::hofstadter::{
    bloch_hamiltonian, gap_certificate, kspace_chern, one_body_chern, random_local_probe, ChernMethod, HofstadterModel, OneBodyModel,
    SpectralCache,
};
use hallflow::interactions::{parse_operator, Interaction};
use hallflow::neass::{dress_state, neass_generators, order_conditions, stationarity_residual};
use hallflow::quasi_free::{current_correlations, segment_stats, BlochProjection};
use hallflow::response::{chern_simons_check, correlation_decay, hall_conductivity, response_scan, ConductanceStats};
use hallflow::{linalg, FockOperator, Flux, Site, State, TorusLattice};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::cache::{CacheOutcome, EigenCache};
use crate::config::{parse_flux, RunConfig};
use crate::manifest::{csv_bytes, json_bytes, Artifact, Timings};
use crate::selftest;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Spectrum,
    GapMap,
    Chern,
    Sigma,
    EdGround,
    NeassScan,
    CsCheck,
    ConductanceVar,
    Selftest,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::GapMap => "gap-map",
            Command::Chern => "chern",
            Command::Sigma => "sigma",
            Command::EdGround => "ed-ground",
            Command::NeassScan => "neass-scan",
            Command::CsCheck => "cs-check",
            Command::ConductanceVar => "conductance-var",
            Command::Selftest => "selftest",
        }
    }
}

/// State shared by one run.
pub struct Run {
    pub config: RunConfig,
    pub cache: EigenCache,
    pub timings: Timings,
    pub artifacts: Vec<Artifact>,
    pub warnings: Vec<String>,
}

impl Run {
    pub fn new(config: RunConfig, cache: EigenCache) -> Self {
        Run { config, cache, timings: Timings::default(), artifacts: Vec::new(), warnings: Vec::new() }
    }

    fn emit_csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        if self.config.wants("csv") {
            self.artifacts.push(Artifact { name: format!("{name}.csv"), bytes: csv_bytes(rows)? });
        }
        Ok(())
    }

    fn emit_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        if self.config.wants("json") {
            self.artifacts.push(Artifact { name: format!("{name}.json"), bytes: json_bytes(value)? });
        }
        Ok(())
    }

    fn warn(&mut self, msg: String) {
        eprintln!("warning: {msg}");
        self.warnings.push(msg);
    }

    pub fn execute(&mut self, cmd: Command) -> Result<()> {
        match cmd {
            Command::Spectrum => self.spectrum(),
            Command::GapMap => self.gap_map(),
            Command::Chern => self.chern(),
            Command::Sigma => self.sigma(),
            Command::EdGround => self.ed_ground(),
            Command::NeassScan => self.neass_scan(),
            Command::CsCheck => self.cs_check(),
            Command::ConductanceVar => self.conductance_var(),
            Command::Selftest => self.selftest(),
        }
    }

    fn flux_grid(&self) -> Result<Vec<Flux>> {
        let cfg = &self.config;
        let grid: Vec<Flux> = if !cfg.scan.fluxes.is_empty() {
            cfg.scan.fluxes.iter().map(|f| parse_flux(f)).collect::<Result<_>>()?
        } else if cfg.scan.all_quantized {
            (0..cfg.lattice.l as i64).map(|p| Flux::new(p, cfg.lattice.l as u64)).collect()
        } else {
            bail!("empty flux grid: set scan.fluxes or scan.all_quantized");
        };
        Ok(grid.into_iter().map(reduce).collect())
    }

    fn one_body_scan(&mut self) -> Result<Vec<(Flux, OneBodyModel)>> {
        let l = self.config.lattice.l;
        let grid = self.flux_grid()?;
        self.timings.stage("diagonalize", || {
            grid.par_iter()
                .map(|&f| Ok((f, OneBodyModel::with_flux(l, f, 0.0)?)))
                .collect::<Result<Vec<_>>>()
        })
    }

    fn spectrum(&mut self) -> Result<()> {
        #[derive(Serialize)]
        struct Row {
            b: f64,
            index: usize,
            eigenvalue: f64,
        }
        let models = self.one_body_scan()?;
        let rows: Vec<Row> = models
            .iter()
            .flat_map(|(f, m)| m.values.iter().enumerate().map(move |(index, &eigenvalue)| Row { b: f.b(), index, eigenvalue }))
            .collect();
        self.emit_csv("spectrum", &rows)?;
        let summary: Vec<_> = models
            .iter()
            .map(|(f, m)| {
                serde_json::json!({
                    "flux": f.to_string(),
                    "b": f.b(),
                    "count": m.values.len(),
                    "min": m.values[0],
                    "max": m.values[m.values.len() - 1],
                })
            })
            .collect();
        self.emit_json("spectrum", &serde_json::json!({ "l": self.config.lattice.l, "fluxes": summary }))
    }

    fn gap_map(&mut self) -> Result<()> {
        #[derive(Serialize)]
        struct Row {
            b: f64,
            mu_gap_low: f64,
            mu_gap_high: f64,
            chern_label: String,
        }
        let models = self.one_body_scan()?;
        let l2 = (self.config.lattice.l * self.config.lattice.l) as u64;
        let min_gap = self.config.scan.min_gap;
        let rows: Vec<Row> = self.timings.stage("label", || {
            models
                .par_iter()
                .map(|(f, m)| {
                    m.spectral_gaps(min_gap)
                        .into_iter()
                        .map(|(lo, hi)| {
                            let below = m.values.iter().filter(|&&e| e <= lo).count() as u64;
                            let label = if (below * f.q) % l2 == 0 {
                                kspace_chern(*f, (below * f.q / l2) as usize).map(|c| c.chern.to_string()).unwrap_or_default()
                            } else {
                                String::new()
                            };
                            Row { b: f.b(), mu_gap_low: lo, mu_gap_high: hi, chern_label: label }
                        })
                        .collect::<Vec<_>>()
                })
                .collect::<Vec<_>>()
                .into_iter()
                .flatten()
                .collect()
        });
        self.emit_csv("gap_map", &rows)?;
        self.emit_json("gap_map", &serde_json::json!({ "l": self.config.lattice.l, "min_gap": min_gap, "gaps": rows.len() }))
    }

    fn chern(&mut self) -> Result<()> {
        #[derive(Serialize)]
        struct Row {
            method: &'static str,
            value: f64,
        }
        let lat = self.config.lattice()?;
        let mu = self.config.model.mu;
        let m = self.timings.stage("diagonalize", || OneBodyModel::new(&lat, mu))?;
        let mut m = m;
        m.flux = self.config.flux()?;
        let (dc, od) = self.timings.stage("traces", || -> Result<_> {
            Ok((one_body_chern(&m, ChernMethod::DoubleCommutator)?, one_body_chern(&m, ChernMethod::OffDiagonal)?))
        })?;
        let mut rows = vec![Row { method: "double_commutator", value: dc }, Row { method: "off_diagonal", value: od }];
        let kspace = match m.flux {
            Some(f) => {
                let f = reduce(f);
                let below = m.filling() as u64;
                let l2 = (lat.l * lat.l) as u64;
                if (below * f.q) % l2 == 0 {
                    kspace_chern(f, (below * f.q / l2) as usize).ok()
                } else {
                    None
                }
            }
            None => None,
        };
        if let Some(k) = &kspace {
            rows.push(Row { method: "kspace_over_2pi", value: k.chern as f64 / (2.0 * std::f64::consts::PI) });
        }
        self.emit_csv("chern", &rows)?;
        self.emit_json(
            "chern",
            &serde_json::json!({
                "l": lat.l,
                "b": lat.b,
                "mu": mu,
                "filling": m.filling(),
                "gap": m.gap(),
                "double_commutator": dc,
                "off_diagonal": od,
                "kspace_chern": kspace.as_ref().map(|k| k.chern),
            }),
        )
    }

    /// Many-body model and its (cached) spectral data, with a gap check.
    fn many_body(&mut self) -> Result<(HofstadterModel, SpectralCache, State)> {
        let lat = self.config.lattice()?;
        let pieces = self.config.interaction_pieces(&lat)?;
        let model = HofstadterModel::new(&lat, self.config.model.mu, self.config.model.lambda, pieces)?;
        let h = model.total().matrix().clone();
        let cache = &mut self.cache;
        let (spec, outcome) = self.timings.stage("eigen", || cache.eigen(&h))?;
        if outcome == CacheOutcome::Rejected {
            let w = self.cache.warnings().last().cloned().unwrap_or_default();
            self.warnings.push(w);
        }
        if spec.gap < 1e-8 || !spec.gap.is_finite() {
            let excerpt: Vec<String> = spec.values.iter().take(8).map(|e| format!("{e:.10}")).collect();
            bail!(
                "no spectral gap above the ground state (gap {:.3e}, ground multiplicity {}); lowest levels: [{}]",
                spec.gap,
                spec.ground_dim,
                excerpt.join(", ")
            );
        }
        let state = spec.ground_state();
        Ok((model, spec, state))
    }

    fn probes(&self, lat: &TorusLattice, stream: u64, count: usize) -> Vec<FockOperator> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(stream);
        (0..count)
            .map(|_| {
                let a = random_local_probe(lat, &mut rng, 3);
                let c = lat.site(a.modes()[0]);
                a.with_center(c)
            })
            .collect()
    }

    fn sigma(&mut self) -> Result<()> {
        #[derive(Serialize)]
        struct Row {
            quantity: &'static str,
            value: f64,
        }
        let (model, spec, state) = self.many_body()?;
        let kernel = self.config.kernel(spec.gap);
        let ctx = FlowContext::new(&model.hamiltonian, &spec, &kernel);
        let hall = self.timings.stage("hall", || hall_conductivity(&ctx, &state))?;
        if hall.imaginary_residue > self.config.tolerances.imaginary_residue {
            self.warn(format!("discarded imaginary part {:.3e} of sigma_H", hall.imaginary_residue));
        }
        let one = OneBodyModel::new(&model.lat, model.mu)?;
        let (dc, od) = self.timings.stage("one-body", || -> Result<_> {
            Ok((one_body_chern(&one, ChernMethod::DoubleCommutator)?, one_body_chern(&one, ChernMethod::OffDiagonal)?))
        })?;
        let rows = vec![
            Row { quantity: "sigma_h", value: hall.sigma },
            Row { quantity: "sigma_swapped", value: hall.swapped },
            Row { quantity: "one_body_off_diagonal", value: od },
            Row { quantity: "one_body_double_commutator", value: dc },
        ];
        self.emit_csv("sigma", &rows)?;
        self.emit_json(
            "sigma",
            &serde_json::json!({
                "l": model.lat.l,
                "b": model.lat.b,
                "mu": model.mu,
                "lambda": model.lambda,
                "ground_energy": spec.ground_energy,
                "ground_multiplicity": spec.ground_dim,
                "gap": spec.gap,
                "filter": kernel,
                "sigma_h": hall.sigma,
                "sigma_swapped": hall.swapped,
                "imaginary_residue": hall.imaginary_residue,
                "one_body_off_diagonal": od,
                "one_body_double_commutator": dc,
                "one_body_gap": one.gap(),
            }),
        )
    }

    fn ed_ground(&mut self) -> Result<()> {
        #[derive(Serialize)]
        struct Row {
            index: usize,
            energy: f64,
        }
        let (model, spec, state) = self.many_body()?;
        let kernel = self.config.kernel(spec.gap);
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        let samples = self.config.ed.certificate_probes;
        let cert =
            self.timings.stage("certificate", || gap_certificate(&state, &model.hamiltonian, kernel.g, samples, &mut rng))?;
        let n = Interaction::number(&model.lat);
        let density = n.per_volume_expectation(&state)?;
        let energy = model.hamiltonian.per_volume_expectation(&state)?;
        let rows: Vec<Row> = spec.values.iter().enumerate().map(|(index, &energy)| Row { index, energy }).collect();
        self.emit_csv("ed_spectrum", &rows)?;
        self.emit_json(
            "ed_ground",
            &serde_json::json!({
                "l": model.lat.l,
                "b": model.lat.b,
                "mu": model.mu,
                "lambda": model.lambda,
                "dimension": spec.dim(),
                "ground_energy": spec.ground_energy,
                "ground_multiplicity": spec.ground_dim,
                "gap": spec.gap,
                "density": density,
                "energy_per_site": energy,
                "certificate": cert,
            }),
        )
    }

    fn neass_scan(&mut self) -> Result<()> {
        #[derive(Serialize)]
        struct Row {
            epsilon: f64,
            j1: f64,
            j2: f64,
            j1_volume: f64,
            j2_volume: f64,
            stationarity_residual: f64,
            s_norm_over_eps: f64,
        }
        let order = self.config.neass.order;
        if !(1..=4).contains(&order) {
            bail!("neass.order = {order} is outside 1..=4");
        }
        let (model, spec, state) = self.many_body()?;
        let kernel = self.config.kernel(spec.gap);
        let ctx = FlowContext::new(&model.hamiltonian, &spec, &kernel);
        let v = &model.interaction;
        let gens = self.timings.stage("generators", || neass_generators(&ctx, v, order))?;
        let sigma = self.timings.stage("hall", || hall_conductivity(&ctx, &state))?.sigma;
        let grid = self.config.neass.epsilon.clone();
        let report = self.timings.stage("response", || response_scan(&ctx, &state, &gens, v, &grid, sigma))?;
        let probes = self.probes(&model.lat, 1, self.config.neass.probes);
        let conditions = self.timings.stage("order-conditions", || order_conditions(&ctx, &gens, &state, &probes))?;
        let mut rows = Vec::new();
        let mut residuals = Vec::new();
        self.timings.stage("stationarity", || -> Result<()> {
            for r in &report.rows {
                let dressed = dress_state(&state, &gens, r.epsilon)?;
                let res = stationarity_residual(&dressed, &model.hamiltonian, v, &probes, 1)?;
                let s_norm = if r.epsilon > 0.0 { dressed.s_total.norm() / r.epsilon } else { gens.totals[0].norm() };
                residuals.push(res);
                rows.push(Row {
                    epsilon: r.epsilon,
                    j1: r.j1,
                    j2: r.j2,
                    j1_volume: r.j1_volume,
                    j2_volume: r.j2_volume,
                    stationarity_residual: res,
                    s_norm_over_eps: s_norm,
                });
            }
            Ok(())
        })?;
        let route = report.rows.iter().map(|r| (r.j1 - r.j1_volume).abs().max((r.j2 - r.j2_volume).abs())).fold(0.0, f64::max);
        if route > self.config.tolerances.volume_route {
            self.warn(format!("origin and volume routes differ by {route:.3e}"));
        }
        self.emit_csv("neass_scan", &rows)?;
        self.emit_json(
            "neass_scan",
            &serde_json::json!({
                "m": order,
                "epsilon": grid,
                "residuals": residuals,
                "sigma_h": sigma,
                "hall_fit": report.hall_fit,
                "longitudinal_fit": report.longitudinal_fit,
                "longitudinal_max": report.longitudinal_max,
                "order_conditions": conditions,
                "route_agreement": route,
            }),
        )
    }

    fn cs_check(&mut self) -> Result<()> {
        let (model, spec, state) = self.many_body()?;
        let lat = model.lat.clone();
        let (piece, description) = match &self.config.cs.generator {
            Some(expr) => (parse_operator(&lat, expr)?, expr.clone()),
            None => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
                rng.set_stream(2);
                let frame = [lat.index(Site::ORIGIN), lat.index(lat.shift(Site::ORIGIN, (1, 0)))];
                let mut frame = frame.to_vec();
                frame.sort_unstable();
                (FockOperator::random_gauge_invariant(&frame, &mut rng, true), "random two-site".to_string())
            }
        };
        if !piece.is_self_adjoint(1e-12) {
            bail!("cs.generator {description:?} is not self-adjoint");
        }
        let generator = Interaction::periodic_from_pieces(&lat, &[piece.with_center(Site::ORIGIN)]);
        let kernel = self.config.kernel(spec.gap);
        let ctx = FlowContext::new(&model.hamiltonian, &spec, &kernel);
        let strength = self.config.cs.strength;
        let cs = self.timings.stage("chern-simons", || chern_simons_check(&ctx, &state, &generator, strength))?;
        self.emit_csv("cs_check", &[cs])?;
        self.emit_json(
            "cs_check",
            &serde_json::json!({
                "generator": description,
                "strength": strength,
                "before": cs.before,
                "after": cs.after,
                "delta": cs.delta,
            }),
        )
    }

    fn conductance_var(&mut self) -> Result<()> {
        let cfg = &self.config.conductance;
        let side = cfg.side;
        let eps = cfg.epsilon;
        let flux = self.config.flux()?.ok_or_else(|| anyhow!("conductance-var needs a rational lattice.flux"))?;
        let mu = self.config.model.mu;
        let one_gap = bloch_gap(side, flux, mu)?;
        let kernel = self.config.kernel(one_gap);
        let lat = TorusLattice::with_flux(side, flux)?;
        let segments = cfg.segments.clone();
        let max_d = cfg.max_distance;
        let p = self.timings.stage("projection", || BlochProjection::new(side, flux, mu, &kernel, eps))?;
        let rows: Vec<ConductanceStats> = self.timings.stage("segments", || -> Result<_> {
            segments
                .iter()
                .map(|&s| {
                    let st = segment_stats(&lat, &p, s)?;
                    Ok(ConductanceStats::from_current(s, eps, st.mean_current, st.variance_current))
                })
                .collect::<Result<Vec<_>>>()
        })?;
        let floor = self.config.tolerances.correlation_floor;
        let decay = self.timings.stage("correlations", || correlation_decay(current_correlations(&lat, &p, max_d), floor));
        let scaled: Vec<f64> = rows.iter().map(|r| r.scaled_variance).collect();
        let ratio = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max) / scaled.iter().cloned().fold(f64::INFINITY, f64::min);
        #[derive(Serialize)]
        struct Corr {
            distance: usize,
            correlation: f64,
        }
        let corr: Vec<Corr> = decay.correlations.iter().map(|&(distance, correlation)| Corr { distance, correlation }).collect();
        self.emit_csv("conductance", &rows)?;
        self.emit_csv("current_correlations", &corr)?;
        self.emit_json(
            "conductance",
            &serde_json::json!({
                "side": side,
                "flux": flux.to_string(),
                "mu": mu,
                "epsilon": eps,
                "filter_g": kernel.g,
                "rows": rows,
                "scaled_variance_ratio": ratio,
                "decay_rate": decay.rate,
                "decay_r2": decay.r2,
            }),
        )
    }

    fn selftest(&mut self) -> Result<()> {
        let seed = self.config.seed;
        let cases = self.config.selftest.cases;
        let tol = self.config.tolerances.clone();
        let report = self.timings.stage("selftest", || selftest::run(seed, cases, &tol))?;
        self.emit_csv("selftest", &report.checks)?;
        self.emit_json("selftest", &report)?;
        if !report.passed {
            let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
            self.warn(format!("selftest failures: {}", failed.join(", ")));
        }
        Ok(())
    }
}

/// dist(mu, spectrum) of the one-body kernel on the side-`l` torus, from the
/// magnetic Bloch blocks.
pub fn bloch_gap(l: usize, flux: Flux, mu: f64) -> Result<f64> {
    let q = flux.q as usize;
    if l % q != 0 {
        bail!("flux {flux} needs q | L, got L = {l}");
    }
    let cells = l / q;
    let mut gap = f64::INFINITY;
    for i1 in 0..l {
        for i2 in 0..cells {
            let k1 = 2.0 * std::f64::consts::PI * i1 as f64 / l as f64;
            let k2 = 2.0 * std::f64::consts::PI * i2 as f64 / cells as f64;
            let (e, _) = linalg::eigh(bloch_hamiltonian(flux, k1, k2).as_ref());
            gap = e.iter().map(|x| (x - mu).abs()).fold(gap, f64::min);
        }
    }
    Ok(gap)
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// p/q in lowest terms.
pub fn reduce(f: Flux) -> Flux {
    let g = gcd(f.p.unsigned_abs(), f.q).max(1);
    Flux::new(f.p / g as i64, f.q / g)
}
