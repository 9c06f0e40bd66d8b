//! Output artifacts and the run manifest.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{RunConfig, Tolerances};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Tolerances fixed inside the library.
pub fn fixed_tolerances() -> BTreeMap<&'static str, f64> {
    BTreeMap::from([
        ("ground_degeneracy", hallflow::hofstadter::DEGENERACY_TOL),
        ("mu_distance", 1e-8),
        ("gap_certificate_slack", 1e-9),
        ("flux_quantization", 1e-12),
        ("variance_floor", 1e-14),
    ])
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Debug)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

#[derive(Clone, Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Default)]
pub struct Timings {
    stages: Vec<StageTiming>,
}

impl Timings {
    pub fn stage<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.stages.push(StageTiming { stage: name.into(), seconds: start.elapsed().as_secs_f64() });
        out
    }

    pub fn into_stages(self) -> Vec<StageTiming> {
        self.stages
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub tolerances: Tolerances,
    pub fixed_tolerances: BTreeMap<&'static str, f64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub timings: Vec<StageTiming>,
    pub warnings: Vec<String>,
    /// Digest of everything above except timings, warnings and input paths.
    pub digest: String,
}

#[derive(Serialize)]
struct DigestBody<'a> {
    command: &'a str,
    version: &'a str,
    config_hash: &'a str,
    seed: u64,
    tolerances: &'a Tolerances,
    fixed_tolerances: &'a BTreeMap<&'static str, f64>,
    outputs: &'a [FileDigest],
}

/// Hash of the normalized configuration, independent of TOML layout.
pub fn config_hash(cfg: &RunConfig) -> String {
    sha256_hex(cfg.to_toml().as_bytes())
}

impl RunManifest {
    pub fn new(
        command: &str,
        cfg: &RunConfig,
        inputs: Vec<FileDigest>,
        artifacts: &[Artifact],
        timings: Vec<StageTiming>,
        warnings: Vec<String>,
    ) -> Self {
        let outputs: Vec<FileDigest> =
            artifacts.iter().map(|a| FileDigest { path: a.name.clone(), sha256: sha256_hex(&a.bytes) }).collect();
        let fixed = fixed_tolerances();
        let config_hash = config_hash(cfg);
        let body = DigestBody {
            command,
            version: VERSION,
            config_hash: &config_hash,
            seed: cfg.seed,
            tolerances: &cfg.tolerances,
            fixed_tolerances: &fixed,
            outputs: &outputs,
        };
        let digest = sha256_hex(&serde_json::to_vec(&body).expect("manifest serializes"));
        RunManifest {
            command: command.into(),
            version: VERSION.into(),
            config_hash,
            seed: cfg.seed,
            tolerances: cfg.tolerances.clone(),
            fixed_tolerances: fixed,
            inputs,
            outputs,
            timings,
            warnings,
            digest,
        }
    }
}

pub fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().context("flushing csv")
}

pub fn json_bytes<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

/// Writes the artifacts and `manifest.json` into `dir`.
pub fn write_outputs(dir: &Path, artifacts: &[Artifact], manifest: &RunManifest) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for a in artifacts {
        let path = dir.join(&a.name);
        std::fs::write(&path, &a.bytes).with_context(|| format!("writing {}", path.display()))?;
    }
    std::fs::write(dir.join("manifest.json"), json_bytes(manifest)?)?;
    Ok(())
}
