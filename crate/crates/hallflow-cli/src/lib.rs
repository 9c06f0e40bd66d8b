//! Configuration-driven runs of the hallflow computations: TOML configs,
//! CSV/JSON outputs, run manifests and an on-disk eigendecomposition cache.

pub mod cache;
pub mod commands;
pub mod config;
pub mod manifest;
pub mod selftest;

use std::path::{Path, PathBuf};

use anyhow::Result;

pub use cache::{CacheOutcome, EigenCache};
pub use commands::{Command, Run};
pub use config::RunConfig;
pub use manifest::{Artifact, RunManifest};

/// Runs `cmd` and writes its outputs and manifest into `out`.
pub fn run_to_dir(cmd: Command, config: RunConfig, config_path: Option<&Path>, out: &Path) -> Result<RunManifest> {
    let cache_dir: PathBuf = out.join(&config.outputs.cache);
    let tol = config.tolerances.cache_reconstruction;
    let mut run = Run::new(config, EigenCache::new(cache_dir, tol));
    run.execute(cmd)?;
    let inputs = match config_path {
        Some(p) => vec![manifest::FileDigest {
            path: p.display().to_string(),
            sha256: manifest::sha256_hex(&std::fs::read(p)?),
        }],
        None => Vec::new(),
    };
    let manifest = RunManifest::new(
        cmd.name(),
        &run.config,
        inputs,
        &run.artifacts,
        run.timings.into_stages(),
        run.warnings,
    );
    manifest::write_outputs(out, &run.artifacts, &manifest)?;
    Ok(manifest)
}

/// Default configuration for commands run without `--config`.
pub fn default_config() -> RunConfig {
    RunConfig::from_toml("[lattice]\nl = 3\nflux = \"1/3\"\n").expect("default config is valid")
}
