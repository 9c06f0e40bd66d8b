//! Eigendecomposition cache keyed by the SHA-256 of the matrix bytes.
//!
//! Entries are `<digest>.vals.bin` (eigenvalues as a complex vector with zero
//! imaginary parts) and `<digest>.vecs.bin` (eigenvector matrix), both in the
//! binary format of `hallflow::matrix_io`. Files are written to a temporary
//! name and renamed into place. An entry is used only if it reconstructs the
//! matrix; anything else is reported and recomputed.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use hallflow::hofstadter::SpectralCache;
use hallflow::matrix_io::{read_matrix, read_vector, write_matrix, write_vector};
use hallflow::{c64, Mat};
use sha2::{Digest, Sha256};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CacheOutcome {
    Hit,
    Miss,
    /// An entry existed but failed to load or to reconstruct the matrix.
    Rejected,
}

pub struct EigenCache {
    dir: PathBuf,
    tolerance: f64,
    warnings: Vec<String>,
}

pub fn matrix_digest(m: &Mat<c64>) -> String {
    let mut bytes = Vec::new();
    write_matrix(&mut bytes, m).expect("square matrix");
    hex::encode(Sha256::digest(&bytes))
}

impl EigenCache {
    /// `tolerance` bounds the entrywise residual of H - U D U* relative to H.
    pub fn new(dir: impl Into<PathBuf>, tolerance: f64) -> Self {
        EigenCache { dir: dir.into(), tolerance, warnings: Vec::new() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn paths(&self, digest: &str) -> (PathBuf, PathBuf) {
        (self.dir.join(format!("{digest}.vals.bin")), self.dir.join(format!("{digest}.vecs.bin")))
    }

    /// Cached or freshly computed eigendecomposition of the hermitian `h`.
    pub fn eigen(&mut self, h: &Mat<c64>) -> Result<(SpectralCache, CacheOutcome)> {
        let digest = matrix_digest(h);
        let (vals, vecs) = self.paths(&digest);
        let mut outcome = CacheOutcome::Miss;
        if vals.exists() || vecs.exists() {
            match self.load(&vals, &vecs, h) {
                Ok(cache) => return Ok((cache, CacheOutcome::Hit)),
                Err(e) => {
                    let msg = format!("cache entry {digest} bypassed: {e:#}");
                    eprintln!("warning: {msg}");
                    self.warnings.push(msg);
                    outcome = CacheOutcome::Rejected;
                }
            }
        }
        let cache = SpectralCache::from_matrix(h);
        self.store(&digest, &cache)?;
        Ok((cache, outcome))
    }

    fn load(&self, vals: &Path, vecs: &Path, h: &Mat<c64>) -> Result<SpectralCache> {
        let values = read_vector(&mut BufReader::new(File::open(vals)?))?;
        let vectors = read_matrix(&mut BufReader::new(File::open(vecs)?))?;
        anyhow::ensure!(
            values.len() == h.nrows() && vectors.nrows() == h.nrows(),
            "dimension {} does not match the matrix ({})",
            values.len(),
            h.nrows()
        );
        anyhow::ensure!(values.iter().all(|z| z.im == 0.0 && z.re.is_finite()), "eigenvalues are not real");
        let cache = SpectralCache::from_parts(values.iter().map(|z| z.re).collect(), vectors);
        let err = cache.reconstruction_error(h);
        anyhow::ensure!(err <= self.tolerance, "reconstruction residual {err:.3e} exceeds {:.1e}", self.tolerance);
        Ok(cache)
    }

    fn store(&self, digest: &str, cache: &SpectralCache) -> Result<()> {
        fs::create_dir_all(&self.dir).with_context(|| format!("creating {}", self.dir.display()))?;
        let (vals, vecs) = self.paths(digest);
        let values: Vec<c64> = cache.values.iter().map(|&e| c64::new(e, 0.0)).collect();
        atomic_write(&vals, |w| Ok(write_vector(w, &values)?))?;
        atomic_write(&vecs, |w| Ok(write_matrix(w, &cache.vectors)?))?;
        Ok(())
    }
}

fn atomic_write(path: &Path, fill: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    {
        let mut w = BufWriter::new(File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?);
        fill(&mut w)?;
        w.flush()?;
    }
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}
