//! Instance loading, cached eigendecomposition and step-size selection.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use simcim_core::problem::{generate_erdos_renyi, read_gset, CouplingMatrix};
use simcim_core::simcim::{find_learning_rate, LearningRateTest};
use simcim_core::spectral::{eigendecompose, matrix_digest, SpectralDecomposition};

use crate::config::RunConfig;

#[derive(Debug, Clone)]
pub struct Instance {
    pub name: String,
    pub matrix: CouplingMatrix,
    pub best_known: Option<i64>,
}

impl Instance {
    pub fn from_file(path: &Path, best_known: Option<i64>) -> Result<Self> {
        if !path.is_file() {
            anyhow::bail!("instance file {} does not exist", path.display());
        }
        let g = read_gset(path).with_context(|| format!("reading instance {}", path.display()))?;
        Ok(Self {
            name: g.name,
            matrix: g.matrix,
            best_known: best_known.or(g.best_known_cut),
        })
    }

    /// The configured file, or a random graph drawn with `seed`.
    pub fn from_config(config: &RunConfig, seed: u64) -> Result<Self> {
        let inst = &config.instance;
        match &inst.path {
            Some(path) => Self::from_file(path, inst.best_known),
            None => {
                let matrix = generate_erdos_renyi(inst.n, inst.connect_prob, inst.weights.into(), seed)?;
                Ok(Self {
                    name: format!("er-n{}-p{}-s{seed}", inst.n, inst.connect_prob),
                    matrix,
                    best_known: inst.best_known,
                })
            }
        }
    }
}

fn cache_file(dir: &Path, digest: &str) -> PathBuf {
    dir.join(format!("{digest}.eig"))
}

/// Eigendecomposition, read from or written to the cache directory when one is set.
pub fn decompose(matrix: &CouplingMatrix, cache_dir: Option<&Path>) -> Result<SpectralDecomposition> {
    let Some(dir) = cache_dir else {
        return Ok(eigendecompose(matrix)?);
    };
    let digest = matrix_digest(matrix);
    let path = cache_file(dir, &digest);
    if path.exists() {
        match SpectralDecomposition::load_cache(&path, &digest) {
            Ok(Some(d)) => {
                log::debug!("spectral cache hit {}", path.display());
                return Ok(d);
            }
            Ok(None) => log::warn!("stale spectral cache {}; recomputing", path.display()),
            Err(e) => log::warn!("unreadable spectral cache {}: {e}; recomputing", path.display()),
        }
    }
    let d = eigendecompose(matrix)?;
    std::fs::create_dir_all(dir).with_context(|| format!("creating cache directory {}", dir.display()))?;
    d.save_cache(&path, &digest)?;
    Ok(d)
}

/// Configured `μ`, or the learning-rate test result with its trace.
pub fn step_size(
    config: &RunConfig,
    matrix: &CouplingMatrix,
    decomp: &SpectralDecomposition,
    seed: u64,
) -> Result<(f64, Option<LearningRateTest>)> {
    match config.simcim.learning_rate {
        Some(mu) => Ok((mu, None)),
        None => {
            let test = find_learning_rate(matrix, decomp, &config.simcim.to_core(), seed)?;
            log::info!("learning-rate test selected mu = {:.4e}", test.learning_rate);
            Ok((test.learning_rate, Some(test)))
        }
    }
}
