//! Builds a Brownian-path quantizer and writes it in the grid file format.

use std::path::PathBuf;

use dualmc_core::benchmarks::Quantizer;

use super::RunOptions;
use crate::config::QuantizerBuildConfig;
use crate::error::{CliError, Result};

pub fn run_quantizer_build(cfg: &QuantizerBuildConfig, opts: &RunOptions) -> Result<PathBuf> {
    let q = Quantizer::build(cfg.dim, cfg.points)?.scaled(cfg.horizon);
    std::fs::create_dir_all(&opts.out_dir)
        .map_err(|e| CliError::Io { path: opts.out_dir.display().to_string(), source: e })?;
    let path = opts.out_dir.join(&cfg.file);
    q.write(&path)?;
    log::info!("wrote {} points in dimension {} to {}", q.n_points(), q.dim, path.display());
    Ok(path)
}
