//! The experiment suites. Each scenario returns its results in memory and
//! writes them as CSV files named after the scenario.

mod incomplete;
mod merton_path;
mod merton_table;
mod mixture;
mod quantizer;

use std::fmt::Display;
use std::path::{Path, PathBuf};

use dualmc_core::dual_bounds::Sampling;
use dualmc_core::path_engine::{derive_seed, TimeGrid};
use nalgebra::DMatrix;

use crate::config::{ExperimentConfig, SimulationConfig};
use crate::error::{CliError, Result};

pub use incomplete::{draw_incomplete_market, run_incomplete, IncompleteMarket, IncompleteOutcome};
pub use merton_path::{run_merton_path, MertonPathOutcome};
pub use merton_table::{draw_table_market, run_merton_table, TableOutcome, TableRow};
pub use mixture::{run_mixture_compare, MethodResult, MixtureOutcome};
pub use quantizer::run_quantizer_build;

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub seed: u64,
    /// Also write the world-path increments and per-batch values.
    pub dump_paths: bool,
}

impl RunOptions {
    /// Seed of the realised world path.
    pub fn world_seed(&self) -> u64 {
        derive_seed(self.seed, "world", 0)
    }

    /// Seed of the inner Monte Carlo paths for stream `index`.
    pub fn inner_seed(&self, index: u64) -> u64 {
        derive_seed(self.seed, "inner", index)
    }

    pub(crate) fn write(&self, name: &str, contents: &str) -> Result<PathBuf> {
        write_file(&self.out_dir, name, contents)
    }
}

/// Runs the configured scenario and returns the files it wrote.
pub fn run(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<PathBuf>> {
    let files = match cfg {
        ExperimentConfig::MertonPath(c) => run_merton_path(c, opts)?.files,
        ExperimentConfig::MertonTable(c) => run_merton_table(c, opts)?.files,
        ExperimentConfig::MixtureCompare(c) => run_mixture_compare(c, opts)?.files,
        ExperimentConfig::Incomplete(c) => run_incomplete(c, opts)?.files,
        ExperimentConfig::QuantizerBuild(c) => vec![run_quantizer_build(c, opts)?],
    };
    Ok(files)
}

pub(crate) fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    let io = |e: std::io::Error, p: &Path| CliError::Io { path: p.display().to_string(), source: e };
    std::fs::create_dir_all(dir).map_err(|e| io(e, dir))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| io(e, &path))?;
    Ok(path)
}

pub(crate) fn sampling(sim: &SimulationConfig, seed: u64) -> Sampling {
    Sampling { paths: sim.paths, seed, importance: sim.importance }
}

/// Comma-joined row.
pub(crate) fn row<T: Display>(cells: impl IntoIterator<Item = T>) -> String {
    cells.into_iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",")
}

/// CSV of world-path increments, one row per step.
pub(crate) fn increments_csv(grid: &TimeGrid, dw: &DMatrix<f64>) -> String {
    let mut out = row(std::iter::once("t".to_string()).chain((1..=dw.ncols()).map(|i| format!("dW{i}"))));
    out.push('\n');
    for n in 0..dw.nrows() {
        out.push_str(&row(std::iter::once(grid.t(n)).chain(dw.row(n).iter().copied())));
        out.push('\n');
    }
    out
}

/// `|a − b| / min(|a|, |b|)`
pub fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().min(b.abs())
}
