//! Sensitivity of the implied `ζ₀` to the Monte Carlo sample: for each market
//! size, independent batches of inner paths each give one `ζ₀`, compared with
//! the closed form `f(0) w₀^{−R}`.

use std::path::PathBuf;
use std::time::Instant;

use dualmc_core::benchmarks::MertonSolution;
use dualmc_core::dual_bounds::DualSolver;
use dualmc_core::market_model::MarketModel;
use dualmc_core::path_engine::derive_seed;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{row, sampling, RunOptions};
use crate::config::{MertonTableConfig, TableRandomization};
use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct TableRow {
    pub dim: usize,
    pub zeta0_analytic: f64,
    pub zeta0_mean: f64,
    /// Sample standard deviation over batches, 0 for a single batch.
    pub zeta0_stdev: f64,
    pub zeta0_batches: Vec<f64>,
    pub seconds_per_run: f64,
}

#[derive(Clone, Debug)]
pub struct TableOutcome {
    pub rows: Vec<TableRow>,
    pub files: Vec<PathBuf>,
}

/// Draws `μ ~ U[mu]` per coordinate and `σ` with entries `U[sigma]`, redrawing
/// `σ` until `σσᵀ` is positive definite with condition number at most
/// `max_condition`.
pub fn draw_table_market(dim: usize, rz: &TableRandomization, seed: u64) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "table-market", dim as u64));
    let mu = DVector::from_fn(dim, |_, _| rng.random_range(rz.mu[0]..=rz.mu[1]));
    for _ in 0..rz.max_redraws {
        let sigma = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(rz.sigma[0]..rz.sigma[1]));
        let eig = (&sigma * sigma.transpose()).symmetric_eigenvalues();
        let (lo, hi) = (eig.min(), eig.max());
        if lo > 0.0 && hi <= rz.max_condition * lo {
            return Ok((mu, sigma));
        }
    }
    Err(CliError::RegularityRejection { attempts: rz.max_redraws })
}

pub fn run_merton_table(cfg: &MertonTableConfig, opts: &RunOptions) -> Result<TableOutcome> {
    let utility = cfg.utility.build()?;
    let grid = cfg.simulation.grid()?;
    let horizon = cfg.simulation.horizon();
    let dims: Vec<usize> = match (&cfg.market, cfg.dims.is_empty()) {
        (Some(m), true) => vec![m.mu.len()],
        _ => cfg.dims.clone(),
    };

    let mut rows = Vec::with_capacity(dims.len());
    for &dim in &dims {
        let model = match (&cfg.market, &cfg.randomization) {
            (Some(m), _) => m.build()?,
            (None, Some(rz)) => {
                let (mu, sigma) = draw_table_market(dim, rz, opts.seed)?;
                MarketModel::constant(rz.r, mu, sigma)?
            }
            (None, None) => return Err(CliError::config("market", "missing market")),
        };
        let analytic = MertonSolution::new(&model, &utility, horizon)?.zeta0(cfg.w0);
        let solver = DualSolver::new(&model, &utility, &grid);
        let mut values = Vec::with_capacity(cfg.batches);
        let start = Instant::now();
        for b in 0..cfg.batches {
            let seed = derive_seed(opts.inner_seed(dim as u64), "batch", b as u64);
            values.push(solver.find_zeta0(0, cfg.w0, &[], sampling(&cfg.simulation, seed), None)?.zeta0);
        }
        let seconds_per_run = start.elapsed().as_secs_f64() / cfg.batches as f64;
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let stdev = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
        } else {
            0.0
        };
        log::info!("K = {dim}: analytic {analytic}, mean {mean}, stdev {stdev}");
        rows.push(TableRow {
            dim,
            zeta0_analytic: analytic,
            zeta0_mean: mean,
            zeta0_stdev: stdev,
            zeta0_batches: values,
            seconds_per_run,
        });
    }

    let sim = &cfg.simulation;
    let mut table = String::from("K,zeta0_analytic,zeta0_mean,zeta0_stdev,batches,M,N,seed\n");
    let mut timing = String::from("K,seconds_per_run\n");
    let mut batches = String::from("K,batch,zeta0\n");
    for r in &rows {
        table.push_str(&row([
            r.dim.to_string(),
            r.zeta0_analytic.to_string(),
            r.zeta0_mean.to_string(),
            r.zeta0_stdev.to_string(),
            cfg.batches.to_string(),
            sim.paths.to_string(),
            sim.steps.to_string(),
            opts.seed.to_string(),
        ]));
        table.push('\n');
        timing.push_str(&format!("{},{}\n", r.dim, r.seconds_per_run));
        for (b, v) in r.zeta0_batches.iter().enumerate() {
            batches.push_str(&format!("{},{b},{v}\n", r.dim));
        }
    }
    let mut files = vec![opts.write("merton_table.csv", &table)?, opts.write("merton_table_timing.csv", &timing)?];
    if opts.dump_paths {
        files.push(opts.write("merton_table_batches.csv", &batches)?);
    }
    Ok(TableOutcome { rows, files })
}
