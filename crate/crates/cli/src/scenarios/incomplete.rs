//! Incomplete market driven by an Ornstein–Uhlenbeck factor: `n` stocks on a
//! `d`-dimensional Brownian motion that also drives `k` factors, with stock
//! volatility scaled by `1 + exp(−1·X)`. Parameters are drawn uniformly and
//! redrawn coordinate by coordinate until the regularity conditions hold.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use dualmc_core::dual_bounds::BoundsReport;
use dualmc_core::market_model::{Dimensions, MarketModel};
use dualmc_core::path_engine::{derive_seed, sample_increments};
use dualmc_core::pathwise::{run_path, PathwiseSettings, PolicyTrace};
use dualmc_core::rules::{LocalMerton, DEFAULT_CAP};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{increments_csv, sampling, RunOptions};
use crate::config::{IncompleteConfig, IncompleteRandomization};
use crate::error::{CliError, Result};

/// `dX = diag(reversion)(mean − X)dt + σ_X dW`, `σ(X) = σ₀ (1 + exp(−1·X))`.
#[derive(Clone, Debug, PartialEq)]
pub struct IncompleteMarket {
    pub r: f64,
    pub mu: DVector<f64>,
    pub sigma0: DMatrix<f64>,
    pub sigma_x: DMatrix<f64>,
    pub reversion: DVector<f64>,
    pub mean: DVector<f64>,
    /// Redraws spent before all constraints held.
    pub redraws: usize,
}

impl IncompleteMarket {
    pub fn model(&self) -> Result<MarketModel> {
        let (n, d) = self.sigma0.shape();
        let k = self.mean.len();
        let (r, mu, s0) = (self.r, self.mu.clone(), self.sigma0.clone());
        let (sx, rev, mean) = (self.sigma_x.clone(), self.reversion.clone(), self.mean.clone());
        Ok(MarketModel::new(
            Dimensions { n, d, k },
            Arc::new(move |_: &[f64]| r),
            Arc::new(move |_: &[f64]| mu.clone()),
            Arc::new(move |x: &[f64]| &s0 * (1.0 + (-x.iter().sum::<f64>()).exp())),
            Arc::new(move |_: &[f64]| sx.clone()),
            Arc::new(move |x: &[f64]| DVector::from_fn(k, |i, _| rev[i] * (mean[i] - x[i]))),
        )?)
    }
}

struct Redraws<'a> {
    rng: ChaCha8Rng,
    cfg: &'a IncompleteRandomization,
    used: usize,
}

impl Redraws<'_> {
    fn uniform(&mut self) -> f64 {
        self.rng.random_range(self.cfg.range[0]..self.cfg.range[1])
    }

    /// Draws until `accept` holds, charging every rejection to the budget.
    fn until(&mut self, accept: impl Fn(f64) -> bool) -> Result<f64> {
        loop {
            let v = self.uniform();
            if accept(v) {
                return Ok(v);
            }
            self.charge()?;
        }
    }

    fn charge(&mut self) -> Result<()> {
        self.used += 1;
        if self.used >= self.cfg.max_redraws {
            return Err(CliError::RegularityRejection { attempts: self.used });
        }
        Ok(())
    }
}

/// Draws every parameter from the configured uniform law, redrawing a
/// coordinate (or the whole of `σ₀`) until `μ ≥ r ≥ 0`, `σ₀` has full row
/// rank with `cond(σ₀σ₀ᵀ) ≤ max_condition`, and the mean-reversion rates are
/// positive.
pub fn draw_incomplete_market(
    n: usize,
    d: usize,
    k: usize,
    cfg: &IncompleteRandomization,
    seed: u64,
) -> Result<IncompleteMarket> {
    let mut dr = Redraws { rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, "incomplete-market", 0)), cfg, used: 0 };
    let r = dr.until(|v| v >= 0.0)?;
    let mut mu = DVector::zeros(n);
    for i in 0..n {
        mu[i] = dr.until(|v| v >= r)?;
    }
    let sigma0 = loop {
        let s = DMatrix::from_fn(n, d, |_, _| dr.uniform());
        let eig = (&s * s.transpose()).symmetric_eigenvalues();
        if eig.min() > 0.0 && eig.max() <= cfg.max_condition * eig.min() {
            break s;
        }
        dr.charge()?;
    };
    let mut reversion = DVector::zeros(k);
    for i in 0..k {
        reversion[i] = dr.until(|v| v > 0.0)?;
    }
    let mean = DVector::from_fn(k, |_, _| dr.uniform());
    let sigma_x = DMatrix::from_fn(k, d, |_, _| dr.uniform());
    Ok(IncompleteMarket { r, mu, sigma0, sigma_x, reversion, mean, redraws: dr.used })
}

#[derive(Clone, Debug)]
pub struct IncompleteOutcome {
    pub market: IncompleteMarket,
    pub trace: PolicyTrace,
    pub bounds: Vec<BoundsReport>,
    pub files: Vec<PathBuf>,
}

fn parameters_csv(m: &IncompleteMarket) -> String {
    let mut out = String::from("name,i,j,value\n");
    out.push_str(&format!("r,0,0,{}\n", m.r));
    let mut matrix = |name: &str, a: &DMatrix<f64>| {
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                out.push_str(&format!("{name},{i},{j},{}\n", a[(i, j)]));
            }
        }
    };
    matrix("mu", &DMatrix::from_column_slice(m.mu.len(), 1, m.mu.as_slice()));
    matrix("sigma0", &m.sigma0);
    matrix("sigma_x", &m.sigma_x);
    matrix("reversion", &DMatrix::from_column_slice(m.reversion.len(), 1, m.reversion.as_slice()));
    matrix("mean", &DMatrix::from_column_slice(m.mean.len(), 1, m.mean.as_slice()));
    out.push_str(&format!("redraws,0,0,{}\n", m.redraws));
    out
}

pub fn run_incomplete(cfg: &IncompleteConfig, opts: &RunOptions) -> Result<IncompleteOutcome> {
    let market = draw_incomplete_market(cfg.assets, cfg.brownian, cfg.factors, &cfg.randomization, opts.seed)?;
    let model = market.model()?;
    let utility = cfg.utility.build()?;
    let grid = cfg.simulation.grid()?;
    let x0 = cfg.x0.clone().unwrap_or_else(|| vec![0.0; cfg.factors]);
    let cap = cfg.cap.unwrap_or(DEFAULT_CAP);
    let rule = LocalMerton { risk_aversion: cfg.utility.terms[0].risk_aversion, cap };
    let settings = PathwiseSettings { cap, bounds_every: cfg.report_every, ..PathwiseSettings::default() };

    let start = Instant::now();
    let trace = run_path(
        &model,
        &utility,
        &grid,
        cfg.w0,
        &x0,
        opts.world_seed(),
        sampling(&cfg.simulation, opts.inner_seed(0)),
        &settings,
        Some(&rule),
    )?;
    let seconds = start.elapsed().as_secs_f64();
    let bounds: Vec<BoundsReport> = trace.bounds.iter().map(|(_, b)| b.clone()).collect();
    if let (Some(first), Some(last)) = (bounds.first(), bounds.last()) {
        log::info!("alpha {} at t = {}, {} at t = {}", first.alpha, first.t, last.alpha, last.t);
    }

    let mut trace_csv = Vec::new();
    trace.write_csv(&mut trace_csv).expect("writing to memory");
    let mut bounds_csv = Vec::new();
    BoundsReport::write_csv(&bounds, &mut bounds_csv).expect("writing to memory");
    let mut files = vec![
        opts.write("incomplete_trace.csv", &String::from_utf8_lossy(&trace_csv))?,
        opts.write("incomplete_bounds.csv", &String::from_utf8_lossy(&bounds_csv))?,
        opts.write("incomplete_parameters.csv", &parameters_csv(&market))?,
        opts.write("incomplete_timing.csv", &format!("method,seconds\npathwise,{seconds}\n"))?,
    ];
    if opts.dump_paths {
        let dw = sample_increments(&grid, cfg.brownian, opts.world_seed(), 0);
        files.push(opts.write("incomplete_world.csv", &increments_csv(&grid, &dw))?);
    }
    Ok(IncompleteOutcome { market, trace, bounds, files })
}
