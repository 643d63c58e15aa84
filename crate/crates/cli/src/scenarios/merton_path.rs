//! One optimal path in a constant market with CRRA utility, with running
//! bounds and the closed-form Merton solution on the same world path.

use std::path::PathBuf;
use std::time::Instant;

use dualmc_core::benchmarks::MertonSolution;
use dualmc_core::dual_bounds::BoundsReport;
use dualmc_core::path_engine::sample_increments;
use dualmc_core::pathwise::{run_path, PathwiseSettings, PolicyTrace};
use dualmc_core::rules::{LocalMerton, DEFAULT_CAP};

use super::{increments_csv, row, sampling, RunOptions};
use crate::config::MertonPathConfig;
use crate::error::Result;

#[derive(Clone, Debug)]
pub struct MertonPathOutcome {
    pub trace: PolicyTrace,
    pub bounds: Vec<BoundsReport>,
    /// Closed-form wealth on the world path, started from the exact `ζ₀`.
    pub merton_wealth: Vec<f64>,
    pub merton: MertonSolution,
    pub files: Vec<PathBuf>,
}

pub fn run_merton_path(cfg: &MertonPathConfig, opts: &RunOptions) -> Result<MertonPathOutcome> {
    let model = cfg.market.build()?;
    let utility = cfg.utility.build()?;
    let grid = cfg.simulation.grid()?;
    let merton = MertonSolution::new(&model, &utility, grid.horizon())?;
    let cap = cfg.cap.unwrap_or(DEFAULT_CAP);
    let settings = PathwiseSettings { cap, bounds_every: cfg.report_every, ..PathwiseSettings::default() };
    let rule = LocalMerton { risk_aversion: merton.risk_aversion, cap };

    let start = Instant::now();
    let trace = run_path(
        &model,
        &utility,
        &grid,
        cfg.w0,
        &[],
        opts.world_seed(),
        sampling(&cfg.simulation, opts.inner_seed(0)),
        &settings,
        Some(&rule),
    )?;
    let seconds = start.elapsed().as_secs_f64();

    let scale = merton.zeta0(cfg.w0) / trace.zeta[0];
    let merton_wealth: Vec<f64> =
        trace.zeta.iter().enumerate().map(|(n, z)| merton.wealth_at_density(grid.t(n), z * scale)).collect();
    let bounds: Vec<BoundsReport> = trace.bounds.iter().map(|(_, b)| b.clone()).collect();

    let n_assets = trace.theta.ncols();
    let mut header: Vec<String> = ["t", "w_dual", "w_merton", "c_over_w", "gamma"].map(String::from).to_vec();
    header.extend((1..=n_assets).map(|i| format!("prop{i}")));
    header.extend((1..=n_assets).map(|i| format!("pi_merton{i}")));
    let mut compare = row(header) + "\n";
    for (n, &w_merton) in merton_wealth.iter().enumerate() {
        let t = grid.t(n);
        let w = trace.w_dual[n];
        let mut cells = vec![t, w, w_merton, trace.c[n] / w, merton.gamma(t)];
        cells.extend((0..n_assets).map(|i| trace.theta[(n, i)] / w));
        cells.extend(merton.pi_m.iter().copied());
        compare.push_str(&row(cells));
        compare.push('\n');
    }

    let mut trace_csv = Vec::new();
    trace.write_csv(&mut trace_csv).expect("writing to memory");
    let mut bounds_csv = Vec::new();
    BoundsReport::write_csv(&bounds, &mut bounds_csv).expect("writing to memory");
    let mut files = vec![
        opts.write("merton_path_trace.csv", &String::from_utf8_lossy(&trace_csv))?,
        opts.write("merton_path_bounds.csv", &String::from_utf8_lossy(&bounds_csv))?,
        opts.write("merton_path_compare.csv", &compare)?,
        opts.write("merton_path_timing.csv", &format!("method,seconds\npathwise,{seconds}\n"))?,
    ];
    if opts.dump_paths {
        let dw = sample_increments(&grid, model.dims().d, opts.world_seed(), 0);
        files.push(opts.write("merton_path_world.csv", &increments_csv(&grid, &dw))?);
    }
    Ok(MertonPathOutcome { trace, bounds, merton_wealth, merton, files })
}
