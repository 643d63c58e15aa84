//! The mixture-utility problem solved three ways on one market: Monte Carlo
//! duality along a world path, policy improvement on the HJB equation, and
//! functional quantization of the dual.

use std::path::PathBuf;
use std::time::Instant;

use dualmc_core::benchmarks::{
    constant_market_dual, kl_basis, log_wealth_grid, policy_improvement_solve, quantized_policy, PdeSettings,
    PdeSolution, Quantizer,
};
use dualmc_core::dual_bounds::BoundsReport;
use dualmc_core::market_model::{MarketModel, UtilitySpec};
use dualmc_core::path_engine::{sample_increments, TimeGrid};
use dualmc_core::pathwise::{run_path, PathwiseSettings, PolicyTrace};
use dualmc_core::rules::{RuleContext, DEFAULT_CAP};

use super::{increments_csv, relative_gap, row, sampling, RunOptions};
use crate::config::{MixtureConfig, QuantizationConfig};
use crate::error::{CliError, Result};

pub const METHODS: [&str; 3] = ["monte-carlo", "pde", "quantization"];

#[derive(Clone, Debug, PartialEq)]
pub struct MethodResult {
    pub method: &'static str,
    pub value: f64,
    pub c0: f64,
    pub theta0: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct MixtureOutcome {
    /// Monte Carlo, PDE and quantization, in that order.
    pub methods: Vec<MethodResult>,
    /// Exact values from the closed-form constant-market dual.
    pub closed_form: MethodResult,
    /// `(method a, method b, quantity, relative gap)`.
    pub gaps: Vec<(&'static str, &'static str, &'static str, f64)>,
    pub trace: PolicyTrace,
    pub bounds: Vec<BoundsReport>,
    pub files: Vec<PathBuf>,
}

/// Per-step quantized controls at wealth `w` from grid index `n`.
struct QuantizedPath<'a> {
    q: Quantizer,
    cfg: &'a QuantizationConfig,
    model: &'a MarketModel,
    utility: &'a UtilitySpec,
    grid: &'a TimeGrid,
}

impl QuantizedPath<'_> {
    fn at(&self, n: usize, w: f64) -> Result<(f64, f64, f64)> {
        let t0 = self.grid.t(n);
        let tau = self.grid.horizon() - t0;
        let steps = ((self.cfg.time_density as f64 * tau).ceil() as usize).max(1);
        let t: Vec<f64> = (0..=steps).map(|j| t0 + tau * j as f64 / steps as f64).collect();
        let basis = kl_basis(tau, self.cfg.dim)?;
        let p = quantized_policy(&self.q.scaled(tau), &basis, self.model, self.utility, &t, w)?;
        Ok((p.value, p.consumption, p.theta))
    }
}

/// PDE holdings extended proportionally outside the wealth grid.
fn pde_theta(sol: &PdeSolution, step: usize, w: f64) -> f64 {
    let (lo, hi) = (sol.w_grid[0], sol.w_grid[sol.w_grid.len() - 1]);
    if w <= 0.0 {
        0.0
    } else if w < lo {
        sol.theta_at(step, lo) * w / lo
    } else if w > hi {
        sol.theta_at(step, hi) * w / hi
    } else {
        sol.theta_at(step, w)
    }
}

pub fn run_mixture_compare(cfg: &MixtureConfig, opts: &RunOptions) -> Result<MixtureOutcome> {
    let model = cfg.market.build()?;
    let utility = cfg.utility.build()?;
    let grid = cfg.simulation.grid()?;
    let horizon = grid.horizon();
    let cap = cfg.cap.unwrap_or(DEFAULT_CAP);
    let w0 = cfg.w0;

    let start = Instant::now();
    let w_grid = log_wealth_grid(w0, cfg.pde.span, cfg.pde.nodes);
    let pde_settings = PdeSettings { theta_cap: cap, ..PdeSettings::default() };
    let pde = policy_improvement_solve(&model, &utility, &w_grid, grid.times(), &pde_settings)?;
    let pde_result = MethodResult {
        method: METHODS[1],
        value: pde.value_at(0, w0),
        c0: pde.consumption_at(0, w0),
        theta0: pde.theta_at(0, w0),
        seconds: start.elapsed().as_secs_f64(),
    };

    let start = Instant::now();
    let q = match &cfg.quantization.grid_file {
        Some(path) => Quantizer::load(path).map_err(|e| CliError::config("quantization.grid_file", e.to_string()))?,
        None => Quantizer::build(cfg.quantization.dim, cfg.quantization.points)?,
    };
    if q.dim != cfg.quantization.dim {
        return Err(CliError::config("quantization.dim", format!("grid file has dimension {}", q.dim)));
    }
    let quant = QuantizedPath { q, cfg: &cfg.quantization, model: &model, utility: &utility, grid: &grid };
    let (value, c0, theta0) = quant.at(0, w0)?;
    let quant_result = MethodResult { method: METHODS[2], value, c0, theta0, seconds: start.elapsed().as_secs_f64() };

    let start = Instant::now();
    let rule = |ctx: &RuleContext<'_>, out: &mut [f64]| out[0] = pde_theta(&pde, ctx.step, ctx.w).clamp(-cap, cap);
    let settings = PathwiseSettings { cap, bounds_every: cfg.report_every, ..PathwiseSettings::default() };
    let trace = run_path(
        &model,
        &utility,
        &grid,
        w0,
        &[],
        opts.world_seed(),
        sampling(&cfg.simulation, opts.inner_seed(0)),
        &settings,
        Some(&rule),
    )?;
    let mc_result = MethodResult {
        method: METHODS[0],
        value: trace.v_running[0],
        c0: trace.c[0],
        theta0: trace.theta[(0, 0)],
        seconds: start.elapsed().as_secs_f64(),
    };

    let dual = constant_market_dual(&model, &utility, 0.0, horizon)?;
    let z = dual.density_at_wealth(w0)?;
    let state = model.constant_state().expect("built from a constant config");
    let closed_form = MethodResult {
        method: "closed-form",
        value: dual.value(z) + w0 * z,
        c0: utility.inverse_marginal(0.0, z),
        theta0: state.mean_variance[0] * z * dual.deriv2(z),
        seconds: 0.0,
    };

    let methods = vec![mc_result, pde_result, quant_result];
    let mut gaps = Vec::new();
    for (a, b) in [(0, 1), (0, 2), (1, 2)] {
        let (x, y) = (&methods[a], &methods[b]);
        gaps.push((x.method, y.method, "value", relative_gap(x.value, y.value)));
        gaps.push((x.method, y.method, "c0", relative_gap(x.c0, y.c0)));
        gaps.push((x.method, y.method, "theta0", relative_gap(x.theta0, y.theta0)));
    }

    let mut summary = String::from("method,value,c0,theta0\n");
    let mut timing = String::from("method,seconds\n");
    for m in methods.iter().chain(std::iter::once(&closed_form)) {
        summary.push_str(&format!("{},{},{},{}\n", m.method, m.value, m.c0, m.theta0));
    }
    for m in &methods {
        timing.push_str(&format!("{},{}\n", m.method, m.seconds));
    }
    let mut gap_csv = String::from("method_a,method_b,quantity,relative_gap\n");
    for (a, b, what, g) in &gaps {
        gap_csv.push_str(&format!("{a},{b},{what},{g}\n"));
    }

    let mut paths = String::from("t,w,c_mc,c_pde,c_quant,theta_mc,theta_pde,theta_quant\n");
    for n in 0..grid.steps() {
        let w = trace.w_dual[n];
        let (_, c_q, th_q) = quant.at(n, w)?;
        paths.push_str(&row([
            grid.t(n),
            w,
            trace.c[n],
            pde.consumption_at(n, w),
            c_q,
            trace.theta[(n, 0)],
            pde_theta(&pde, n, w),
            th_q,
        ]));
        paths.push('\n');
    }

    let bounds: Vec<BoundsReport> = trace.bounds.iter().map(|(_, b)| b.clone()).collect();
    let mut trace_csv = Vec::new();
    trace.write_csv(&mut trace_csv).expect("writing to memory");
    let mut bounds_csv = Vec::new();
    BoundsReport::write_csv(&bounds, &mut bounds_csv).expect("writing to memory");
    let mut files = vec![
        opts.write("mixture_compare.csv", &summary)?,
        opts.write("mixture_gaps.csv", &gap_csv)?,
        opts.write("mixture_paths.csv", &paths)?,
        opts.write("mixture_trace.csv", &String::from_utf8_lossy(&trace_csv))?,
        opts.write("mixture_bounds.csv", &String::from_utf8_lossy(&bounds_csv))?,
        opts.write("mixture_compare_timing.csv", &timing)?,
    ];
    if opts.dump_paths {
        let mut pde_csv = Vec::new();
        pde.write_csv(&mut pde_csv).expect("writing to memory");
        files.push(opts.write("mixture_pde.csv", &String::from_utf8_lossy(&pde_csv))?);
        let dw = sample_increments(&grid, 1, opts.world_seed(), 0);
        files.push(opts.write("mixture_world.csv", &increments_csv(&grid, &dw))?);
    }
    Ok(MixtureOutcome { methods, closed_form, gaps, trace, bounds, files })
}
