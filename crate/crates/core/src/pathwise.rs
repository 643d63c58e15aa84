//! Approximately optimal controls along one realised Brownian path.
//!
//! The dual start `ζ₀` is found once at `t = 0`; afterwards `ζ` follows its own
//! dynamics on the world path. At each grid point the trace records
//! consumption `c = I(t, ζ)`, the dual wealth `w = −g_ζ`, and the truncated
//! portfolio `θ = (σσᵀ)⁻¹(μ − r1) ζ g_ζζ`. A second wealth process is
//! integrated from these controls for comparison.

use std::io::Write;

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::dual_bounds::{BoundsReport, DualSettings, DualSolver, GPartials, Sampling};
use crate::market_model::{MarketModel, MarketState, UtilitySpec};
use crate::path_engine::{sample_increments, Measure, PathState, Scratch, Stepper, TimeGrid};
use crate::rules::{clamp_norm, PortfolioRule, DEFAULT_CAP};
use crate::{Error, Result};

/// Knobs of [`run_path`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathwiseSettings {
    pub dual: DualSettings,
    /// Cap `K` on `‖θ‖`.
    pub cap: f64,
    /// Relative gap between dual and integrated wealth that triggers a warning.
    pub mismatch_tol: f64,
    /// Re-run the `ζ` search at every step from the integrated wealth.
    pub reoptimize: bool,
    /// Compute full bounds every this many steps; 0 disables them.
    pub bounds_every: usize,
}

impl Default for PathwiseSettings {
    fn default() -> Self {
        PathwiseSettings {
            dual: DualSettings::default(),
            cap: DEFAULT_CAP,
            mismatch_tol: 0.2,
            reoptimize: false,
            bounds_every: 0,
        }
    }
}

/// Controls and states along one path, one entry per grid point.
#[derive(Clone, Debug)]
pub struct PolicyTrace {
    pub grid: TimeGrid,
    pub zeta: Vec<f64>,
    /// Wealth read off the dual, `−g_ζ(t, ζ_t, X_t)`.
    pub w_dual: Vec<f64>,
    /// Wealth integrated from the traced controls.
    pub w_sde: Vec<f64>,
    pub c: Vec<f64>,
    /// Cash holdings, one row per grid point.
    pub theta: DMatrix<f64>,
    pub x: DMatrix<f64>,
    pub kappa_path: DMatrix<f64>,
    /// `g + wζ` at each grid point.
    pub v_running: Vec<f64>,
    /// Full bounds at the reporting steps, by grid index.
    pub bounds: Vec<(usize, BoundsReport)>,
    /// Grid indices where dual and integrated wealth disagree.
    pub mismatch_steps: Vec<usize>,
}

/// Truncated optimal portfolio `θ = (σσᵀ)⁻¹(μ − r1) ζ g_ζζ`, clamped to `cap`.
pub fn truncated_theta(state: &MarketState, zeta: f64, g_zeta_zeta: f64, cap: f64) -> DVector<f64> {
    let mut theta = &state.mean_variance * (zeta * g_zeta_zeta);
    clamp_norm(theta.as_mut_slice(), cap);
    theta
}

/// [`truncated_theta`] with `g_ζζ` estimated on the paths of `sampling`.
pub fn theta_rule(
    solver: &DualSolver<'_>,
    t_index: usize,
    zeta: f64,
    x: &[f64],
    sampling: Sampling,
    cap: f64,
) -> Result<DVector<f64>> {
    let state = solver.model.state_at(x)?;
    let p = solver.g_partials(t_index, zeta, x, sampling)?;
    Ok(truncated_theta(&state, zeta, p.g_zeta_zeta, cap))
}

/// Runs the optimal-path construction on the world path `seed_world`.
///
/// Inner estimates all use the paths of `inner`. When `bounds_rule` is given
/// and `settings.bounds_every > 0`, full bounds for that rule are computed at
/// every `bounds_every`-th step before the horizon.
#[allow(clippy::too_many_arguments)]
pub fn run_path(
    model: &MarketModel,
    utility: &UtilitySpec,
    grid: &TimeGrid,
    w0: f64,
    x0: &[f64],
    seed_world: u64,
    inner: Sampling,
    settings: &PathwiseSettings,
    bounds_rule: Option<&dyn PortfolioRule>,
) -> Result<PolicyTrace> {
    let dims = model.dims();
    if x0.len() != dims.k || x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("initial factor state has wrong length or is not finite".into()));
    }
    let steps = grid.steps();
    let world = sample_increments(grid, dims.d, seed_world, 0);
    let solver = DualSolver::new(model, utility, grid).with_settings(settings.dual);
    let zeta0 = solver.find_zeta0(0, w0, x0, inner, None)?.zeta0;

    let stepper = Stepper { model, utility, grid, measure: Measure::P };
    let mut scratch = Scratch::new(model);
    let mut st = PathState { x: x0.to_vec(), log_zeta: zeta0.ln(), log_z: 0.0, w: 0.0 };
    let mut trace = PolicyTrace {
        grid: grid.clone(),
        zeta: Vec::with_capacity(steps + 1),
        w_dual: Vec::with_capacity(steps + 1),
        w_sde: Vec::with_capacity(steps + 1),
        c: Vec::with_capacity(steps + 1),
        theta: DMatrix::zeros(steps + 1, dims.n),
        x: DMatrix::zeros(steps + 1, dims.k),
        kappa_path: DMatrix::zeros(steps + 1, dims.d),
        v_running: Vec::with_capacity(steps + 1),
        bounds: Vec::new(),
        mismatch_steps: Vec::new(),
    };
    let mut w_sde = w0;
    let mut inc = vec![0.0; dims.d];
    for n in 0..=steps {
        let t = grid.t(n);
        if settings.reoptimize && n > 0 {
            st.log_zeta = solver.find_zeta0(n, w_sde, &st.x, inner, None)?.zeta0.ln();
        }
        let zeta = st.log_zeta.exp();
        let state = model.state_at(&st.x)?;
        let GPartials { g, g_zeta, g_zeta_zeta } = solver.g_partials(n, zeta, &st.x, inner)?;
        let w_dual = -g_zeta;
        let c = utility.inverse_marginal(t, zeta);
        let theta = truncated_theta(&state, zeta, g_zeta_zeta, settings.cap);

        if (w_dual - w_sde).abs() / (1.0 + w_sde.abs()) > settings.mismatch_tol {
            if trace.mismatch_steps.is_empty() {
                warn!("dual wealth {w_dual} and integrated wealth {w_sde} diverge at t = {t}");
            }
            trace.mismatch_steps.push(n);
        }
        if let Some(rule) = bounds_rule {
            if settings.bounds_every > 0 && n < steps && n % settings.bounds_every == 0 {
                trace.bounds.push((n, solver.bounds(n, w_dual, &st.x, rule, inner)?));
            }
        }

        trace.zeta.push(zeta);
        trace.w_dual.push(w_dual);
        trace.w_sde.push(w_sde);
        trace.c.push(c);
        trace.v_running.push(g + w_dual * zeta);
        trace.theta.row_mut(n).copy_from(&theta.transpose());
        trace.kappa_path.row_mut(n).copy_from(&state.kappa.transpose());
        for (i, v) in st.x.iter().enumerate() {
            trace.x[(n, i)] = *v;
        }

        if n < steps {
            let dt = grid.dt(n);
            for (c_, v) in inc.iter_mut().enumerate() {
                *v = world[(n, c_)];
            }
            let dw = DVector::from_column_slice(&inc);
            w_sde += (state.r * w_sde + theta.dot(&state.excess) - c) * dt + theta.dot(&(&state.sigma * &dw));
            stepper.step(n, &mut st, &inc, None, false, &mut scratch)?;
            if !st.log_zeta.is_finite() || !w_sde.is_finite() || st.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonfinitePath { path: 0, step: n + 1 });
            }
        }
    }
    Ok(trace)
}

impl PolicyTrace {
    /// One row per grid point. Bound columns are blank away from reporting steps.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let n = self.theta.ncols();
        let k = self.x.ncols();
        let mut header: Vec<String> = ["t", "zeta", "w_dual", "w_sde", "c", "c_over_w"].map(String::from).to_vec();
        header.extend((1..=n).map(|i| format!("theta{i}")));
        header.extend((1..=n).map(|i| format!("prop{i}")));
        header.extend((1..=k).map(|i| format!("x{i}")));
        header.extend(["value", "upper", "lower", "alpha"].map(String::from));
        writeln!(out, "{}", header.join(","))?;
        for i in 0..self.zeta.len() {
            let w = self.w_dual[i];
            let mut row = vec![
                self.grid.t(i).to_string(),
                self.zeta[i].to_string(),
                w.to_string(),
                self.w_sde[i].to_string(),
                self.c[i].to_string(),
                (self.c[i] / w).to_string(),
            ];
            row.extend((0..n).map(|j| self.theta[(i, j)].to_string()));
            row.extend((0..n).map(|j| (self.theta[(i, j)] / w).to_string()));
            row.extend((0..k).map(|j| self.x[(i, j)].to_string()));
            row.push(self.v_running[i].to_string());
            match self.bounds.iter().find(|(s, _)| *s == i) {
                Some((_, b)) => row.extend([b.upper, b.lower, b.alpha].map(|v| v.to_string())),
                None => row.extend(std::iter::repeat_n(String::new(), 3)),
            }
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_excess_return_gives_no_investment() {
        let m = MarketModel::black_scholes(0.05, 0.05, 0.2).unwrap();
        let u = UtilitySpec::crra(3.0, 0.03, 1.0, 1.0).unwrap();
        let g = TimeGrid::uniform(10, 1.0).unwrap();
        let s = DualSolver::new(&m, &u, &g);
        let th = theta_rule(&s, 0, 1.0, &[], Sampling::p(100, 1), DEFAULT_CAP).unwrap();
        assert_eq!(th[0], 0.0);
    }

    #[test]
    fn trace_invariants_and_reproducibility() {
        let m = MarketModel::black_scholes(0.05, 0.10, 0.2).unwrap();
        let u = UtilitySpec::crra(3.0, 0.03, 1.0, 1.0).unwrap();
        let g = TimeGrid::uniform(20, 1.0).unwrap();
        let settings = PathwiseSettings::default();
        let run = || run_path(&m, &u, &g, 1.0, &[], 3, Sampling::p(200, 4), &settings, None).unwrap();
        let a = run();
        let b = run();
        assert_eq!(a.w_dual, b.w_dual);
        assert_eq!(a.theta, b.theta);
        for (i, (&c, &z)) in a.c.iter().zip(&a.zeta).enumerate() {
            assert!(c > 0.0 && z > 0.0);
            assert_eq!(c, u.inverse_marginal(g.t(i), z));
        }
        assert!(a.v_running.iter().all(|v| v.is_finite()));
        assert!(a.theta.iter().all(|v| v.abs() <= DEFAULT_CAP));
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 22);
    }
}
