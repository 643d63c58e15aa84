//! Policy improvement for the one-dimensional HJB equation on a nonuniform
//! wealth grid, with a θ-weighted (Crank–Nicolson by default) time scheme.
//!
//! For frozen controls the value solves a tridiagonal system; controls are
//! then improved nodewise from the discrete derivatives of the new value. An
//! update is only accepted where it does not lower the local Hamiltonian, so
//! the value iterates are nondecreasing. Boundary values are pinned to the
//! exact constant-market value, which for a mixture tends to the Merton
//! values of the most and least risk-averse terms at the grid ends.

use std::io::Write;

use nalgebra::DMatrix;

use super::merton::MertonSolution;
use super::power_dual::constant_market_dual;
use crate::market_model::{CrraTerm, MarketModel, UtilitySpec};
use crate::rules::DEFAULT_CAP;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PdeSettings {
    /// Weight of the new time level; 0.5 is Crank–Nicolson.
    pub cn_weight: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub theta_cap: f64,
}

impl Default for PdeSettings {
    fn default() -> Self {
        PdeSettings { cn_weight: 0.5, tol: 1e-8, max_iters: 200, theta_cap: DEFAULT_CAP }
    }
}

/// `nodes` log-spaced points on `[w0/span, w0·span]`.
pub fn log_wealth_grid(w0: f64, span: f64, nodes: usize) -> Vec<f64> {
    let (a, b) = ((w0 / span).ln(), (w0 * span).ln());
    (0..nodes).map(|i| (a + (b - a) * i as f64 / (nodes - 1) as f64).exp()).collect()
}

#[derive(Clone, Debug)]
pub struct PdeSolution {
    pub w_grid: Vec<f64>,
    pub t_grid: Vec<f64>,
    /// Value, one row per time.
    pub v: DMatrix<f64>,
    pub c_policy: DMatrix<f64>,
    pub theta_policy: DMatrix<f64>,
    /// Policy-improvement iterations used at each time step (last entry is the
    /// terminal row, which needs none).
    pub iterations: Vec<usize>,
    /// Largest decrease of any node between successive value iterates.
    pub max_monotonicity_violation: f64,
}

impl PdeSolution {
    fn interp(&self, m: &DMatrix<f64>, t_index: usize, w: f64) -> f64 {
        let g = &self.w_grid;
        let i = g.partition_point(|&x| x <= w).clamp(1, g.len() - 1);
        let s = (w - g[i - 1]) / (g[i] - g[i - 1]);
        (1.0 - s) * m[(t_index, i - 1)] + s * m[(t_index, i)]
    }

    /// Linear interpolation of the value in wealth.
    pub fn value_at(&self, t_index: usize, w: f64) -> f64 {
        self.interp(&self.v, t_index, w)
    }

    pub fn consumption_at(&self, t_index: usize, w: f64) -> f64 {
        self.interp(&self.c_policy, t_index, w)
    }

    pub fn theta_at(&self, t_index: usize, w: f64) -> f64 {
        self.interp(&self.theta_policy, t_index, w)
    }

    /// Rows `t, w, V, c, theta`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,w,V,c,theta")?;
        for (n, t) in self.t_grid.iter().enumerate() {
            for (i, w) in self.w_grid.iter().enumerate() {
                writeln!(out, "{t},{w},{},{},{}", self.v[(n, i)], self.c_policy[(n, i)], self.theta_policy[(n, i)])?;
            }
        }
        Ok(())
    }
}

struct Problem<'a> {
    utility: &'a UtilitySpec,
    w: &'a [f64],
    r: f64,
    excess: f64,
    var: f64,
    inv_dt: f64,
    alpha: f64,
}

/// Row `i` of the generator for controls `(c, θ)`: `(lower, diag, upper)`.
/// Central first differences, switched to upwinding where the implicit row
/// `1/Δt − α L` would stop being diagonally dominant.
fn stencil(p: &Problem<'_>, i: usize, c: f64, theta: f64) -> (f64, f64, f64) {
    let dp = p.w[i + 1] - p.w[i];
    let dm = p.w[i] - p.w[i - 1];
    let drift = p.r * p.w[i] + theta * p.excess - c;
    let diff = 0.5 * theta * theta * p.var;
    let dl = 2.0 * diff / (dm * (dp + dm));
    let du = 2.0 * diff / (dp * (dp + dm));
    let (mut l, mut u) = (dl - drift / (dp + dm), du + drift / (dp + dm));
    let diag = p.inv_dt + p.alpha * (l + u);
    if diag < p.alpha * (l.abs() + u.abs()) {
        if drift >= 0.0 {
            l = dl;
            u = du + drift / dp;
        } else {
            l = dl - drift / dm;
            u = du;
        }
    }
    (l, -(l + u), u)
}

/// Running utility at the control stored as its marginal `z`.
fn running(p: &Problem<'_>, t: f64, z: f64, c: f64) -> f64 {
    p.utility.dual_running(t, z) + z * c
}

fn apply(p: &Problem<'_>, v: &[f64], cs: &[f64], thetas: &[f64], out: &mut [f64]) {
    for i in 1..v.len() - 1 {
        let (l, d, u) = stencil(p, i, cs[i], thetas[i]);
        out[i] = l * v[i - 1] + d * v[i] + u * v[i + 1];
    }
}

/// Solves a tridiagonal system in place; `a` below, `b` on, `c` above the diagonal.
pub(super) fn thomas(a: &[f64], b: &mut [f64], c: &[f64], rhs: &mut [f64]) {
    let n = b.len();
    for i in 1..n {
        let m = a[i] / b[i - 1];
        b[i] -= m * c[i - 1];
        rhs[i] -= m * rhs[i - 1];
    }
    rhs[n - 1] /= b[n - 1];
    for i in (0..n - 1).rev() {
        rhs[i] = (rhs[i] - c[i] * rhs[i + 1]) / b[i];
    }
}

/// Boundary data. A single risk aversion gives the Merton solution; mixtures
/// use the conjugate of their closed-form dual, which approaches the Merton
/// solutions of the extreme terms far out on the grid.
enum Edge<'a> {
    Merton(MertonSolution),
    Exact { model: &'a MarketModel, utility: &'a UtilitySpec, horizon: f64 },
}

impl Edge<'_> {
    /// `(V, c, θ)` at `(t, w)`.
    fn at(&self, t: f64, w: f64, merton_ratio: f64) -> Result<(f64, f64, f64)> {
        match self {
            Edge::Merton(ms) => Ok((ms.value(t, w), ms.gamma(t) * w, ms.pi_m[0] * w)),
            Edge::Exact { model, utility, horizon } => {
                let d = constant_market_dual(model, utility, t, *horizon)?;
                let z = d.density_at_wealth(w)?;
                Ok((d.value(z) + w * z, utility.inverse_marginal(t, z), merton_ratio * z * d.deriv2(z)))
            }
        }
    }
}

fn boundary<'a>(model: &'a MarketModel, utility: &'a UtilitySpec, horizon: f64) -> Result<Edge<'a>> {
    let active: Vec<&CrraTerm> =
        utility.terms().iter().filter(|t| t.running_weight > 0.0 || t.terminal_weight > 0.0).collect();
    let r = active[0].risk_aversion;
    if active.iter().any(|t| t.risk_aversion != r) {
        return Ok(Edge::Exact { model, utility, horizon });
    }
    // equal risk aversions add up to one CRRA term in the dual
    let (run, term) = active
        .iter()
        .fold((0.0, 0.0), |(a, b), t| (a + t.running_weight.powf(1.0 / r), b + t.terminal_weight.powf(1.0 / r)));
    let merged = CrraTerm { risk_aversion: r, running_weight: run.powf(r), terminal_weight: term.powf(r) };
    Ok(Edge::Merton(MertonSolution::new(model, &UtilitySpec::from_terms(utility.rho(), &[merged])?, horizon)?))
}

/// Solves the HJB equation of a one-stock constant market backward from the
/// horizon `t_grid.last()`.
pub fn policy_improvement_solve(
    model: &MarketModel,
    utility: &UtilitySpec,
    w_grid: &[f64],
    t_grid: &[f64],
    settings: &PdeSettings,
) -> Result<PdeSolution> {
    let state = model.constant_state().filter(|s| s.mu.len() == 1 && s.sigma.ncols() == 1).ok_or_else(|| {
        Error::InvalidInput("the PDE solver needs a constant one-stock, one-factor-free market".into())
    })?;
    if w_grid.len() < 10 || w_grid[0] <= 0.0 || w_grid.windows(2).any(|p| !(p[1] > p[0])) {
        return Err(Error::InvalidInput("wealth grid must be positive, increasing, with at least 10 nodes".into()));
    }
    if t_grid.len() < 2 || t_grid.windows(2).any(|p| !(p[1] > p[0])) {
        return Err(Error::InvalidInput("time grid must be increasing with at least two points".into()));
    }
    if utility.terms().iter().all(|t| t.terminal_weight == 0.0) {
        return Err(Error::InvalidInput("the PDE needs a terminal utility".into()));
    }
    let horizon = t_grid[t_grid.len() - 1];
    let mut p = Problem {
        utility,
        w: w_grid,
        r: state.r,
        excess: state.excess[0],
        var: state.sigma[(0, 0)].powi(2),
        inv_dt: 0.0,
        alpha: settings.cn_weight,
    };
    let edge = boundary(model, utility, horizon)?;
    let m = w_grid.len();
    let nt = t_grid.len();
    let (w_lo, w_hi) = (w_grid[0], w_grid[m - 1]);
    let alpha = settings.cn_weight;
    let cap = settings.theta_cap;
    let merton_ratio = state.excess[0] / p.var;

    let mut v = DMatrix::zeros(nt, m);
    let mut c_pol = DMatrix::zeros(nt, m);
    let mut th_pol = DMatrix::zeros(nt, m);
    let mut iterations = vec![0; nt];
    let mut violation: f64 = 0.0;

    // terminal row
    let mut z_next = vec![0.0; m];
    for (i, &w) in w_grid.iter().enumerate() {
        let z = utility.marginal_terminal(w)?;
        z_next[i] = z;
        v[(nt - 1, i)] = utility.terminal_utility(w)?;
        c_pol[(nt - 1, i)] = utility.inverse_marginal(horizon, z);
        th_pol[(nt - 1, i)] = (-merton_ratio * z * utility.inverse_marginal_terminal_deriv(z)).clamp(-cap, cap);
    }
    v[(nt - 1, 0)] = edge.at(horizon, w_lo, merton_ratio)?.0;
    v[(nt - 1, m - 1)] = edge.at(horizon, w_hi, merton_ratio)?.0;

    let mut lv_next = vec![0.0; m];
    let mut a = vec![0.0; m - 2];
    let mut b = vec![0.0; m - 2];
    let mut cu = vec![0.0; m - 2];
    let mut rhs = vec![0.0; m - 2];
    for n in (0..nt - 1).rev() {
        let (t, t_next) = (t_grid[n], t_grid[n + 1]);
        let dt = t_next - t;
        p.inv_dt = 1.0 / dt;
        let v_next: Vec<f64> = v.row(n + 1).iter().copied().collect();
        let c_next: Vec<f64> = c_pol.row(n + 1).iter().copied().collect();
        let th_next: Vec<f64> = th_pol.row(n + 1).iter().copied().collect();
        apply(&p, &v_next, &c_next, &th_next, &mut lv_next);
        let explicit: Vec<f64> = (0..m)
            .map(|i| {
                let u_next = if i == 0 || i == m - 1 { 0.0 } else { running(&p, t_next, z_next[i], c_next[i]) };
                v_next[i] / dt + (1.0 - alpha) * (lv_next[i] + u_next)
            })
            .collect();

        let (bl, c_lo, th_lo) = edge.at(t, w_lo, merton_ratio)?;
        let (br, c_hi, th_hi) = edge.at(t, w_hi, merton_ratio)?;
        let mut z = z_next.clone();
        let mut cs: Vec<f64> = (0..m).map(|i| utility.inverse_marginal(t, z[i])).collect();
        let mut ths = th_next.clone();
        cs[0] = c_lo;
        cs[m - 1] = c_hi;
        ths[0] = th_lo;
        ths[m - 1] = th_hi;

        let mut cur = vec![0.0; m];
        let mut have_prev = false;
        let mut iters = 0;
        loop {
            // value for frozen controls
            for i in 1..m - 1 {
                let (l, d, u) = stencil(&p, i, cs[i], ths[i]);
                let k = i - 1;
                a[k] = -alpha * l;
                b[k] = 1.0 / dt - alpha * d;
                cu[k] = -alpha * u;
                rhs[k] = explicit[i] + alpha * running(&p, t, z[i], cs[i]);
            }
            rhs[0] -= a[0] * bl;
            rhs[m - 3] -= cu[m - 3] * br;
            thomas(&a, &mut b, &cu, &mut rhs);
            let mut new = vec![0.0; m];
            new[0] = bl;
            new[m - 1] = br;
            new[1..m - 1].copy_from_slice(&rhs);
            iters += 1;
            let change = if have_prev {
                new.iter().zip(&cur).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
            } else {
                f64::INFINITY
            };
            if have_prev {
                let drop = cur.iter().zip(&new).map(|(o, n)| o - n).fold(0.0, f64::max);
                violation = violation.max(drop);
            }
            cur = new;
            have_prev = true;
            if change <= settings.tol {
                break;
            }
            if iters >= settings.max_iters {
                return Err(Error::NonconvergedPolicyIteration { step: n, residual: change });
            }
            // improvement
            for i in 1..m - 1 {
                let dp = w_grid[i + 1] - w_grid[i];
                let dm = w_grid[i] - w_grid[i - 1];
                let vw = (cur[i + 1] - cur[i - 1]) / (dp + dm);
                let vww = 2.0 * (dm * (cur[i + 1] - cur[i]) - dp * (cur[i] - cur[i - 1])) / (dp * dm * (dp + dm));
                if !(vw > 0.0) {
                    continue;
                }
                let z_new = vw;
                let c_new = utility.inverse_marginal(t, z_new);
                let th_new = if vww < 0.0 { (-merton_ratio * vw / vww).clamp(-cap, cap) } else { ths[i] };
                let ham = |zz: f64, c: f64, th: f64| {
                    let (l, d, u) = stencil(&p, i, c, th);
                    running(&p, t, zz, c) + l * cur[i - 1] + d * cur[i] + u * cur[i + 1]
                };
                if ham(z_new, c_new, th_new) >= ham(z[i], cs[i], ths[i]) {
                    z[i] = z_new;
                    cs[i] = c_new;
                    ths[i] = th_new;
                }
            }
        }
        iterations[n] = iters;
        v.row_mut(n).copy_from_slice(&cur);
        c_pol.row_mut(n).copy_from_slice(&cs);
        th_pol.row_mut(n).copy_from_slice(&ths);
        z_next = z;
    }
    Ok(PdeSolution {
        w_grid: w_grid.to_vec(),
        t_grid: t_grid.to_vec(),
        v,
        c_policy: c_pol,
        theta_policy: th_pol,
        iterations,
        max_monotonicity_violation: violation,
    })
}
