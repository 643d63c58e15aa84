//! Brownian increments and forward simulation of `(X, ζ, Z, w)`.
//!
//! Every path draws from its own ChaCha stream keyed by a hash of
//! `(seed, path_index)`, so a path's increments do not depend on how many
//! other paths are simulated, in which order, or on how many threads.
//!
//! `ζ` and `Z` are stepped in log space with coefficients frozen over the
//! step, which is exact for constant coefficients and keeps both positive.
//! Wealth and the factor use plain Euler steps.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::dual_bounds::sigma_z_into;
use crate::market_model::{MarketModel, MarketState, UtilitySpec};
use crate::rules::{PortfolioRule, RuleContext};
use crate::{Error, Result};

/// Strictly increasing times `0 = t_0 < … < t_N = T`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    /// `steps` equal steps on `[0, horizon]`; the last node is exactly `horizon`.
    pub fn uniform(steps: usize, horizon: f64) -> Result<Self> {
        if steps == 0 || !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidInput(format!("need steps >= 1 and horizon > 0, got {steps} and {horizon}")));
        }
        let mut times: Vec<f64> = (0..=steps).map(|j| horizon * j as f64 / steps as f64).collect();
        times[steps] = horizon;
        Ok(TimeGrid { times })
    }

    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 || times[0] != 0.0 || times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("time grid must start at 0 and increase strictly".into()));
        }
        Ok(TimeGrid { times })
    }

    /// Number of steps `N`.
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn t(&self, j: usize) -> f64 {
        self.times[j]
    }

    pub fn dt(&self, j: usize) -> f64 {
        self.times[j + 1] - self.times[j]
    }

    pub fn horizon(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }
}

/// Generator for path `path_index` of the stream family `seed`.
pub fn path_rng(seed: u64, path_index: u64) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(b"dualmc/path");
    h.update(seed.to_le_bytes());
    h.update(path_index.to_le_bytes());
    let digest = h.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

/// Derives an independent 64-bit seed from `seed` and a label.
pub fn derive_seed(seed: u64, label: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(b"dualmc/seed");
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    h.update(index.to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Fills `out` (row-major, `(N - from_step) × d`) with the increments of
/// steps `from_step..N`.
pub(crate) fn fill_increments(grid: &TimeGrid, from_step: usize, d: usize, rng: &mut ChaCha8Rng, out: &mut [f64]) {
    for (row, j) in (from_step..grid.steps()).enumerate() {
        draw_step(rng, grid.dt(j), &mut out[row * d..(row + 1) * d]);
    }
}

/// Draws one step's increment vector; paths consume their stream row by row.
pub(crate) fn draw_step(rng: &mut ChaCha8Rng, dt: f64, out: &mut [f64]) {
    let sd = dt.sqrt();
    for v in out {
        let z: f64 = StandardNormal.sample(rng);
        *v = sd * z;
    }
}

/// `N × d` Brownian increments of path `path_index`; step `j` has standard
/// deviation `√(t_{j+1} − t_j)` per component.
pub fn sample_increments(grid: &TimeGrid, d: usize, seed: u64, path_index: u64) -> DMatrix<f64> {
    let mut buf = vec![0.0; grid.steps() * d];
    fill_increments(grid, 0, d, &mut path_rng(seed, path_index), &mut buf);
    DMatrix::from_row_slice(grid.steps(), d, &buf)
}

/// Settings of the importance-sampling measure.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IsConfig {
    /// Cap on `‖σ_Z‖`.
    pub sigma_z_max: f64,
    /// `σ_Z` is switched off when `|φ̃(ζ)| < eps_dual (1 + |ζφ̃′(ζ)|)`.
    pub eps_dual: f64,
}

impl Default for IsConfig {
    fn default() -> Self {
        IsConfig { sigma_z_max: 10.0, eps_dual: 1e-12 }
    }
}

/// Measure under which increments are interpreted.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Measure {
    /// Increments are `ΔW`.
    P,
    /// Increments are `ΔW̄ = ΔW − σ_Z Δt`.
    Q(IsConfig),
}

impl Measure {
    pub fn is_q(&self) -> bool {
        matches!(self, Measure::Q(_))
    }
}

/// Initial state at grid index `step`.
#[derive(Clone, Debug)]
pub struct StartState {
    pub step: usize,
    pub x: Vec<f64>,
    pub zeta: f64,
    pub z: f64,
    pub w: Option<f64>,
}

impl StartState {
    pub fn new(step: usize, x: Vec<f64>, zeta: f64) -> Self {
        StartState { step, x, zeta, z: 1.0, w: None }
    }

    pub fn with_wealth(mut self, w: f64) -> Self {
        self.w = Some(w);
        self
    }
}

/// Simulated joint trajectory from the start index to the horizon.
#[derive(Clone, Debug)]
pub struct PathBundle {
    pub times: Vec<f64>,
    /// Brownian increments under P, one row per step.
    pub dw: DMatrix<f64>,
    /// Factor path, one row per grid point.
    pub x: DMatrix<f64>,
    pub zeta: Vec<f64>,
    pub z: Vec<f64>,
    pub w: Option<Vec<f64>>,
    /// Consumption `I(t, ζ_t)` at the left end of each step, when wealth is tracked.
    pub consumption: Option<Vec<f64>>,
}

impl PathBundle {
    /// One row per grid point: `t, X_1..X_k, zeta, Z, w`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let k = self.x.ncols();
        let mut header = vec!["t".to_string()];
        header.extend((1..=k).map(|i| format!("x{i}")));
        header.extend(["zeta", "Z", "w"].map(String::from));
        writeln!(out, "{}", header.join(","))?;
        for (i, t) in self.times.iter().enumerate() {
            let mut row = vec![t.to_string()];
            row.extend((0..k).map(|c| self.x[(i, c)].to_string()));
            row.push(self.zeta[i].to_string());
            row.push(self.z[i].to_string());
            row.push(self.w.as_ref().map_or(String::new(), |w| w[i].to_string()));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

pub(crate) struct PathState {
    pub x: Vec<f64>,
    pub log_zeta: f64,
    pub log_z: f64,
    pub w: f64,
}

pub(crate) struct Scratch {
    dw: Vec<f64>,
    sz: Vec<f64>,
    theta: Vec<f64>,
    dx: Vec<f64>,
}

impl Scratch {
    pub fn new(model: &MarketModel) -> Self {
        let dims = model.dims();
        Scratch { dw: vec![0.0; dims.d], sz: vec![0.0; dims.d], theta: vec![0.0; dims.n], dx: vec![0.0; dims.k] }
    }
}

/// One Euler/log-exact step shared by [`evolve`] and the estimators.
pub(crate) struct Stepper<'a> {
    pub model: &'a MarketModel,
    pub utility: &'a UtilitySpec,
    pub grid: &'a TimeGrid,
    pub measure: Measure,
}

impl Stepper<'_> {
    /// Advances `st` from `t_j` to `t_{j+1}`. When `wealth` is true, the
    /// consumption used is returned.
    pub fn step(
        &self,
        j: usize,
        st: &mut PathState,
        increment: &[f64],
        wealth: Option<&dyn PortfolioRule>,
        track_wealth: bool,
        scratch: &mut Scratch,
    ) -> Result<f64> {
        let owned;
        let ms: &MarketState = match self.model.constant_state() {
            Some(s) => s,
            None => {
                owned = self.model.state_at(&st.x)?;
                &owned
            }
        };
        let dt = self.grid.dt(j);
        let t = self.grid.t(j);
        let zeta = st.log_zeta.exp();
        let dw = &mut scratch.dw;
        dw.copy_from_slice(increment);

        let mut sz_sq = 0.0;
        if let Measure::Q(cfg) = self.measure {
            sigma_z_into(ms.kappa.as_slice(), zeta, self.utility, &cfg, &mut scratch.sz);
            for (d, s) in dw.iter_mut().zip(&scratch.sz) {
                *d += s * dt;
                sz_sq += s * s;
            }
        }

        let mut consumption = 0.0;
        if track_wealth {
            consumption = self.utility.inverse_marginal(t, zeta);
            let theta = &mut scratch.theta;
            match wealth {
                Some(rule) => {
                    let ctx = RuleContext { t, step: j, w: st.w, zeta, x: &st.x, market: ms };
                    rule.holdings(&ctx, theta);
                }
                None => theta.fill(0.0),
            }
            let drift: f64 = theta.iter().zip(ms.excess.iter()).map(|(a, b)| a * b).sum();
            let mut noise = 0.0;
            for (i, th) in theta.iter().enumerate() {
                if *th != 0.0 {
                    let row: f64 = (0..dw.len()).map(|c| ms.sigma[(i, c)] * dw[c]).sum();
                    noise += th * row;
                }
            }
            st.w += (ms.r * st.w + drift - consumption) * dt + noise;
        }

        if let Measure::Q(_) = self.measure {
            let sz_dw: f64 = scratch.sz.iter().zip(dw.iter()).map(|(a, b)| a * b).sum();
            st.log_z += -sz_dw + 0.5 * sz_sq * dt;
        }
        let k_dw: f64 = ms.kappa.iter().zip(dw.iter()).map(|(a, b)| a * b).sum();
        st.log_zeta += -k_dw - (ms.r + 0.5 * ms.kappa_sq) * dt;

        if !st.x.is_empty() {
            let dx = &mut scratch.dx;
            for (i, v) in dx.iter_mut().enumerate() {
                let vol: f64 = (0..dw.len()).map(|c| ms.sigma_x[(i, c)] * dw[c]).sum();
                *v = vol + ms.mu_x[i] * dt;
            }
            for (x, v) in st.x.iter_mut().zip(dx.iter()) {
                *x += v;
            }
        }
        Ok(consumption)
    }
}

pub(crate) fn check_finite(st: &PathState, path: usize, step: usize) -> Result<()> {
    if st.log_zeta.is_finite() && st.log_z.is_finite() && st.w.is_finite() && st.x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonfinitePath { path, step })
    }
}

/// Simulates one path from `start` to the horizon.
///
/// `increments` has one row per remaining step. Under [`Measure::Q`] they are
/// read as `ΔW̄` and the P-increments `ΔW̄ + σ_Z Δt` are recorded in the
/// bundle. Consumption in the wealth equation is always `I(t, ζ_t)`.
pub fn evolve(
    model: &MarketModel,
    utility: &UtilitySpec,
    grid: &TimeGrid,
    start: &StartState,
    increments: &DMatrix<f64>,
    policy: Option<&dyn PortfolioRule>,
    measure: Measure,
) -> Result<PathBundle> {
    let dims = model.dims();
    let steps = grid
        .steps()
        .checked_sub(start.step)
        .ok_or_else(|| Error::InvalidInput(format!("start index {} beyond grid", start.step)))?;
    if increments.shape() != (steps, dims.d) {
        return Err(Error::InvalidInput(format!(
            "increments are {:?}, expected ({steps}, {})",
            increments.shape(),
            dims.d
        )));
    }
    if start.x.len() != dims.k {
        return Err(Error::InvalidInput(format!("factor state has length {}, expected {}", start.x.len(), dims.k)));
    }
    if !(start.zeta > 0.0) || !(start.z > 0.0) {
        return Err(Error::InvalidInput("zeta and Z must start positive".into()));
    }
    let track = start.w.is_some() || policy.is_some();
    let stepper = Stepper { model, utility, grid, measure };
    let mut scratch = Scratch::new(model);
    let mut st =
        PathState { x: start.x.clone(), log_zeta: start.zeta.ln(), log_z: start.z.ln(), w: start.w.unwrap_or(0.0) };
    let mut x = DMatrix::zeros(steps + 1, dims.k);
    let mut dw_p = DMatrix::zeros(steps, dims.d);
    let mut zeta = Vec::with_capacity(steps + 1);
    let mut z = Vec::with_capacity(steps + 1);
    let mut w = Vec::with_capacity(steps + 1);
    let mut cons = Vec::with_capacity(steps);
    let record =
        |st: &PathState, row: usize, x: &mut DMatrix<f64>, zeta: &mut Vec<f64>, z: &mut Vec<f64>, w: &mut Vec<f64>| {
            x.row_mut(row).copy_from(&DVector::from_column_slice(&st.x).transpose());
            zeta.push(st.log_zeta.exp());
            z.push(st.log_z.exp());
            w.push(st.w);
        };
    record(&st, 0, &mut x, &mut zeta, &mut z, &mut w);
    let mut inc = vec![0.0; dims.d];
    for row in 0..steps {
        let j = start.step + row;
        for c in 0..dims.d {
            inc[c] = increments[(row, c)];
        }
        let c = stepper.step(j, &mut st, &inc, policy, track, &mut scratch)?;
        check_finite(&st, 0, j + 1)?;
        for c in 0..dims.d {
            dw_p[(row, c)] = scratch.dw[c];
        }
        cons.push(c);
        record(&st, row + 1, &mut x, &mut zeta, &mut z, &mut w);
    }
    Ok(PathBundle {
        times: grid.times()[start.step..].to_vec(),
        dw: dw_p,
        x,
        zeta,
        z,
        w: track.then_some(w),
        consumption: track.then_some(cons),
    })
}
