//! Monte Carlo estimates of the dual value `g` and the duality gap `h`, the
//! search for the optimal dual start `ζ₀`, finite-difference partials of `g`,
//! and the resulting two-sided value bounds.
//!
//! Every comparison of `g` across `ζ` at fixed `(t, x)` reuses the same
//! paths. Under P the factor path and `log ζ − log ζ_start` do not depend on
//! `ζ_start`, so each path is reduced once to a handful of power-sum
//! coefficients and `g` can then be evaluated at any `ζ` in `O(M)`. Under Q
//! the drift correction depends on `ζ`, so paths are re-simulated, still from
//! the same per-path streams.

mod golden;
mod importance;

use std::io::Write;

use rayon::prelude::*;

use crate::market_model::{MarketModel, UtilitySpec};
use crate::path_engine::{check_finite, draw_step, path_rng, IsConfig, Measure, PathState, Scratch, Stepper, TimeGrid};
use crate::rules::PortfolioRule;
use crate::stats::{chunked_moments, Moments, CHUNK};
use crate::{Error, Result};

pub use golden::{golden_section, golden_section_widening, GoldenMin};
pub use importance::sigma_z;
pub(crate) use importance::sigma_z_into;

/// Path count, seed and measure of one Monte Carlo estimate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Sampling {
    pub paths: usize,
    pub seed: u64,
    pub importance: bool,
}

impl Sampling {
    /// Plain Monte Carlo under P.
    pub fn p(paths: usize, seed: u64) -> Self {
        Sampling { paths, seed, importance: false }
    }

    /// Importance sampling under Q.
    pub fn q(paths: usize, seed: u64) -> Self {
        Sampling { paths, seed, importance: true }
    }
}

/// Sample mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DualEstimate {
    pub value: f64,
    pub std_error: f64,
    pub paths: usize,
    pub steps: usize,
    pub measure: Measure,
}

impl DualEstimate {
    fn from_moments(m: &Moments, steps: usize, measure: Measure) -> Self {
        DualEstimate { value: m.mean, std_error: m.std_error(), paths: m.count, steps, measure }
    }
}

/// Tolerances and defaults of the dual machinery.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DualSettings {
    pub is: IsConfig,
    /// Relative bracket width at which the `ζ₀` search stops.
    pub zeta_tol: f64,
    /// Relative step of the finite differences in `ζ`.
    pub fd_step: f64,
    /// Floor applied to `g_ζζ`.
    pub eps_conv: f64,
    /// Default bracket is `φ′(w)` divided and multiplied by this factor.
    pub bracket_factor: f64,
    pub max_widenings: usize,
    /// Relative tolerance of the per-path Fenchel–Young check.
    pub fenchel_tol: f64,
}

impl Default for DualSettings {
    fn default() -> Self {
        DualSettings {
            is: IsConfig::default(),
            zeta_tol: 1e-4,
            fd_step: 1e-3,
            eps_conv: 1e-12,
            bracket_factor: 1e3,
            max_widenings: 3,
            fenchel_tol: 1e-9,
        }
    }
}

/// `g` and its first two `ζ`-derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GPartials {
    pub g: f64,
    pub g_zeta: f64,
    pub g_zeta_zeta: f64,
}

/// Result of the `ζ₀` search: the minimiser and the upper bound `g + wζ₀`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZetaSearch {
    pub zeta0: f64,
    pub upper: f64,
}

/// Two-sided bounds on the value at one `(t, w, x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundsReport {
    pub t: f64,
    pub w: f64,
    pub x: Vec<f64>,
    pub zeta0: f64,
    pub lower: f64,
    pub upper: f64,
    /// `h / (ζ₀ w)`: the fraction of wealth that separates the bounds.
    pub alpha: f64,
    pub g_est: DualEstimate,
    pub h_est: DualEstimate,
    pub seed: u64,
}

impl BoundsReport {
    pub fn csv_header(k: usize) -> String {
        let mut cols = vec!["t".to_string(), "w".to_string()];
        cols.extend((1..=k).map(|i| format!("x{i}")));
        cols.extend(["zeta0", "g", "se_g", "h", "se_h", "lower", "upper", "alpha", "M", "N", "seed"].map(String::from));
        cols.join(",")
    }

    pub fn csv_row(&self) -> String {
        let mut cols = vec![self.t.to_string(), self.w.to_string()];
        cols.extend(self.x.iter().map(f64::to_string));
        cols.extend(
            [
                self.zeta0,
                self.g_est.value,
                self.g_est.std_error,
                self.h_est.value,
                self.h_est.std_error,
                self.lower,
                self.upper,
                self.alpha,
            ]
            .map(|v| v.to_string()),
        );
        cols.push(self.g_est.paths.to_string());
        cols.push(self.g_est.steps.to_string());
        cols.push(self.seed.to_string());
        cols.join(",")
    }

    pub fn write_csv<W: Write>(reports: &[BoundsReport], mut out: W) -> std::io::Result<()> {
        let k = reports.first().map_or(0, |r| r.x.len());
        writeln!(out, "{}", Self::csv_header(k))?;
        for r in reports {
            writeln!(out, "{}", r.csv_row())?;
        }
        Ok(())
    }
}

/// `φ̃(ζ) − φ(w) + ζw`, nonnegative by Fenchel–Young.
pub fn fenchel_gap(utility: &UtilitySpec, zeta: f64, w: f64) -> Result<f64> {
    Ok(utility.dual_terminal(zeta) - utility.terminal_utility(w)? + zeta * w)
}

/// Dual estimators for one market, utility and time grid.
#[derive(Clone, Debug)]
pub struct DualSolver<'a> {
    pub model: &'a MarketModel,
    pub utility: &'a UtilitySpec,
    pub grid: &'a TimeGrid,
    pub settings: DualSettings,
}

/// `ζ ↦ g(t, ζ, x)` on a fixed set of paths.
pub struct GCurve<'s, 'a> {
    solver: &'s DualSolver<'a>,
    t_index: usize,
    x: Vec<f64>,
    sampling: Sampling,
    sums: Option<PathSums>,
}

/// Per-path coefficients `S_i` with `g_path(ζ) = Σ_i S_i ζ^{p_i}`.
struct PathSums {
    powers: Vec<f64>,
    values: Vec<f64>,
}

impl GCurve<'_, '_> {
    /// Estimate of `g(t, ζ, x)`.
    pub fn estimate(&self, zeta: f64) -> Result<DualEstimate> {
        check_zeta(zeta)?;
        let s = self.solver;
        let steps = s.grid.steps() - self.t_index;
        let measure = s.measure(self.sampling.importance);
        if steps == 0 {
            return Ok(DualEstimate {
                value: s.utility.dual_terminal(zeta),
                std_error: 0.0,
                paths: self.sampling.paths,
                steps: 0,
                measure,
            });
        }
        let m = match &self.sums {
            Some(sums) => {
                let scale: Vec<f64> = sums.powers.iter().map(|p| zeta.powf(*p)).collect();
                let width = scale.len();
                chunked_moments(
                    self.sampling.paths,
                    || (),
                    |_, i| Ok(sums.values[i * width..(i + 1) * width].iter().zip(&scale).map(|(a, b)| a * b).sum()),
                )?
            }
            None => s.simulate_g(self.t_index, zeta, &self.x, self.sampling)?,
        };
        Ok(DualEstimate::from_moments(&m, steps, measure))
    }
}

fn check_zeta(zeta: f64) -> Result<()> {
    if zeta > 0.0 && zeta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("zeta must be positive and finite, got {zeta}")))
    }
}

impl<'a> DualSolver<'a> {
    pub fn new(model: &'a MarketModel, utility: &'a UtilitySpec, grid: &'a TimeGrid) -> Self {
        DualSolver { model, utility, grid, settings: DualSettings::default() }
    }

    pub fn with_settings(mut self, settings: DualSettings) -> Self {
        self.settings = settings;
        self
    }

    pub fn measure(&self, importance: bool) -> Measure {
        if importance {
            Measure::Q(self.settings.is)
        } else {
            Measure::P
        }
    }

    fn check_inputs(&self, t_index: usize, x: &[f64], sampling: Sampling) -> Result<()> {
        if t_index > self.grid.steps() {
            return Err(Error::InvalidInput(format!(
                "time index {t_index} beyond grid of {} steps",
                self.grid.steps()
            )));
        }
        if x.len() != self.model.dims().k {
            return Err(Error::InvalidInput(format!(
                "factor state has length {}, expected {}",
                x.len(),
                self.model.dims().k
            )));
        }
        if sampling.paths == 0 {
            return Err(Error::InvalidInput("need at least one path".into()));
        }
        Ok(())
    }

    fn stepper(&self, importance: bool) -> Stepper<'_> {
        Stepper { model: self.model, utility: self.utility, grid: self.grid, measure: self.measure(importance) }
    }

    /// Prepares `ζ ↦ g(t_index, ζ, x)` on the paths of `sampling`.
    pub fn g_curve(&self, t_index: usize, x: &[f64], sampling: Sampling) -> Result<GCurve<'_, 'a>> {
        self.check_inputs(t_index, x, sampling)?;
        let sums = if t_index == self.grid.steps() || (sampling.importance && !self.scale_free_q()) {
            None
        } else {
            Some(self.path_sums(t_index, x, sampling)?)
        };
        Ok(GCurve { solver: self, t_index, x: x.to_vec(), sampling, sums })
    }

    /// Whether `σ_Z` is free of `ζ`, which holds when all terminal pieces
    /// share one power `p` (then `σ_Z = −pκ`).
    fn scale_free_q(&self) -> bool {
        let pieces = self.utility.dual_pieces(self.grid.horizon());
        let mut powers = pieces.iter().filter(|p| p.1 != 0.0).map(|p| p.2);
        let first = powers.next();
        powers.all(|p| Some(p) == first)
    }

    /// Per-path power sums, weighted by `Z` under Q. Offsets `log ζ_s − log ζ_t`
    /// do not depend on the start `ζ`, so one pass serves every `ζ`.
    fn path_sums(&self, t_index: usize, x: &[f64], sampling: Sampling) -> Result<PathSums> {
        let n_steps = self.grid.steps();
        let d = self.model.dims().d;
        let terminal: Vec<(f64, f64, f64)> = self.utility.dual_pieces(self.grid.horizon());
        let powers: Vec<f64> = terminal.iter().map(|p| p.2).collect();
        let width = powers.len();
        let running: Vec<Vec<f64>> = (t_index..n_steps)
            .map(|j| self.utility.dual_pieces(self.grid.t(j)).iter().map(|p| p.0 * self.grid.dt(j)).collect())
            .collect();
        let stepper = self.stepper(sampling.importance);
        let mut values = vec![0.0; sampling.paths * width];
        values.par_chunks_mut(CHUNK * width).enumerate().try_for_each(|(c, chunk)| -> Result<()> {
            let mut scratch = Scratch::new(self.model);
            let mut inc = vec![0.0; d];
            for (local, acc) in chunk.chunks_mut(width).enumerate() {
                let path = c * CHUNK + local;
                let mut rng = path_rng(sampling.seed, path as u64);
                let mut st = PathState { x: x.to_vec(), log_zeta: 0.0, log_z: 0.0, w: 0.0 };
                for (row, j) in (t_index..n_steps).enumerate() {
                    for ((a, coef), p) in acc.iter_mut().zip(&running[row]).zip(&powers) {
                        *a += coef * (p * st.log_zeta + st.log_z).exp();
                    }
                    draw_step(&mut rng, self.grid.dt(j), &mut inc);
                    stepper.step(j, &mut st, &inc, None, false, &mut scratch)?;
                    check_finite(&st, path, j + 1)?;
                }
                for (a, piece) in acc.iter_mut().zip(&terminal) {
                    *a += piece.1 * (piece.2 * st.log_zeta + st.log_z).exp();
                }
            }
            Ok(())
        })?;
        Ok(PathSums { powers, values })
    }

    fn simulate_g(&self, t_index: usize, zeta: f64, x: &[f64], sampling: Sampling) -> Result<Moments> {
        let d = self.model.dims().d;
        let stepper = self.stepper(sampling.importance);
        chunked_moments(
            sampling.paths,
            || (Scratch::new(self.model), vec![0.0; d]),
            |(scratch, inc), path| {
                let mut rng = path_rng(sampling.seed, path as u64);
                let mut st = PathState { x: x.to_vec(), log_zeta: zeta.ln(), log_z: 0.0, w: 0.0 };
                let mut acc = 0.0;
                for j in t_index..self.grid.steps() {
                    let dt = self.grid.dt(j);
                    acc += st.log_z.exp() * self.utility.dual_running(self.grid.t(j), st.log_zeta.exp()) * dt;
                    draw_step(&mut rng, dt, inc);
                    stepper.step(j, &mut st, inc, None, false, scratch)?;
                    check_finite(&st, path, j + 1)?;
                }
                Ok(acc + st.log_z.exp() * self.utility.dual_terminal(st.log_zeta.exp()))
            },
        )
    }

    /// Estimate of `g(t, ζ, x) = E[∫ Ũ(s, ζ_s) ds + φ̃(ζ_T)]` by the
    /// left-endpoint rule on the grid.
    pub fn estimate_g(&self, t_index: usize, zeta: f64, x: &[f64], sampling: Sampling) -> Result<DualEstimate> {
        check_zeta(zeta)?;
        self.check_inputs(t_index, x, sampling)?;
        if sampling.importance || t_index == self.grid.steps() {
            return self.g_curve(t_index, x, sampling)?.estimate(zeta);
        }
        let m = self.simulate_g(t_index, zeta, x, sampling)?;
        Ok(DualEstimate::from_moments(&m, self.grid.steps() - t_index, Measure::P))
    }

    /// Estimate of the duality gap `h = E[φ̃(ζ_T) − φ(w_T) + ζ_T w_T]` where
    /// `w` follows the wealth equation under `rule` with consumption
    /// `I(t, ζ_t)`. Every path is checked to be Fenchel–Young nonnegative.
    #[allow(clippy::too_many_arguments)]
    pub fn estimate_h(
        &self,
        t_index: usize,
        w: f64,
        zeta: f64,
        x: &[f64],
        rule: &dyn PortfolioRule,
        sampling: Sampling,
    ) -> Result<DualEstimate> {
        check_zeta(zeta)?;
        self.check_inputs(t_index, x, sampling)?;
        let d = self.model.dims().d;
        let stepper = self.stepper(sampling.importance);
        let tol = self.settings.fenchel_tol;
        let m = chunked_moments(
            sampling.paths,
            || (Scratch::new(self.model), vec![0.0; d]),
            |(scratch, inc), path| {
                let mut rng = path_rng(sampling.seed, path as u64);
                let mut st = PathState { x: x.to_vec(), log_zeta: zeta.ln(), log_z: 0.0, w };
                for j in t_index..self.grid.steps() {
                    draw_step(&mut rng, self.grid.dt(j), inc);
                    stepper.step(j, &mut st, inc, Some(rule), true, scratch)?;
                    check_finite(&st, path, j + 1)?;
                }
                let z_t = st.log_zeta.exp();
                let dual = self.utility.dual_terminal(z_t);
                let primal = self.utility.terminal_utility(st.w)?;
                let slack = dual - primal + z_t * st.w;
                if slack < -tol * (dual.abs() + primal.abs() + (z_t * st.w).abs()) {
                    return Err(Error::FenchelViolation { path, slack });
                }
                Ok(st.log_z.exp() * slack)
            },
        )?;
        Ok(DualEstimate::from_moments(&m, self.grid.steps() - t_index, self.measure(sampling.importance)))
    }

    fn search(&self, curve: &GCurve<'_, '_>, w: f64, bracket: Option<(f64, f64)>) -> Result<ZetaSearch> {
        if !(w > 0.0) || !w.is_finite() {
            return Err(Error::WealthDomain { wealth: w });
        }
        let objective = |z: f64| Ok(curve.estimate(z)?.value + w * z);
        let tol = self.settings.zeta_tol;
        let found = match bracket {
            Some((lo, hi)) => golden_section(objective, lo, hi, tol)?,
            None => {
                let centre = self.utility.marginal_terminal(w)?;
                let f = self.settings.bracket_factor;
                golden_section_widening(objective, centre / f, centre * f, tol, self.settings.max_widenings)?
            }
        };
        Ok(ZetaSearch { zeta0: found.argmin, upper: found.value })
    }

    /// Minimises `ζ ↦ g(t, ζ, x) + wζ` on common paths. Without an explicit
    /// bracket the search starts around `φ′(w)` and widens on endpoint hits.
    pub fn find_zeta0(
        &self,
        t_index: usize,
        w: f64,
        x: &[f64],
        sampling: Sampling,
        bracket: Option<(f64, f64)>,
    ) -> Result<ZetaSearch> {
        let curve = self.g_curve(t_index, x, sampling)?;
        self.search(&curve, w, bracket)
    }

    /// Central differences of `g` at `ζ(1 − δ), ζ, ζ(1 + δ)` on common paths,
    /// with `g_ζζ` floored at `eps_conv`.
    pub fn g_partials(&self, t_index: usize, zeta: f64, x: &[f64], sampling: Sampling) -> Result<GPartials> {
        let curve = self.g_curve(t_index, x, sampling)?;
        partials_on(&curve, zeta, self.settings.fd_step, self.settings.eps_conv)
    }

    /// Upper bound at the optimal `ζ₀` and lower bound for `rule`, with the
    /// efficiency measure `α = h/(ζ₀ w)`.
    pub fn bounds(
        &self,
        t_index: usize,
        w: f64,
        x: &[f64],
        rule: &dyn PortfolioRule,
        sampling: Sampling,
    ) -> Result<BoundsReport> {
        let curve = self.g_curve(t_index, x, sampling)?;
        let search = self.search(&curve, w, None)?;
        let g_est = curve.estimate(search.zeta0)?;
        let h_est = self.estimate_h(t_index, w, search.zeta0, x, rule, sampling)?;
        let upper = g_est.value + w * search.zeta0;
        Ok(BoundsReport {
            t: self.grid.t(t_index),
            w,
            x: x.to_vec(),
            zeta0: search.zeta0,
            lower: upper - h_est.value,
            upper,
            alpha: h_est.value / (search.zeta0 * w),
            g_est,
            h_est,
            seed: sampling.seed,
        })
    }
}

pub(crate) fn partials_on(curve: &GCurve<'_, '_>, zeta: f64, delta: f64, eps_conv: f64) -> Result<GPartials> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidInput(format!("finite-difference step must lie in (0, 1), got {delta}")));
    }
    let h = delta * zeta;
    let lo = curve.estimate(zeta - h)?.value;
    let mid = curve.estimate(zeta)?.value;
    let hi = curve.estimate(zeta + h)?.value;
    Ok(GPartials {
        g: mid,
        g_zeta: (hi - lo) / (2.0 * h),
        g_zeta_zeta: ((hi - 2.0 * mid + lo) / (h * h)).max(eps_conv),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_model::CrraTerm;
    use crate::rules::{LocalMerton, NoInvestment};

    fn bs() -> MarketModel {
        MarketModel::black_scholes(0.05, 0.10, 0.20).unwrap()
    }

    #[test]
    fn terminal_index_is_exact() {
        let (m, u, g) = (bs(), UtilitySpec::crra(3.0, 0.03, 1.0, 1.0).unwrap(), TimeGrid::uniform(10, 1.0).unwrap());
        let s = DualSolver::new(&m, &u, &g);
        for sampling in [Sampling::p(7, 1), Sampling::q(7, 1)] {
            let e = s.estimate_g(10, 2.5, &[], sampling).unwrap();
            assert_eq!(e.value, u.dual_terminal(2.5));
            assert_eq!(e.std_error, 0.0);
        }
    }

    #[test]
    fn importance_power_sums_match_direct_simulation() {
        use crate::market_model::Dimensions;
        use nalgebra::{DMatrix, DVector};
        use std::sync::Arc;
        let m = MarketModel::new(
            Dimensions { n: 1, d: 2, k: 1 },
            Arc::new(|_: &[f64]| 0.04),
            Arc::new(|x: &[f64]| DVector::from_element(1, 0.09 + 0.02 * x[0].tanh())),
            Arc::new(|x: &[f64]| DMatrix::from_row_slice(1, 2, &[0.2 + 0.05 * x[0].sin(), 0.1])),
            Arc::new(|_: &[f64]| DMatrix::from_row_slice(1, 2, &[0.3, 0.4])),
            Arc::new(|x: &[f64]| DVector::from_element(1, -x[0])),
        )
        .unwrap();
        // running pieces with another power leave Q unchanged
        let u = UtilitySpec::from_terms(
            0.03,
            &[
                CrraTerm { risk_aversion: 3.0, running_weight: 1.0, terminal_weight: 2.0 },
                CrraTerm { risk_aversion: 0.5, running_weight: 0.7, terminal_weight: 0.0 },
            ],
        )
        .unwrap();
        let g = TimeGrid::uniform(30, 1.0).unwrap();
        let s = DualSolver::new(&m, &u, &g);
        assert!(s.scale_free_q());
        let sampling = Sampling::q(300, 4);
        let curve = s.g_curve(3, &[0.2], sampling).unwrap();
        assert!(curve.sums.is_some());
        for zeta in [0.3, 1.0, 4.0] {
            let fast = curve.estimate(zeta).unwrap().value;
            let direct = s.simulate_g(3, zeta, &[0.2], sampling).unwrap().mean;
            assert!((fast / direct - 1.0).abs() < 1e-12, "{fast} vs {direct}");
        }
        let mixed = UtilitySpec::mixture_crra(3.0, 0.5, 1.0, 1.0, 1.0, 1.0, 0.03).unwrap();
        assert!(!DualSolver::new(&m, &mixed, &g).scale_free_q());
    }

    #[test]
    fn deterministic_density_matches_riemann_sum() {
        let m = MarketModel::black_scholes(0.05, 0.05, 0.20).unwrap();
        let u = UtilitySpec::crra(3.0, 0.03, 1.5, 2.0).unwrap();
        let g = TimeGrid::uniform(40, 2.0).unwrap();
        let s = DualSolver::new(&m, &u, &g);
        let zeta = 1.7;
        let mut oracle = 0.0;
        for j in 0..40 {
            let t = g.t(j);
            oracle += u.dual_running(t, zeta * (-0.05 * t).exp()) * g.dt(j);
        }
        oracle += u.dual_terminal(zeta * (-0.05f64 * 2.0).exp());
        for sampling in [Sampling::p(5, 3), Sampling::q(5, 3)] {
            let e = s.estimate_g(0, zeta, &[], sampling).unwrap();
            assert!((e.value - oracle).abs() <= 1e-12 * oracle.abs(), "{} vs {oracle}", e.value);
            let c = s.g_curve(0, &[], sampling).unwrap().estimate(zeta).unwrap();
            assert!((c.value - oracle).abs() <= 1e-12 * oracle.abs());
        }
    }

    #[test]
    fn offset_curve_matches_direct_simulation() {
        let m = bs();
        let u = UtilitySpec::mixture_crra(3.0, 0.5, 1.0, 2.0, 3.0, 1.0, 0.03).unwrap();
        let g = TimeGrid::uniform(20, 1.0).unwrap();
        let s = DualSolver::new(&m, &u, &g);
        let curve = s.g_curve(3, &[], Sampling::p(300, 11)).unwrap();
        for zeta in [0.3, 1.0, 4.0] {
            let a = curve.estimate(zeta).unwrap();
            let b = s.estimate_g(3, zeta, &[], Sampling::p(300, 11)).unwrap();
            assert!((a.value - b.value).abs() <= 1e-12 * (1.0 + b.value.abs()));
            assert!((a.std_error - b.std_error).abs() <= 1e-9 * b.std_error);
        }
    }

    #[test]
    fn partials_follow_crra_scaling() {
        let m = bs();
        let u = UtilitySpec::crra(3.0, 0.03, 1.0, 1.0).unwrap();
        let g = TimeGrid::uniform(50, 1.0).unwrap();
        let s = DualSolver::new(&m, &u, &g);
        for sampling in [Sampling::p(500, 5), Sampling::q(500, 5)] {
            let p = s.g_partials(0, 2.0, &[], sampling).unwrap();
            let expected = (1.0 - 1.0 / 3.0) * p.g / 2.0;
            assert!((p.g_zeta / expected - 1.0).abs() <= 1e-6);
            assert!(p.g_zeta_zeta > 0.0);
        }
    }

    #[test]
    fn partials_converge_at_second_order() {
        let m = MarketModel::black_scholes(0.05, 0.05, 0.20).unwrap();
        let u = UtilitySpec::crra(3.0, 0.0, 1.0, 1.0).unwrap();
        let g = TimeGrid::uniform(10, 1.0).unwrap();
        let mut s = DualSolver::new(&m, &u, &g);
        let zeta: f64 = 1.3;
        // closed form: g(ζ) = C ζ^{2/3}
        let c = s.estimate_g(0, 1.0, &[], Sampling::p(1, 0)).unwrap().value;
        let exact = 2.0 / 3.0 * c * zeta.powf(-1.0 / 3.0);
        s.settings.fd_step = 0.02;
        let e1 = (s.g_partials(0, zeta, &[], Sampling::p(1, 0)).unwrap().g_zeta - exact).abs();
        s.settings.fd_step = 0.01;
        let e2 = (s.g_partials(0, zeta, &[], Sampling::p(1, 0)).unwrap().g_zeta - exact).abs();
        assert!((e1 / e2 - 4.0).abs() < 0.2, "ratio {}", e1 / e2);
        assert!(e1 <= 1e-3 * exact.abs());
    }

    #[test]
    fn fenchel_gap_vanishes_at_transversality() {
        for u in [
            UtilitySpec::crra(3.0, 0.0, 1.0, 2.0).unwrap(),
            UtilitySpec::mixture_crra(3.0, 0.5, 10.0, 20.0, 30.0, 10.0, 0.03).unwrap(),
        ] {
            for zeta in [0.2, 1.0, 7.0] {
                let w = u.inverse_marginal_terminal(zeta);
                let gap = fenchel_gap(&u, zeta, w).unwrap();
                let scale = u.dual_terminal(zeta).abs() + zeta * w;
                assert!(gap.abs() <= 1e-12 * scale, "gap {gap}");
            }
        }
    }

    #[test]
    fn negative_terminal_wealth_is_a_domain_error() {
        let m = bs();
        let u = UtilitySpec::crra(3.0, 0.0, 1.0, 1.0).unwrap();
        let g = TimeGrid::uniform(10, 1.0).unwrap();
        let s = DualSolver::new(&m, &u, &g);
        let r = s.estimate_h(0, 1e-3, 1.0, &[], &NoInvestment, Sampling::p(10, 0));
        assert!(matches!(r, Err(Error::WealthDomain { .. })));
    }

    #[test]
    fn better_rule_gives_smaller_gap() {
        let m = MarketModel::black_scholes(0.05, 0.25, 0.20).unwrap();
        // without consumption, uninvested wealth stays positive
        let u = UtilitySpec::from_terms(
            0.03,
            &[CrraTerm { risk_aversion: 3.0, running_weight: 0.0, terminal_weight: 1.0 }],
        )
        .unwrap();
        let g = TimeGrid::uniform(50, 1.0).unwrap();
        let s = DualSolver::new(&m, &u, &g);
        let sampling = Sampling::p(2000, 17);
        let good = s.bounds(0, 1.0, &[], &LocalMerton::new(3.0), sampling).unwrap();
        let bad = s.bounds(0, 1.0, &[], &NoInvestment, sampling).unwrap();
        assert!(good.alpha < bad.alpha);
        assert!(good.lower <= good.upper && bad.lower <= bad.upper);
        assert!(good.lower >= bad.lower);
    }

    #[test]
    fn csv_row_matches_header() {
        let m = bs();
        let u =
            UtilitySpec::from_terms(0.0, &[CrraTerm { risk_aversion: 2.0, running_weight: 0.0, terminal_weight: 1.0 }])
                .unwrap();
        let g = TimeGrid::uniform(5, 1.0).unwrap();
        let s = DualSolver::new(&m, &u, &g);
        let r = s.bounds(0, 1.0, &[], &LocalMerton::new(2.0), Sampling::p(50, 1)).unwrap();
        let mut buf = Vec::new();
        BoundsReport::write_csv(&[r], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0].split(',').count(), lines[1].split(',').count());
        assert!(lines[1].ends_with(",50,5,1"));
    }
}
