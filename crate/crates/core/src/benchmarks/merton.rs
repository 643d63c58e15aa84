//! Closed-form Merton solution for CRRA preferences in a constant market.

use nalgebra::DVector;

use crate::market_model::{MarketModel, UtilitySpec};
use crate::{Error, Result};

/// `V(t, w) = f(t) u(w)` with `u(w) = w^{1−R}/(1−R)`, consumption `γ(t) w`
/// and constant proportions `π_M`, for running utility `a e^{−ρt} u(c)` and
/// terminal utility `A u(w)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MertonSolution {
    pub risk_aversion: f64,
    pub rho: f64,
    pub running_weight: f64,
    pub terminal_weight: f64,
    pub horizon: f64,
    pub r: f64,
    pub kappa_sq: f64,
    /// `(R − 1)(r + |κ|²/2R)/R`
    pub b: f64,
    /// `(σσᵀ)⁻¹(μ − r1)/R`
    pub pi_m: DVector<f64>,
}

/// `(1 − e^{−βτ})/β`, continuous at `β = 0`.
fn discount_integral(beta: f64, tau: f64) -> f64 {
    if (beta * tau).abs() < 1e-12 {
        tau
    } else {
        -(-beta * tau).exp_m1() / beta
    }
}

impl MertonSolution {
    /// Solution for a constant-coefficient market and a single CRRA term.
    pub fn new(model: &MarketModel, utility: &UtilitySpec, horizon: f64) -> Result<Self> {
        let state = model
            .constant_state()
            .ok_or_else(|| Error::InvalidInput("closed form needs constant coefficients".into()))?;
        let [term] = utility.terms() else {
            return Err(Error::InvalidInput("closed form needs a single CRRA term".into()));
        };
        if !(horizon > 0.0) {
            return Err(Error::InvalidInput(format!("horizon must be positive, got {horizon}")));
        }
        if !(term.terminal_weight > 0.0) {
            return Err(Error::InvalidInput("closed form needs a positive terminal weight".into()));
        }
        let r_av = term.risk_aversion;
        Ok(MertonSolution {
            risk_aversion: r_av,
            rho: utility.rho(),
            running_weight: term.running_weight,
            terminal_weight: term.terminal_weight,
            horizon,
            r: state.r,
            kappa_sq: state.kappa_sq,
            b: (r_av - 1.0) * (state.r + state.kappa_sq / (2.0 * r_av)) / r_av,
            pi_m: &state.mean_variance / r_av,
        })
    }

    fn root(&self, t: f64) -> f64 {
        let r_av = self.risk_aversion;
        let tau = self.horizon - t;
        let beta = self.b + self.rho / r_av;
        self.terminal_weight.powf(1.0 / r_av) * (-self.b * tau).exp()
            + self.running_weight.powf(1.0 / r_av) * (-self.rho * t / r_av).exp() * discount_integral(beta, tau)
    }

    pub fn f(&self, t: f64) -> f64 {
        self.root(t).powf(self.risk_aversion)
    }

    /// `f′(t)`
    pub fn f_prime(&self, t: f64) -> f64 {
        let r_av = self.risk_aversion;
        let tau = self.horizon - t;
        let beta = self.b + self.rho / r_av;
        let decay = (-self.rho * t / r_av).exp();
        let d_root = self.b * self.terminal_weight.powf(1.0 / r_av) * (-self.b * tau).exp()
            + self.running_weight.powf(1.0 / r_av)
                * decay
                * (-self.rho / r_av * discount_integral(beta, tau) - (-beta * tau).exp());
        r_av * self.root(t).powf(r_av - 1.0) * d_root
    }

    /// Consumption-to-wealth ratio `γ(t) = a^{1/R} e^{−ρt/R} f(t)^{−1/R}`.
    pub fn gamma(&self, t: f64) -> f64 {
        let r_av = self.risk_aversion;
        self.running_weight.powf(1.0 / r_av) * (-self.rho * t / r_av).exp() / self.root(t)
    }

    pub fn value(&self, t: f64, w: f64) -> f64 {
        self.f(t) * w.powf(1.0 - self.risk_aversion) / (1.0 - self.risk_aversion)
    }

    /// `V_w(t, w) = f(t) w^{−R}`
    pub fn marginal_value(&self, t: f64, w: f64) -> f64 {
        self.f(t) * w.powf(-self.risk_aversion)
    }

    /// Optimal dual start `ζ₀ = f(0) w₀^{−R}`.
    pub fn zeta0(&self, w0: f64) -> f64 {
        self.marginal_value(0.0, w0)
    }

    /// Optimal wealth when the state-price density is `ζ`, the inverse of `V_w`.
    pub fn wealth_at_density(&self, t: f64, zeta: f64) -> f64 {
        (self.f(t) / zeta).powf(1.0 / self.risk_aversion)
    }

    /// Dual value `g(t, ζ) = inf_w … = f^{1/R} ζ^{1−1/R} R/(1−R)`.
    pub fn dual_value(&self, t: f64, zeta: f64) -> f64 {
        let r_av = self.risk_aversion;
        self.root(t) * zeta.powf(1.0 - 1.0 / r_av) * r_av / (1.0 - r_av)
    }
}
