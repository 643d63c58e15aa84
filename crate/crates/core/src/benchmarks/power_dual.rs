//! Duals of the form `g(ζ) = Σ_i S_i ζ^{p_i}`.
//!
//! Every CRRA mixture in a constant market has such a dual, because
//! `E[(ζ_s/ζ_t)^p]` is deterministic. The conjugate `V(w) = min_ζ g + wζ`
//! is found by bisection on `g′(ζ) = −w` in `log ζ`.

use crate::market_model::{MarketModel, UtilitySpec};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct PowerSumDual {
    pub coefficients: Vec<f64>,
    pub powers: Vec<f64>,
}

impl PowerSumDual {
    pub fn value(&self, z: f64) -> f64 {
        self.coefficients.iter().zip(&self.powers).map(|(c, p)| c * z.powf(*p)).sum()
    }

    pub fn deriv(&self, z: f64) -> f64 {
        self.coefficients.iter().zip(&self.powers).map(|(c, p)| c * p * z.powf(p - 1.0)).sum()
    }

    pub fn deriv2(&self, z: f64) -> f64 {
        self.coefficients.iter().zip(&self.powers).map(|(c, p)| c * p * (p - 1.0) * z.powf(p - 2.0)).sum()
    }

    /// The density `ζ` with `g′(ζ) = −w`.
    pub fn density_at_wealth(&self, w: f64) -> Result<f64> {
        if !(w > 0.0) {
            return Err(Error::WealthDomain { wealth: w });
        }
        if self.coefficients.iter().all(|c| *c == 0.0) {
            return Err(Error::InvalidInput("dual has no nonzero coefficient".into()));
        }
        // g′ increases from −∞ to 0, so the root is unique
        let (mut lo, mut hi) = (-1.0f64, 1.0f64);
        while self.deriv(lo.exp()) > -w {
            lo -= 10.0;
        }
        while self.deriv(hi.exp()) < -w {
            hi += 10.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.deriv(mid.exp()) < -w {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * (1.0 + mid.abs()) {
                break;
            }
        }
        Ok((0.5 * (lo + hi)).exp())
    }

    /// `min_ζ {g(ζ) + wζ}`
    pub fn primal_value(&self, w: f64) -> Result<f64> {
        let z = self.density_at_wealth(w)?;
        Ok(self.value(z) + w * z)
    }
}

/// Closed-form dual at time `t` of a constant market with horizon `horizon`.
pub fn constant_market_dual(model: &MarketModel, utility: &UtilitySpec, t: f64, horizon: f64) -> Result<PowerSumDual> {
    let state =
        model.constant_state().ok_or_else(|| Error::InvalidInput("closed-form dual needs a constant market".into()))?;
    if !(t <= horizon) {
        return Err(Error::InvalidInput("time is past the horizon".into()));
    }
    let tau = horizon - t;
    let (r, k2) = (state.r, state.kappa_sq);
    let mut out = PowerSumDual { coefficients: Vec::new(), powers: Vec::new() };
    for (run, term, p) in utility.dual_pieces(t) {
        let growth = -p * (r + 0.5 * k2) + 0.5 * p * p * k2;
        // running weights decay like exp(−ρ(1 − p)s)
        let k = growth - utility.rho() * (1.0 - p);
        let integral = if (k * tau).abs() < 1e-12 { tau } else { (k * tau).exp_m1() / k };
        out.coefficients.push(run * integral + term * (growth * tau).exp());
        out.powers.push(p);
    }
    Ok(out)
}
