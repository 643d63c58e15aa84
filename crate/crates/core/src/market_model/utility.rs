//! Utilities represented through their inverse marginals.
//!
//! Every supported utility is a sum of CRRA pieces sharing a discount rate:
//!
//! ```text
//! I(t, z)  = Σ (a_i e^{-ρt} / z)^{1/R_i}       running
//! I_φ(z)   = Σ (b_i / z)^{1/R_i}               terminal
//! ```
//!
//! The convex duals are the matching sums of power functions
//! `Ũ(t, z) = Σ (a_i e^{-ρt})^{1/R_i} z^{1-1/R_i} R_i/(1-R_i)`, so that
//! `Ũ_z = -I` with a zero integration constant. Primal utilities are only
//! needed outside hot loops and are recovered by inverting `I` and applying
//! the Fenchel identity.

use crate::{Error, Result};

/// One CRRA piece `a e^{-ρt} u_R(c)` running, `b u_R(w)` terminal, with
/// `u_R(x) = x^{1-R}/(1-R)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CrraTerm {
    pub risk_aversion: f64,
    pub running_weight: f64,
    pub terminal_weight: f64,
}

/// Constants `α, A` with `I(t, z) ≤ A(1 + z^{-α})`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GrowthBound {
    pub alpha: f64,
    pub a: f64,
}

#[derive(Clone, Copy, Debug)]
struct Piece {
    inv_r: f64,
    /// `1 - 1/R`
    power: f64,
    /// `R / (1 - R)`
    dual_factor: f64,
    /// `a^{1/R}`
    run: f64,
    /// `b^{1/R}`
    term: f64,
}

#[derive(Clone, Debug)]
pub struct UtilitySpec {
    terms: Vec<CrraTerm>,
    pieces: Vec<Piece>,
    rho: f64,
}

fn check_risk_aversion(r: f64) -> Result<()> {
    if !(r > 0.0) || r == 1.0 || !r.is_finite() {
        return Err(Error::InvalidRiskAversion(r));
    }
    Ok(())
}

impl UtilitySpec {
    /// General constructor. Terms with both weights zero are dropped.
    pub fn from_terms(rho: f64, terms: &[CrraTerm]) -> Result<Self> {
        if !(rho >= 0.0) || !rho.is_finite() {
            return Err(Error::InvalidInput(format!("discount rate must be >= 0, got {rho}")));
        }
        let mut kept = Vec::new();
        for t in terms {
            check_risk_aversion(t.risk_aversion)?;
            let weights_ok = |w: f64| w >= 0.0 && w.is_finite();
            if !weights_ok(t.running_weight) || !weights_ok(t.terminal_weight) {
                return Err(Error::NonmonotoneInverse(format!("weights must be finite and non-negative, got {t:?}")));
            }
            if t.running_weight > 0.0 || t.terminal_weight > 0.0 {
                kept.push(*t);
            }
        }
        if !kept.iter().any(|t| t.terminal_weight > 0.0) {
            return Err(Error::NonmonotoneInverse("terminal inverse marginal vanishes".into()));
        }
        let pieces = kept
            .iter()
            .map(|t| {
                let inv_r = 1.0 / t.risk_aversion;
                Piece {
                    inv_r,
                    power: 1.0 - inv_r,
                    dual_factor: t.risk_aversion / (1.0 - t.risk_aversion),
                    run: t.running_weight.powf(inv_r),
                    term: t.terminal_weight.powf(inv_r),
                }
            })
            .collect();
        Ok(UtilitySpec { terms: kept, pieces, rho })
    }

    /// `U(t, c) = a e^{-ρt} c^{1-R}/(1-R)`, `φ(w) = b w^{1-R}/(1-R)`.
    pub fn crra(risk_aversion: f64, rho: f64, running_weight: f64, terminal_weight: f64) -> Result<Self> {
        check_risk_aversion(risk_aversion)?;
        if !(running_weight > 0.0 && terminal_weight > 0.0) {
            return Err(Error::InvalidInput(format!(
                "CRRA weights must be positive, got a = {running_weight}, b = {terminal_weight}"
            )));
        }
        Self::from_terms(rho, &[CrraTerm { risk_aversion, running_weight, terminal_weight }])
    }

    /// Two-piece mixture with `R1 > 1 > R2 > 0`: relative risk aversion close
    /// to `R1` at low wealth and to `R2` at high wealth.
    pub fn mixture_crra(r1: f64, r2: f64, a1: f64, a2: f64, b1: f64, b2: f64, rho: f64) -> Result<Self> {
        check_risk_aversion(r1)?;
        check_risk_aversion(r2)?;
        if !(r1 > 1.0 && 1.0 > r2) {
            return Err(Error::InvalidRiskAversion(if r1 <= 1.0 { r1 } else { r2 }));
        }
        if a1 + a2 <= 0.0 {
            return Err(Error::NonmonotoneInverse("running weights are all zero".into()));
        }
        Self::from_terms(
            rho,
            &[
                CrraTerm { risk_aversion: r1, running_weight: a1, terminal_weight: b1 },
                CrraTerm { risk_aversion: r2, running_weight: a2, terminal_weight: b2 },
            ],
        )
    }

    pub fn terms(&self) -> &[CrraTerm] {
        &self.terms
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// The same preferences multiplied by a positive constant.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0) {
            return Err(Error::InvalidInput(format!("scale factor must be positive, got {factor}")));
        }
        let terms: Vec<_> = self
            .terms
            .iter()
            .map(|t| CrraTerm {
                risk_aversion: t.risk_aversion,
                running_weight: t.running_weight * factor,
                terminal_weight: t.terminal_weight * factor,
            })
            .collect();
        Self::from_terms(self.rho, &terms)
    }

    pub fn growth_bound(&self) -> GrowthBound {
        let running = self.pieces.iter().filter(|p| p.run > 0.0);
        let alpha = running.clone().map(|p| p.inv_r).fold(0.0, f64::max);
        let a = running.map(|p| p.run).sum::<f64>().max(f64::MIN_POSITIVE);
        GrowthBound { alpha: alpha.max(f64::MIN_POSITIVE), a }
    }

    /// Coefficients `(c_i, p_i)` with `Ũ(t, z) = Σ c_i z^{p_i}`.
    pub fn running_dual_coefficients(&self, t: f64) -> Vec<(f64, f64)> {
        self.pieces
            .iter()
            .filter(|p| p.run > 0.0)
            .map(|p| (p.run * (-self.rho * t * p.inv_r).exp() * p.dual_factor, p.power))
            .collect()
    }

    /// Coefficients `(c_i, p_i)` with `φ̃(z) = Σ c_i z^{p_i}`.
    pub fn terminal_dual_coefficients(&self) -> Vec<(f64, f64)> {
        self.pieces.iter().filter(|p| p.term > 0.0).map(|p| (p.term * p.dual_factor, p.power)).collect()
    }

    /// Per-piece `(r_i(t), q_i, p_i)` with `Ũ(t, z) = Σ r_i z^{p_i}` and
    /// `φ̃(z) = Σ q_i z^{p_i}`.
    pub(crate) fn dual_pieces(&self, t: f64) -> Vec<(f64, f64, f64)> {
        self.pieces
            .iter()
            .map(|p| {
                let run = p.run * (-self.rho * t * p.inv_r).exp() * p.dual_factor;
                (run, p.term * p.dual_factor, p.power)
            })
            .collect()
    }

    /// `I(t, z)`, the consumption rate whose marginal utility is `z`.
    pub fn inverse_marginal(&self, t: f64, z: f64) -> f64 {
        self.pieces
            .iter()
            .filter(|p| p.run > 0.0)
            .map(|p| p.run * (-self.rho * t * p.inv_r).exp() * z.powf(-p.inv_r))
            .sum()
    }

    /// `∂I/∂z (t, z)`
    pub fn inverse_marginal_deriv(&self, t: f64, z: f64) -> f64 {
        self.pieces
            .iter()
            .filter(|p| p.run > 0.0)
            .map(|p| -p.inv_r * p.run * (-self.rho * t * p.inv_r).exp() * z.powf(-p.inv_r - 1.0))
            .sum()
    }

    /// `I_φ(z)`
    pub fn inverse_marginal_terminal(&self, z: f64) -> f64 {
        self.pieces.iter().filter(|p| p.term > 0.0).map(|p| p.term * z.powf(-p.inv_r)).sum()
    }

    /// `I_φ′(z)`
    pub fn inverse_marginal_terminal_deriv(&self, z: f64) -> f64 {
        self.pieces.iter().filter(|p| p.term > 0.0).map(|p| -p.inv_r * p.term * z.powf(-p.inv_r - 1.0)).sum()
    }

    /// `Ũ(t, z) = sup_c {U(t, c) − zc}`
    pub fn dual_running(&self, t: f64, z: f64) -> f64 {
        self.pieces
            .iter()
            .filter(|p| p.run > 0.0)
            .map(|p| p.run * (-self.rho * t * p.inv_r).exp() * p.dual_factor * z.powf(p.power))
            .sum()
    }

    /// `φ̃(z) = sup_w {φ(w) − zw}`
    pub fn dual_terminal(&self, z: f64) -> f64 {
        self.pieces.iter().filter(|p| p.term > 0.0).map(|p| p.term * p.dual_factor * z.powf(p.power)).sum()
    }

    /// `φ̃′(z) = −I_φ(z)`
    pub fn dual_terminal_deriv(&self, z: f64) -> f64 {
        -self.inverse_marginal_terminal(z)
    }

    /// `φ′(w)`, the inverse of `I_φ`.
    pub fn marginal_terminal(&self, w: f64) -> Result<f64> {
        if !(w > 0.0) || !w.is_finite() {
            return Err(Error::WealthDomain { wealth: w });
        }
        let parts: Vec<(f64, f64)> = self.pieces.iter().filter(|p| p.term > 0.0).map(|p| (p.term, p.inv_r)).collect();
        Ok(invert_power_sum(&parts, w))
    }

    /// `U_c(t, c)`, the inverse of `I(t, ·)`.
    pub fn marginal_running(&self, t: f64, c: f64) -> Result<f64> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::InvalidInput(format!("consumption must be positive, got {c}")));
        }
        let parts: Vec<(f64, f64)> = self
            .pieces
            .iter()
            .filter(|p| p.run > 0.0)
            .map(|p| (p.run * (-self.rho * t * p.inv_r).exp(), p.inv_r))
            .collect();
        if parts.is_empty() {
            return Err(Error::NonmonotoneInverse("running inverse marginal vanishes".into()));
        }
        Ok(invert_power_sum(&parts, c))
    }

    /// `φ(w)`; defined for `w > 0` since `I_φ` maps onto `(0, ∞)`.
    pub fn terminal_utility(&self, w: f64) -> Result<f64> {
        if let [t] = self.terms.as_slice() {
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::WealthDomain { wealth: w });
            }
            let r = t.risk_aversion;
            return Ok(t.terminal_weight * w.powf(1.0 - r) / (1.0 - r));
        }
        let z = self.marginal_terminal(w)?;
        Ok(self.dual_terminal(z) + z * w)
    }

    /// `U(t, c)` for `c > 0`.
    pub fn running_utility(&self, t: f64, c: f64) -> Result<f64> {
        let z = self.marginal_running(t, c)?;
        Ok(self.dual_running(t, z) + z * c)
    }
}

/// Solves `Σ c_i z^{-q_i} = target` for `z > 0` by bisection in `log z`.
fn invert_power_sum(parts: &[(f64, f64)], target: f64) -> f64 {
    if let [(c, q)] = parts {
        return (c / target).powf(1.0 / q);
    }
    let m = parts.len() as f64;
    let eval = |u: f64| parts.iter().map(|(c, q)| c * (-u * q).exp()).sum::<f64>();
    // Some single piece reaches the target at `lo`; every piece is below
    // target/m at `hi`.
    let mut lo = parts.iter().map(|(c, q)| (c / target).ln() / q).fold(f64::NEG_INFINITY, f64::max);
    let mut hi = parts.iter().map(|(c, q)| (c * m / target).ln() / q).fold(f64::NEG_INFINITY, f64::max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if eval(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi)).exp()
}
