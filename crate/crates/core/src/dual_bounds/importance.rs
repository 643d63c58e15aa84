//! Volatility of the importance-sampling density.

use nalgebra::DVector;

use crate::market_model::UtilitySpec;
use crate::path_engine::IsConfig;

/// `σ_Z = −κ ζφ̃′(ζ)/φ̃(ζ)`, which removes the martingale part of
/// `Z φ̃(ζ)`. Clamped to `‖σ_Z‖ ≤ sigma_z_max`, and zero when `φ̃(ζ)` is too
/// close to a sign change for the ratio to be trusted.
pub fn sigma_z(kappa: &DVector<f64>, zeta: f64, utility: &UtilitySpec, cfg: &IsConfig) -> DVector<f64> {
    let mut out = DVector::zeros(kappa.len());
    sigma_z_into(kappa.as_slice(), zeta, utility, cfg, out.as_mut_slice());
    out
}

pub(crate) fn sigma_z_into(kappa: &[f64], zeta: f64, utility: &UtilitySpec, cfg: &IsConfig, out: &mut [f64]) {
    let dual = utility.dual_terminal(zeta);
    let slope = zeta * utility.dual_terminal_deriv(zeta);
    if !(dual.abs() >= cfg.eps_dual * (1.0 + slope.abs())) {
        out.fill(0.0);
        return;
    }
    let ratio = slope / dual;
    for (o, k) in out.iter_mut().zip(kappa) {
        *o = -k * ratio;
    }
    crate::rules::clamp_norm(out, cfg.sigma_z_max);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kappa() -> DVector<f64> {
        DVector::from_vec(vec![0.0463, 0.3921, 0.3507])
    }

    #[test]
    fn crra_ratio_is_constant() {
        let u = UtilitySpec::crra(3.0, 0.03, 1.0, 2.0).unwrap();
        for zeta in [0.01, 0.7, 3.0, 130.0] {
            let s = sigma_z(&kappa(), zeta, &u, &IsConfig::default());
            // finite-difference oracle for ζφ̃′/φ̃
            let h = 1e-5 * zeta;
            let fd = (u.dual_terminal(zeta + h) - u.dual_terminal(zeta - h)) / (2.0 * h) * zeta / u.dual_terminal(zeta);
            for (a, k) in s.iter().zip(kappa().iter()) {
                assert!((a + 2.0 / 3.0 * k).abs() <= 1e-10);
                assert!((a + fd * k).abs() <= 1e-7);
            }
        }
    }

    #[test]
    fn low_risk_aversion_flips_sign() {
        let u = UtilitySpec::crra(0.5, 0.0, 1.0, 1.0).unwrap();
        let s = sigma_z(&kappa(), 2.0, &u, &IsConfig::default());
        for (a, k) in s.iter().zip(kappa().iter()) {
            assert!((a - k).abs() <= 1e-12);
        }
    }

    #[test]
    fn zero_price_of_risk_gives_zero() {
        let u = UtilitySpec::crra(3.0, 0.0, 1.0, 1.0).unwrap();
        assert!(sigma_z(&DVector::zeros(2), 1.0, &u, &IsConfig::default()).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn clamps_near_sign_change() {
        let u = UtilitySpec::mixture_crra(3.0, 0.5, 10.0, 20.0, 30.0, 10.0, 0.03).unwrap();
        let cfg = IsConfig::default();
        // φ̃ changes sign between these points
        let (mut lo, mut hi) = (1.0, 50.0);
        assert!(u.dual_terminal(lo).signum() != u.dual_terminal(hi).signum());
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if u.dual_terminal(mid).signum() == u.dual_terminal(lo).signum() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let s = sigma_z(&kappa(), lo, &u, &cfg);
        assert!(s.norm() <= cfg.sigma_z_max * (1.0 + 1e-12));
    }
}
