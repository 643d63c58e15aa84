//! Market and preference primitives.
//!
//! A [`MarketModel`] bundles the coefficient functions of the factor-driven
//! market as black-box callables. Evaluating them at a factor state yields a
//! [`MarketState`], which also carries the minimum-norm market price of risk
//! and the mean-variance weights `(σσᵀ)⁻¹(μ − r1)`.

mod utility;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

pub use utility::{CrraTerm, GrowthBound, UtilitySpec};

/// Relative threshold on singular values of σ below which the market is
/// treated as degenerate.
pub const RANK_EPS: f64 = 1e-10;

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(&[f64]) -> DVector<f64> + Send + Sync>;
pub type MatrixFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

/// Dimensions of a market: `n` stocks, `d` Brownian drivers, `k` factors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dimensions {
    pub n: usize,
    pub d: usize,
    pub k: usize,
}

/// Market coefficients evaluated at one factor state.
#[derive(Clone, Debug)]
pub struct MarketState {
    pub r: f64,
    pub mu: DVector<f64>,
    /// `μ − r1`
    pub excess: DVector<f64>,
    /// n × d
    pub sigma: DMatrix<f64>,
    /// Minimum-norm solution of `σκ = μ − r1`.
    pub kappa: DVector<f64>,
    pub kappa_sq: f64,
    /// `(σσᵀ)⁻¹(μ − r1)`
    pub mean_variance: DVector<f64>,
    /// k × d
    pub sigma_x: DMatrix<f64>,
    pub mu_x: DVector<f64>,
}

impl MarketState {
    fn build(r: f64, mu: DVector<f64>, sigma: DMatrix<f64>, sigma_x: DMatrix<f64>, mu_x: DVector<f64>) -> Result<Self> {
        let finite = r.is_finite()
            && mu.iter().all(|v| v.is_finite())
            && sigma.iter().all(|v| v.is_finite())
            && sigma_x.iter().all(|v| v.is_finite())
            && mu_x.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonfiniteCoefficient(format!("r = {r}, mu = {:?}", mu.as_slice())));
        }
        let excess = mu.add_scalar(-r);
        let (kappa, mean_variance) = solve_price_of_risk(&sigma, &excess)?;
        let kappa_sq = kappa.norm_squared();
        Ok(MarketState { r, mu, excess, sigma, kappa, kappa_sq, mean_variance, sigma_x, mu_x })
    }
}

/// Returns `(κ, (σσᵀ)⁻¹ e)` for excess return `e`, using the SVD of σ.
fn solve_price_of_risk(sigma: &DMatrix<f64>, excess: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
    let n = sigma.nrows();
    if n == 1 && sigma.ncols() == 1 {
        let s = sigma[(0, 0)];
        if s.abs() == 0.0 {
            return Err(Error::SingularMarket { min_singular: 0.0, threshold: 0.0 });
        }
        return Ok((DVector::from_element(1, excess[0] / s), DVector::from_element(1, excess[0] / (s * s))));
    }
    let svd = sigma.clone().svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let s = &svd.singular_values;
    let s_max = s.max();
    let s_min = s.min();
    let threshold = RANK_EPS * s_max;
    if s.len() < n || !(s_min >= threshold) || s_max == 0.0 {
        return Err(Error::SingularMarket { min_singular: s_min, threshold });
    }
    let y = u.transpose() * excess;
    let y_over_s = y.component_div(s);
    let kappa = v_t.transpose() * &y_over_s;
    let mean_variance = u * y_over_s.component_div(s);
    Ok((kappa, mean_variance))
}

/// Factor-driven market: riskless rate, stock drift and volatility, and the
/// factor diffusion `dX = σ_X dW + μ_X dt`, all functions of the factor state.
///
/// The callables must be safe to evaluate concurrently.
#[derive(Clone)]
pub struct MarketModel {
    dims: Dimensions,
    r: ScalarFn,
    mu: VectorFn,
    sigma: MatrixFn,
    sigma_x: MatrixFn,
    mu_x: VectorFn,
    constant: Option<Arc<MarketState>>,
}

impl std::fmt::Debug for MarketModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MarketModel").field("dims", &self.dims).field("constant", &self.constant.is_some()).finish()
    }
}

impl MarketModel {
    /// Builds a factor-driven market from coefficient callables.
    pub fn new(
        dims: Dimensions,
        r: ScalarFn,
        mu: VectorFn,
        sigma: MatrixFn,
        sigma_x: MatrixFn,
        mu_x: VectorFn,
    ) -> Result<Self> {
        if dims.n == 0 || dims.d < dims.n {
            return Err(Error::InvalidInput(format!("need d >= n >= 1, got n = {}, d = {}", dims.n, dims.d)));
        }
        Ok(MarketModel { dims, r, mu, sigma, sigma_x, mu_x, constant: None })
    }

    /// Constant-coefficient market without factors (the Merton setting).
    pub fn constant(r: f64, mu: DVector<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let (n, d) = sigma.shape();
        if mu.len() != n {
            return Err(Error::InvalidInput(format!("drift has length {} but sigma has {n} rows", mu.len())));
        }
        let dims = Dimensions { n, d, k: 0 };
        let state = MarketState::build(r, mu.clone(), sigma.clone(), DMatrix::zeros(0, d), DVector::zeros(0))?;
        let mut model = MarketModel::new(
            dims,
            Arc::new(move |_| r),
            Arc::new(move |_| mu.clone()),
            Arc::new(move |_| sigma.clone()),
            Arc::new(move |_| DMatrix::zeros(0, d)),
            Arc::new(|_| DVector::zeros(0)),
        )?;
        model.constant = Some(Arc::new(state));
        Ok(model)
    }

    /// One stock, one Brownian motion.
    pub fn black_scholes(r: f64, mu: f64, sigma: f64) -> Result<Self> {
        Self::constant(r, DVector::from_element(1, mu), DMatrix::from_element(1, 1, sigma))
    }

    pub fn dims(&self) -> Dimensions {
        self.dims
    }

    /// The precomputed state when coefficients do not depend on the factor.
    pub fn constant_state(&self) -> Option<&MarketState> {
        self.constant.as_deref()
    }

    /// Evaluates all coefficients at factor state `x`.
    pub fn state_at(&self, x: &[f64]) -> Result<MarketState> {
        if let Some(state) = &self.constant {
            return Ok((**state).clone());
        }
        let Dimensions { n, d, k } = self.dims;
        if x.len() != k {
            return Err(Error::InvalidInput(format!("factor state has length {}, expected {k}", x.len())));
        }
        let mu = (self.mu)(x);
        let sigma = (self.sigma)(x);
        let sigma_x = (self.sigma_x)(x);
        let mu_x = (self.mu_x)(x);
        if mu.len() != n || sigma.shape() != (n, d) || sigma_x.shape() != (k, d) || mu_x.len() != k {
            return Err(Error::InvalidInput("coefficient callable returned wrong shape".into()));
        }
        MarketState::build((self.r)(x), mu, sigma, sigma_x, mu_x)
    }
}

/// Minimum-norm market price of risk `κ = σᵀ(σσᵀ)⁻¹(μ − r1)` at `x`.
pub fn kappa(model: &MarketModel, x: &[f64]) -> Result<DVector<f64>> {
    match model.constant_state() {
        Some(s) => Ok(s.kappa.clone()),
        None => Ok(model.state_at(x)?.kappa),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_asset_sigma() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[0.12, 0.01, 0.03, 0.01, 0.50, 0.01, 0.03, 0.01, 0.27])
    }

    #[test]
    fn one_dimensional_price_of_risk() {
        let m = MarketModel::black_scholes(0.05, 0.10, 0.20).unwrap();
        let k = kappa(&m, &[]).unwrap();
        assert!((k[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn zero_excess_return_gives_zero_kappa() {
        let m = MarketModel::constant(0.05, DVector::from_element(3, 0.05), three_asset_sigma()).unwrap();
        assert!(kappa(&m, &[]).unwrap().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn three_dimensional_matches_direct_solve() {
        let sigma = three_asset_sigma();
        let mu = DVector::from_vec(vec![0.07, 0.25, 0.15]);
        let m = MarketModel::constant(0.05, mu.clone(), sigma.clone()).unwrap();
        let k = kappa(&m, &[]).unwrap();
        let excess = mu.add_scalar(-0.05);
        let direct = sigma.clone().lu().solve(&excess).unwrap();
        assert!((&k - &direct).norm() < 1e-12);
        let residual = (&excess - &sigma * &k).norm();
        assert!(residual <= 1e-10 * (1.0 + mu.norm()));
    }

    #[test]
    fn mean_variance_weights_solve_normal_equations() {
        let sigma = DMatrix::from_row_slice(2, 3, &[0.2, 0.1, 0.0, -0.05, 0.3, 0.1]);
        let mu = DVector::from_vec(vec![0.08, 0.11]);
        let m = MarketModel::constant(0.02, mu.clone(), sigma.clone()).unwrap();
        let s = m.constant_state().unwrap();
        let lhs = &sigma * sigma.transpose() * &s.mean_variance;
        assert!((lhs - &s.excess).norm() < 1e-12);
        assert!((sigma.transpose() * &s.mean_variance - &s.kappa).norm() < 1e-12);
    }

    #[test]
    fn rank_deficient_sigma_is_rejected() {
        let sigma = DMatrix::from_row_slice(2, 2, &[0.2, 0.1, 0.4, 0.2]);
        let err = MarketModel::constant(0.0, DVector::from_vec(vec![0.1, 0.1]), sigma).unwrap_err();
        assert!(matches!(err, Error::SingularMarket { .. }));
    }

    #[test]
    fn more_stocks_than_drivers_is_rejected() {
        let sigma = DMatrix::from_element(2, 1, 0.2);
        assert!(MarketModel::constant(0.0, DVector::from_element(2, 0.1), sigma).is_err());
    }

    #[test]
    fn factor_dependent_state() {
        let dims = Dimensions { n: 1, d: 2, k: 1 };
        let m = MarketModel::new(
            dims,
            Arc::new(|_| 0.01),
            Arc::new(|x| DVector::from_element(1, 0.05 + x[0])),
            Arc::new(|_| DMatrix::from_row_slice(1, 2, &[0.3, 0.4])),
            Arc::new(|_| DMatrix::from_row_slice(1, 2, &[0.0, 1.0])),
            Arc::new(|x| DVector::from_element(1, -x[0])),
        )
        .unwrap();
        let s = m.state_at(&[0.04]).unwrap();
        // σ = (0.3, 0.4), |σ| = 0.5, κ = σᵀ (0.08) / 0.25
        assert!((s.kappa[0] - 0.096).abs() < 1e-14);
        assert!((s.kappa[1] - 0.128).abs() < 1e-14);
        assert!(m.state_at(&[0.0, 1.0]).is_err());
    }
}
