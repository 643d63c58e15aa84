//! Explicit portfolio rules `θ(t, w, X, ζ)` used to assess the lower bound.

use crate::market_model::MarketState;

/// Default admissibility cap on `‖θ‖`, in wealth units.
pub const DEFAULT_CAP: f64 = 1e6;

/// Everything a rule may look at when choosing cash holdings.
pub struct RuleContext<'a> {
    pub t: f64,
    pub step: usize,
    pub w: f64,
    pub zeta: f64,
    pub x: &'a [f64],
    pub market: &'a MarketState,
}

/// Cash holdings in each stock as a function of the current state.
pub trait PortfolioRule: Sync {
    fn holdings(&self, ctx: &RuleContext<'_>, out: &mut [f64]);
}

impl<F> PortfolioRule for F
where
    F: Fn(&RuleContext<'_>, &mut [f64]) + Sync,
{
    fn holdings(&self, ctx: &RuleContext<'_>, out: &mut [f64]) {
        self(ctx, out)
    }
}

/// Scales `v` onto the ball of radius `cap` if it lies outside.
pub fn clamp_norm(v: &mut [f64], cap: f64) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > cap {
        let s = cap / norm;
        v.iter_mut().for_each(|x| *x *= s);
    }
}

/// Keep everything in the riskless asset.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoInvestment;

impl PortfolioRule for NoInvestment {
    fn holdings(&self, _: &RuleContext<'_>, out: &mut [f64]) {
        out.fill(0.0);
    }
}

/// `θ = π w` for fixed proportions `π`.
#[derive(Clone, Debug)]
pub struct ConstantProportion {
    pub proportions: Vec<f64>,
    pub cap: f64,
}

impl ConstantProportion {
    pub fn new(proportions: Vec<f64>) -> Self {
        ConstantProportion { proportions, cap: DEFAULT_CAP }
    }
}

impl PortfolioRule for ConstantProportion {
    fn holdings(&self, ctx: &RuleContext<'_>, out: &mut [f64]) {
        for (o, p) in out.iter_mut().zip(&self.proportions) {
            *o = p * ctx.w;
        }
        clamp_norm(out, self.cap);
    }
}

/// Myopic Merton rule `θ = (σσᵀ)⁻¹(μ − r1) w / R` with coefficients taken at
/// the current factor state. For CRRA preferences this is what the truncated
/// dual rule `(σσᵀ)⁻¹(μ − r1) ζ g_ζζ` reduces to.
#[derive(Clone, Copy, Debug)]
pub struct LocalMerton {
    pub risk_aversion: f64,
    pub cap: f64,
}

impl LocalMerton {
    pub fn new(risk_aversion: f64) -> Self {
        LocalMerton { risk_aversion, cap: DEFAULT_CAP }
    }
}

impl PortfolioRule for LocalMerton {
    fn holdings(&self, ctx: &RuleContext<'_>, out: &mut [f64]) {
        let scale = ctx.w / self.risk_aversion;
        for (o, m) in out.iter_mut().zip(ctx.market.mean_variance.iter()) {
            *o = m * scale;
        }
        clamp_norm(out, self.cap);
    }
}
