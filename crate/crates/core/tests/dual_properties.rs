use std::sync::Arc;

use dualmc_core::benchmarks::{kl_basis, quantized_expectation, MertonSolution, Quantizer};
use dualmc_core::dual_bounds::{sigma_z, DualSolver, Sampling};
use dualmc_core::market_model::{CrraTerm, Dimensions, MarketModel, UtilitySpec};
use dualmc_core::path_engine::{IsConfig, TimeGrid};
use dualmc_core::rules::{ConstantProportion, LocalMerton, RuleContext};
use nalgebra::{DMatrix, DVector};

fn merton_1d() -> (MarketModel, UtilitySpec) {
    (MarketModel::black_scholes(0.05, 0.10, 0.20).unwrap(), UtilitySpec::crra(3.0, 0.03, 1.0, 1.0).unwrap())
}

fn factor_market() -> MarketModel {
    MarketModel::new(
        Dimensions { n: 1, d: 2, k: 1 },
        Arc::new(|_: &[f64]| 0.04),
        Arc::new(|x: &[f64]| DVector::from_element(1, 0.09 + 0.02 * x[0].tanh())),
        Arc::new(|x: &[f64]| DMatrix::from_row_slice(1, 2, &[0.2 * (1.0 + (-x[0]).exp()).min(3.0), 0.1])),
        Arc::new(|_: &[f64]| DMatrix::from_row_slice(1, 2, &[0.3, 0.4])),
        Arc::new(|x: &[f64]| DVector::from_element(1, -x[0])),
    )
    .unwrap()
}

#[test]
fn crra_estimator_scales_exactly() {
    let (bs, u) = merton_1d();
    let fm = factor_market();
    let grid = TimeGrid::uniform(40, 1.0).unwrap();
    let cases: [(&MarketModel, Vec<f64>, Sampling); 3] = [
        (&bs, vec![], Sampling::p(2000, 3)),
        (&bs, vec![], Sampling::q(2000, 3)),
        (&fm, vec![0.2], Sampling::p(2000, 3)),
    ];
    for (model, x, sampling) in cases {
        let s = DualSolver::new(model, &u, &grid);
        for t_index in [0, 17] {
            let base = s.estimate_g(t_index, 1.4, &x, sampling).unwrap().value;
            for lambda in [0.5, 2.0, 10.0] {
                let scaled = s.estimate_g(t_index, 1.4 * lambda, &x, sampling).unwrap().value;
                let expected = lambda.powf(1.0 - 1.0 / 3.0) * base;
                assert!((scaled / expected - 1.0).abs() <= 1e-12, "λ = {lambda}: {scaled} vs {expected}");
            }
        }
    }
}

#[test]
fn importance_sampling_is_unbiased_and_reduces_variance() {
    let (m, u) = merton_1d();
    let grid = TimeGrid::uniform(100, 1.0).unwrap();
    let s = DualSolver::new(&m, &u, &grid);
    let p = s.estimate_g(0, 6.0, &[], Sampling::p(10_000, 1)).unwrap();
    let q = s.estimate_g(0, 6.0, &[], Sampling::q(10_000, 2)).unwrap();
    let se = (p.std_error.powi(2) + q.std_error.powi(2)).sqrt();
    assert!((p.value - q.value).abs() <= 3.0 * se, "{} vs {} ± {se}", p.value, q.value);

    let terminal =
        UtilitySpec::from_terms(0.0, &[CrraTerm { risk_aversion: 3.0, running_weight: 0.0, terminal_weight: 1.0 }])
            .unwrap();
    let s = DualSolver::new(&m, &terminal, &grid);
    let p = s.estimate_g(0, 6.0, &[], Sampling::p(10_000, 1)).unwrap();
    let q = s.estimate_g(0, 6.0, &[], Sampling::q(10_000, 1)).unwrap();
    assert!(q.std_error.powi(2) <= 0.5 * p.std_error.powi(2));

    let k = DVector::from_vec(vec![0.3, -0.2]);
    for zeta in [0.1, 1.0, 10.0] {
        let sz = sigma_z(&k, zeta, &u, &IsConfig::default());
        assert!((sz + &k * (2.0 / 3.0)).norm() <= 1e-10);
    }
}

#[test]
fn zeta_search_recovers_merton() {
    let (m, u) = merton_1d();
    let grid = TimeGrid::uniform(100, 1.0).unwrap();
    let s = DualSolver::new(&m, &u, &grid);
    let ms = MertonSolution::new(&m, &u, 1.0).unwrap();
    let found = s.find_zeta0(0, 1.0, &[], Sampling::q(1000, 4), None).unwrap();
    assert!((found.zeta0 / ms.zeta0(1.0) - 1.0).abs() < 0.01, "{} vs {}", found.zeta0, ms.zeta0(1.0));
    assert!((found.upper / ms.value(0.0, 1.0) - 1.0).abs() < 0.01);

    // homogeneity under common paths
    for sampling in [Sampling::p(1000, 4), Sampling::q(1000, 4)] {
        let a = s.find_zeta0(0, 1.0, &[], sampling, None).unwrap().zeta0;
        let b = s.find_zeta0(0, 2.0, &[], sampling, None).unwrap().zeta0;
        assert!((b * 8.0 / a - 1.0).abs() <= 3e-4, "{a} {b}");
    }
}

#[test]
fn merton_rule_closes_the_gap() {
    let (m, u) = merton_1d();
    let grid = TimeGrid::uniform(100, 1.0).unwrap();
    let s = DualSolver::new(&m, &u, &grid);
    let ms = MertonSolution::new(&m, &u, 1.0).unwrap();
    let zeta0 = ms.zeta0(1.0);
    let h = s.estimate_h(0, 1.0, zeta0, &[], &LocalMerton::new(3.0), Sampling::p(10_000, 8)).unwrap();
    assert!(h.value >= -3.0 * h.std_error);
    assert!(h.value / zeta0 <= 0.05, "alpha {}", h.value / zeta0);
}

#[test]
fn gap_is_nonnegative_for_bounded_rules() {
    let (m, u) = merton_1d();
    let grid = TimeGrid::uniform(50, 1.0).unwrap();
    let s = DualSolver::new(&m, &u, &grid);
    let wiggle =
        |ctx: &RuleContext<'_>, out: &mut [f64]| out[0] = 0.5 * ctx.w.max(0.0) * (1.0 + 0.5 * (ctx.t * 9.0).sin());
    let rules: [&dyn dualmc_core::rules::PortfolioRule; 3] =
        [&LocalMerton::new(3.0), &ConstantProportion::new(vec![0.2]), &wiggle];
    for rule in rules {
        for sampling in [Sampling::p(2000, 1), Sampling::q(2000, 1)] {
            let h = s.estimate_h(0, 1.0, 7.0, &[], rule, sampling).unwrap();
            assert!(h.value >= -3.0 * h.std_error);
        }
    }
}

#[test]
fn alpha_is_invariant_to_utility_scale() {
    let (m, u) = merton_1d();
    let grid = TimeGrid::uniform(50, 1.0).unwrap();
    let scaled = u.scaled(4.0).unwrap();
    let sampling = Sampling::p(2000, 12);
    let a = DualSolver::new(&m, &u, &grid).bounds(0, 1.0, &[], &LocalMerton::new(3.0), sampling).unwrap();
    let b = DualSolver::new(&m, &scaled, &grid).bounds(0, 1.0, &[], &LocalMerton::new(3.0), sampling).unwrap();
    assert!((b.zeta0 / (4.0 * a.zeta0) - 1.0).abs() <= 3e-4);
    assert!((b.alpha - a.alpha).abs() <= 3e-4 * a.alpha.abs().max(1e-3));
}

#[test]
fn monte_carlo_matches_quantization() {
    let (m, u) = merton_1d();
    let grid = TimeGrid::uniform(100, 1.0).unwrap();
    let ms = MertonSolution::new(&m, &u, 1.0).unwrap();
    let zeta = ms.zeta0(1.0);
    let mc = DualSolver::new(&m, &u, &grid).estimate_g(0, zeta, &[], Sampling::p(10_000, 30)).unwrap();
    let q = Quantizer::build(10, 10_000).unwrap();
    let basis = kl_basis(1.0, 10).unwrap();
    let (kappa, r) = (0.25, 0.05);
    let density = |t: f64, w: f64| zeta * (-kappa * w - (r + 0.5 * kappa * kappa) * t).exp();
    let quant = quantized_expectation(
        &q,
        &basis,
        |t, w| u.dual_running(t, density(t, w)),
        |path| u.dual_terminal(density(1.0, path[path.len() - 1])),
        grid.times(),
    );
    assert!((mc.value - quant).abs() <= 3.0 * mc.std_error, "{} vs {quant} ± {}", mc.value, mc.std_error);
}
