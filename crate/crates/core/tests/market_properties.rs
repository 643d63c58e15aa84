use std::sync::Arc;

use dualmc_core::market_model::{kappa, Dimensions, MarketModel, UtilitySpec};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn specs() -> Vec<UtilitySpec> {
    vec![
        UtilitySpec::crra(3.0, 0.03, 1.0, 2.0).unwrap(),
        UtilitySpec::crra(0.5, 0.0, 2.0, 1.0).unwrap(),
        UtilitySpec::mixture_crra(3.0, 0.5, 10.0, 20.0, 30.0, 10.0, 0.03).unwrap(),
        UtilitySpec::mixture_crra(5.0, 0.2, 1.0, 0.0, 0.5, 2.0, 0.1).unwrap(),
    ]
}

#[test]
fn fenchel_young_inequality() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for u in specs() {
        for _ in 0..1000 {
            let z = 10f64.powf(rng.random_range(-2.0..2.0));
            let w = 10f64.powf(rng.random_range(-2.0..2.0));
            let slack = u.dual_terminal(z) + z * w - u.terminal_utility(w).unwrap();
            let scale = u.dual_terminal(z).abs() + z * w;
            assert!(slack >= -1e-10 * scale.max(1.0), "slack {slack} at z={z}, w={w}");
        }
    }
}

#[test]
fn duals_are_convex() {
    let zs: Vec<f64> = (0..200).map(|i| 10f64.powf(-2.0 + 4.0 * i as f64 / 199.0)).collect();
    for u in specs() {
        for f in [
            Box::new(|z: f64| u.dual_terminal(z)) as Box<dyn Fn(f64) -> f64>,
            Box::new(|z: f64| u.dual_running(0.4, z)),
        ] {
            for k in 1..zs.len() - 1 {
                let (a, b, c) = (zs[k - 1], zs[k], zs[k + 1]);
                let second = ((f(c) - f(b)) / (c - b) - (f(b) - f(a)) / (b - a)) / (c - a);
                assert!(second >= -1e-8, "second difference {second} at {b}");
            }
        }
    }
}

#[test]
fn inverse_marginals_decrease() {
    let zs: Vec<f64> = (0..100).map(|i| 10f64.powf(-2.0 + 4.0 * i as f64 / 99.0)).collect();
    for u in specs() {
        for w in zs.windows(2) {
            assert!(u.inverse_marginal_terminal(w[1]) < u.inverse_marginal_terminal(w[0]));
            if u.terms().iter().any(|t| t.running_weight > 0.0) {
                assert!(u.inverse_marginal(0.3, w[1]) < u.inverse_marginal(0.3, w[0]));
            }
        }
        let gb = u.growth_bound();
        for &z in &zs {
            assert!(u.inverse_marginal(0.0, z) <= gb.a * (1.0 + z.powf(-gb.alpha)) * (1.0 + 1e-12));
        }
    }
}

/// Two stocks, three drivers, one factor moving the volatility.
fn factor_market() -> MarketModel {
    MarketModel::new(
        Dimensions { n: 2, d: 3, k: 1 },
        Arc::new(|x: &[f64]| 0.03 + 0.01 * x[0].sin()),
        Arc::new(|x: &[f64]| DVector::from_vec(vec![0.08 + 0.02 * x[0], 0.12])),
        Arc::new(|x: &[f64]| {
            let s = 1.0 + 0.5 * x[0].tanh();
            DMatrix::from_row_slice(2, 3, &[0.2 * s, 0.05, 0.1, -0.03, 0.3, 0.07 * s])
        }),
        Arc::new(|_: &[f64]| DMatrix::from_row_slice(1, 3, &[0.1, 0.2, 0.3])),
        Arc::new(|x: &[f64]| DVector::from_vec(vec![-0.5 * x[0]])),
    )
    .unwrap()
}

#[test]
fn price_of_risk_residual_and_minimum_norm() {
    let model = factor_market();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let x = [rng.random_range(-3.0..3.0)];
        let s = model.state_at(&x).unwrap();
        let k = kappa(&model, &x).unwrap();
        let excess = &s.mu - DVector::from_element(2, s.r);
        let resid = (&excess - &s.sigma * &k).norm() / (1.0 + excess.norm());
        assert!(resid <= 1e-10);
        // null space of σ is spanned by the cross product of its rows
        let r0 = s.sigma.row(0).transpose();
        let r1 = s.sigma.row(1).transpose();
        let null = r0.cross(&r1).normalize();
        for _ in 0..100 {
            let alt = &k + &null * rng.random_range(-1.0..1.0);
            assert!((&s.sigma * &alt - &excess).norm() <= 1e-10 * (1.0 + excess.norm()));
            assert!(k.norm() <= alt.norm() + 1e-15);
        }
    }
}
