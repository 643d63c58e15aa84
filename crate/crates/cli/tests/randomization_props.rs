use dualmc::config::{IncompleteRandomization, TableRandomization};
use dualmc::scenarios::{draw_incomplete_market, draw_table_market, relative_gap};
use dualmc::CliError;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn condition(s: &DMatrix<f64>) -> f64 {
    let eig = (s * s.transpose()).symmetric_eigenvalues();
    eig.max() / eig.min()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn table_draws_are_deterministic_and_regular(
        dim in 1usize..8,
        seed in any::<u64>(),
        max_condition in 1.5f64..1e4,
        max_redraws in 1usize..200,
    ) {
        let rz = TableRandomization { r: 0.05, mu: [0.1, 0.5], sigma: [-1.0, 1.0], max_condition, max_redraws };
        let a = draw_table_market(dim, &rz, seed);
        let b = draw_table_market(dim, &rz, seed);
        match (a, b) {
            (Ok((mu_a, s_a)), Ok((mu_b, s_b))) => {
                prop_assert_eq!(&mu_a, &mu_b);
                prop_assert_eq!(&s_a, &s_b);
                prop_assert!(mu_a.iter().all(|&m| (0.1..=0.5).contains(&m)));
                prop_assert!(condition(&s_a) <= max_condition);
            }
            (Err(CliError::RegularityRejection { attempts: x }), Err(CliError::RegularityRejection { attempts: y })) => {
                prop_assert_eq!(x, y);
            }
            (a, b) => prop_assert!(false, "runs disagree: {:?} vs {:?}", a.is_ok(), b.is_ok()),
        }
    }

    #[test]
    fn incomplete_draws_are_deterministic_and_regular(
        seed in any::<u64>(),
        max_condition in 2.0f64..1e4,
        max_redraws in 1usize..500,
    ) {
        let cfg = IncompleteRandomization { range: [-1.0, 1.0], max_condition, max_redraws };
        let a = draw_incomplete_market(4, 5, 5, &cfg, seed);
        let b = draw_incomplete_market(4, 5, 5, &cfg, seed);
        match (a, b) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(&a, &b);
                prop_assert!(a.r >= 0.0);
                prop_assert!(a.mu.iter().all(|&m| m >= a.r));
                prop_assert!(a.reversion.iter().all(|&k| k > 0.0));
                prop_assert!(condition(&a.sigma0) <= max_condition);
                prop_assert!(a.redraws < max_redraws);
            }
            (Err(CliError::RegularityRejection { attempts: x }), Err(CliError::RegularityRejection { attempts: y })) => {
                prop_assert_eq!(x, y);
                prop_assert_eq!(x, max_redraws);
            }
            (a, b) => prop_assert!(false, "runs disagree: {:?} vs {:?}", a.is_ok(), b.is_ok()),
        }
    }

    #[test]
    fn relative_gap_is_symmetric_and_scale_free(a in 0.01f64..100.0, b in 0.01f64..100.0, c in 0.01f64..100.0) {
        prop_assert_eq!(relative_gap(a, b), relative_gap(b, a));
        prop_assert!((relative_gap(c * a, c * b) - relative_gap(a, b)).abs() <= 1e-12 * (1.0 + relative_gap(a, b)));
        prop_assert_eq!(relative_gap(a, a), 0.0);
    }
}
