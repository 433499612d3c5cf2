use approx::assert_relative_eq;
use nalgebra::DMatrix;
use proptest::prelude::*;

use critpoint_core::bounds::{c_delta, predicted_queries, tradeoff_ratio, ComplexityInputs, Method, GOLDEN};
use critpoint_core::oracle::fd_hessian;
use critpoint_core::restarted::RestartParams;
use critpoint_core::spectral::{p_max, phi, project_interval, sym_eigendecomp};
use critpoint_core::{make_test_objective, FamilyParams, QueryLedger};

fn symmetric(n: usize, entries: &[f64]) -> DMatrix<f64> {
    let m = DMatrix::from_fn(n, n, |i, j| entries[i * n + j]);
    (&m + m.transpose()) * 0.5
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn lambda_over_phi_is_nondecreasing(
        log_delta in -4.0f64..0.0,
        log_ratio in 1.0f64..20.0,
        u in 0.0f64..1.0,
        v in 0.0f64..1.0,
    ) {
        let delta = 10f64.powf(log_delta);
        let l1 = delta * 2f64.powf(log_ratio);
        let (lo, hi) = if u <= v { (u, v) } else { (v, u) };
        let a = -l1 + 2.0 * l1 * lo;
        let b = -l1 + 2.0 * l1 * hi;
        let fa = phi(a, delta, l1).unwrap();
        let fb = phi(b, delta, l1).unwrap();
        prop_assert!(fa > 0.0 && fb > 0.0);
        prop_assert!(a / fa <= b / fb);
    }

    #[test]
    fn p_max_is_at_least_sixteen_and_covers_the_ratio(log_delta in -6.0f64..0.0, log_ratio in 0.0f64..40.0) {
        let delta = 10f64.powf(log_delta);
        let l1 = delta * 2f64.powf(log_ratio);
        let p = p_max(l1, delta);
        prop_assert!(p >= 16);
        prop_assert!(2f64.powi(p as i32) * delta >= l1 * (1.0 - 1e-12));
    }

    #[test]
    fn eigendecomposition_reconstructs(n in 1usize..9, entries in prop::collection::vec(-10.0f64..10.0, 81)) {
        let m = symmetric(n, &entries);
        let dec = sym_eigendecomp(&m).unwrap();
        let scale = m.norm().max(1.0);
        prop_assert!((dec.reconstruct() - &m).amax() <= 1e-10 * scale);
        let gram = dec.eigenvectors.transpose() * &dec.eigenvectors;
        prop_assert!((gram - DMatrix::identity(n, n)).amax() <= 1e-12);
        prop_assert!(dec.eigenvalues.as_slice().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn interval_projectors_split_the_identity(
        n in 1usize..9,
        entries in prop::collection::vec(-10.0f64..10.0, 81),
        cut in 0.0f64..10.0,
    ) {
        let m = symmetric(n, &entries);
        let dec = sym_eigendecomp(&m).unwrap();
        let small = project_interval(&dec, 0.0, cut, true);
        // Smallest double above `cut`, so the two selections are disjoint.
        let above = f64::from_bits(cut.to_bits() + 1);
        let large = project_interval(&dec, above, f64::INFINITY, true);
        prop_assert!((&small * &small - &small).amax() <= 1e-12);
        prop_assert!((&small + &large - DMatrix::identity(n, n)).amax() <= 1e-12);
        let rank = dec.eigenvalues.iter().filter(|l| l.abs() <= cut).count() as f64;
        prop_assert!((small.trace() - rank).abs() <= 1e-12);
    }

    #[test]
    fn c_delta_is_a_minimum_and_falls_with_the_budget(
        l1 in 1e-3f64..1e3,
        l2 in 1e-3f64..1e3,
        big_delta in 1e-3f64..1e3,
        delta in 0.0f64..10.0,
        eps in 1e-4f64..1.0,
        n in 1.0f64..1e6,
    ) {
        let c = c_delta(Some(l1), l2, big_delta, delta, eps, n);
        prop_assert!(c <= l1);
        prop_assert!(c <= delta + big_delta * l2 / (n * eps));
        prop_assert!(c_delta(Some(l1), l2, big_delta, delta, eps, 2.0 * n) <= c);
        prop_assert!(c_delta(None, l2, big_delta, delta, eps, n) >= c);
    }

    #[test]
    fn fd_hessian_costs_two_gradients_per_coordinate(d in 1usize..12, seed in 0u64..1000, log_delta in -3.0f64..0.0) {
        let obj = make_test_objective("quad_cos", d, &FamilyParams::new(), seed).unwrap();
        let mut ledger = QueryLedger::new();
        let est = fd_hessian(&obj, &obj.x0, 10f64.powf(log_delta), true, &mut ledger).unwrap();
        prop_assert_eq!(ledger.grad_count(), 2 * d as u64);
        prop_assert_eq!(ledger.hess_count(), 0);
        prop_assert_eq!(est.max_asymmetry(), 0.0);
    }

    #[test]
    fn restart_radius_respects_its_caps(
        n_h in 1u64..1_000_000,
        l1 in 1e-2f64..1e3,
        l2 in 1e-2f64..1e2,
        big_delta in 1e-2f64..1e2,
        delta in 0.0f64..1.0,
        eps in 1e-4f64..1e-1,
    ) {
        let p = RestartParams::new(n_h, l1, l2, big_delta, delta, eps).unwrap();
        prop_assert!(p.r > 0.0 && p.r.is_finite());
        prop_assert!(p.delta_tilde <= 2.0 * l1);
        prop_assert!(p.delta_tilde >= delta.min(2.0 * l1));
        prop_assert!(p.p_tilde >= 16);
        prop_assert!(p.iter_cap >= 1);
    }

    #[test]
    fn predictions_in_regime_are_positive_and_finite(
        d in 1.0f64..1e3,
        l1 in 1e-2f64..1e2,
        l2 in 1e-2f64..1e2,
        big_delta in 1e-2f64..1e2,
        frac in 1e-6f64..1.0,
        n_h in 1.0f64..1e4,
    ) {
        let eps = frac * (l1 * l1 / l2).min(big_delta.powf(2.0 / 3.0) * l2.cbrt()).min(big_delta * l2 / l1);
        let x = ComplexityInputs { d: d.round(), l1: Some(l1), l2, big_delta, eps, n_h, delta: 0.0 };
        for m in Method::ALL {
            let v = predicted_queries(m, &x).unwrap();
            prop_assert!(v > 0.0 && v.is_finite(), "{} gave {}", m.name(), v);
        }
        prop_assert!(tradeoff_ratio(d.round(), l1, l2, big_delta, eps).ratio <= GOLDEN.sqrt() + 1e-9);
    }
}

#[test]
fn tradeoff_ratio_at_the_unit_point() {
    let r = tradeoff_ratio(1.0, 1.0, 1.0, 1.0, 1.0);
    assert_relative_eq!(r.a, 1.0);
    assert_relative_eq!(r.b, 1.0);
    assert_relative_eq!(r.g, 1.0);
    assert_relative_eq!(r.ratio, 1.0);
}
