//! Implicit projection invariants in analytic-gradient mode, where they are exact.

use junta_core::linalg::op_norm;
use junta_core::projection::{
    implicit_projection, implicit_whitening, isometry_defect, recovery_angle, CoordinateMap, GradientMode,
    PracticalParams,
};
use junta_core::{FunctionSpec, Matrix, QueryOracle, Subspace};
use proptest::prelude::*;

fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

/// Directions must be orthogonal for the closed-form gradient.
fn two_halfspaces(a: &[f64], b: &[f64]) -> FunctionSpec {
    FunctionSpec::Intersection {
        halfspaces: vec![
            junta_core::oracle::Halfspace { direction: unit(a), threshold: 0.0 },
            junta_core::oracle::Halfspace { direction: unit(b), threshold: -0.3 },
        ],
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Retained coordinates are exactly orthonormal against `N_hat`, and `W` is
    /// bounded by `2 / sqrt(eta)`.
    #[test]
    fn whitening_is_isometric(seed in any::<u64>(), m in 3usize..25, eta in 0.01f64..0.5) {
        let f = QueryOracle::new(two_halfspaces(&[1.0, 0.2, 0.0, 0.0], &[-0.2, 1.0, -0.5, 0.1]), None).unwrap();
        let mut p = PracticalParams::new(m, eta, 0.0, 0.3);
        p.seed = seed;
        let out = implicit_projection(&f, &p, GradientMode::Analytic).unwrap();
        prop_assert!(out.m() <= 2.min(m));
        prop_assert!(out.eigenvalues.windows(2).all(|w| w[0] >= w[1] - 1e-12));
        let iso = &out.w_hat * &out.gram_estimate * out.w_hat.transpose();
        prop_assert!((iso - Matrix::identity(out.m(), out.m())).norm() < 1e-8);
        prop_assert!(out.w_norm() <= 2.0 / eta.sqrt() + 1e-9);
        let b = out.gradients.clone().unwrap();
        prop_assert!(isometry_defect(&out, &b).unwrap().pass);
        prop_assert_eq!(out.queries_used, 0);
    }

    /// Raising `eta` never retains more directions.
    #[test]
    fn rank_monotone_in_eta(seed in any::<u64>(), e1 in 0.001f64..1.0, e2 in 0.001f64..1.0) {
        let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
        let f = QueryOracle::new(two_halfspaces(&[1.0, 0.0, 0.3], &[0.3, 1.0, -1.0]), None).unwrap();
        let run = |eta| {
            let mut p = PracticalParams::new(15, eta, 0.0, 0.3);
            p.seed = seed;
            implicit_projection(&f, &p, GradientMode::Analytic).unwrap().m()
        };
        prop_assert!(run(lo) >= run(hi));
    }

    /// Any rank-`k` symmetric PSD input: every retained eigenvalue maps to 1.
    #[test]
    fn whitening_of_random_psd(seed in any::<u64>(), n in 2usize..8, eta in 0.05f64..2.0) {
        let mut r = junta_core::rng::stream(seed, &[1]);
        let g = Matrix::from_fn(n, n, |_, _| junta_core::rng::gaussian_vector(1, &mut r)[0]);
        let a = &g * g.transpose();
        let w = implicit_whitening(&a, eta).unwrap();
        let iso = &w * &a * w.transpose();
        prop_assert!((iso - Matrix::identity(w.nrows(), w.nrows())).norm() < 1e-7);
        prop_assert!(op_norm(&w) <= 2.0 / eta.sqrt() + 1e-9);
    }
}

#[test]
fn recovers_intersection_subspace() {
    let spec = two_halfspaces(&[1.0, 0.0, 0.0, 0.0, 0.0], &[0.0, 0.6, 0.8, 0.0, 0.0]);
    let f = QueryOracle::new(spec.clone(), None).unwrap();
    let mut p = PracticalParams::new(60, 0.05, 0.0, 0.3);
    p.seed = 11;
    let out = implicit_projection(&f, &p, GradientMode::Analytic).unwrap();
    assert_eq!(out.m(), 2);
    let target = Subspace::span(&spec.relevant_directions(), 1e-10).unwrap();
    let angle = recovery_angle(&out, &target).unwrap();
    // Angles near 0 from cosines carry a sqrt(machine eps) floor.
    assert!(angle < 1e-6, "{angle}");
    let map = CoordinateMap::analytic(&out).unwrap();
    assert_eq!(map.error_bound, 0.0);
    // Coordinates only see the relevant subspace.
    let z = [0.0, 0.0, 0.0, 5.0, -3.0];
    assert!(map.coords(&z).norm() < 1e-10);
}

#[test]
fn estimated_mode_counts_every_query() {
    let f = QueryOracle::new(FunctionSpec::axis_halfspace(3, 0, 0.0), None).unwrap();
    let mut p = PracticalParams::new(4, 1.0, 0.2, 0.5);
    p.seed = 2;
    let out = implicit_projection(&f, &p, GradientMode::Estimated).unwrap();
    assert_eq!(out.queries_used, f.queries());
    let again = implicit_projection(&f.fork(), &p, GradientMode::Estimated).unwrap();
    assert_eq!(out, again);
}
