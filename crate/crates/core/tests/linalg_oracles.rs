//! Cross-checks of the decompositions against independent Jacobi routines,
//! plus randomized sweeps of the perturbation checkers.

use junta_core::linalg::{
    self, checks, nearest_psd, orthonormalize_rows, spectral_truncate, svd, sym_eigen,
    truncated_pseudoinverse, Subspace,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

fn random_symmetric(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = gaussian(n, n, rng);
    (&g + g.transpose()) * 0.5
}

fn random_psd(n: usize, rank: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = gaussian(n, rank, rng);
    &g * g.transpose() / rank as f64
}

fn random_orthonormal(n: usize, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let q = gaussian(n, k, rng).qr().q();
    q.columns(0, k).into_owned()
}

/// Cyclic Jacobi eigenvalue iteration: eigenvalues descending, eigenvectors as columns.
fn jacobi_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut m = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)].powi(2))
            .sum();
        if off < 1e-26 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * m[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[(k, p)], m[(k, q)]);
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[(p, k)], m[(q, k)]);
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| m[(j, j)].partial_cmp(&m[(i, i)]).unwrap());
    let vals = idx.iter().map(|&i| m[(i, i)]).collect();
    (vals, v.select_columns(idx.iter()))
}

/// One-sided Jacobi SVD for `rows >= cols`: singular values descending.
fn jacobi_singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    let mut u = a.clone();
    let n = u.ncols();
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = u.column(p).norm_squared();
                let beta = u.column(q).norm_squared();
                let gamma = u.column(p).dot(&u.column(q));
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for k in 0..u.nrows() {
                    let (x, y) = (u[(k, p)], u[(k, q)]);
                    u[(k, p)] = c * x - s * y;
                    u[(k, q)] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut s: Vec<f64> = (0..n).map(|j| u.column(j).norm()).collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    s
}

#[test]
fn svd_matches_jacobi_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let a = gaussian(5, 4, &mut rng);
        let dec = svd(&a).unwrap();
        let rel = (dec.reconstruct() - &a).norm() / a.norm();
        assert!(rel < 1e-10, "reconstruction {rel}");
        let oracle = jacobi_singular_values(&a);
        for (x, y) in dec.singular_values.iter().zip(&oracle) {
            assert!((x - y).abs() < 1e-10, "{x} vs {y}");
        }
        let utu = dec.u.transpose() * &dec.u;
        let vtv = dec.v.transpose() * &dec.v;
        assert!((utu - DMatrix::identity(4, 4)).norm() < 1e-10);
        assert!((vtv - DMatrix::identity(4, 4)).norm() < 1e-10);
        assert!(dec
            .singular_values
            .as_slice()
            .windows(2)
            .all(|w| w[0] >= w[1]));
    }
}

#[test]
fn sym_eigen_matches_jacobi_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..20 {
        let a = random_symmetric(6, &mut rng);
        let spec = sym_eigen(&a).unwrap();
        let (vals, _) = jacobi_eigen(&a);
        for (x, y) in spec.eigenvalues.iter().zip(&vals) {
            assert!((x - y).abs() < 1e-10);
        }
        assert!((spec.reconstruct() - &a).norm() < 1e-10 * a.norm());
    }
}

#[test]
fn spectral_truncate_matches_brute_force_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..20 {
        let a = random_symmetric(6, &mut rng);
        let (vals, vecs) = jacobi_eigen(&a);
        let mut sorted = vals.clone();
        sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let eta = 0.5 * (sorted[2] + sorted[3]);
        let mut brute = DMatrix::zeros(6, 6);
        for (i, &l) in vals.iter().enumerate() {
            if l >= eta {
                let v = vecs.column(i);
                brute += l * &v * v.transpose();
            }
        }
        let got = spectral_truncate(&a, eta).unwrap();
        assert!((got - brute).norm() < 1e-10);
    }
}

#[test]
fn truncated_pseudoinverse_moore_penrose() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..20 {
        let a = random_psd(5, 5, &mut rng);
        let eta = sym_eigen(&a).unwrap().eigenvalues[2];
        let at = spectral_truncate(&a, eta).unwrap();
        let b = truncated_pseudoinverse(&a, eta).unwrap();
        let scale = at.norm().max(1.0);
        assert!((&at * &b * &at - &at).norm() < 1e-9 * scale);
        assert!((&b * &at * &b - &b).norm() < 1e-9 * b.norm().max(1.0));
    }
}

#[test]
fn nearest_psd_obtuse_angle_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -2.0]));
    let n = nearest_psd(&a).unwrap();
    assert!((&n - DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0]))).norm() < 1e-14);
    // Projection onto a convex cone: <A - N, P - N> <= 0 for every PSD P.
    for _ in 0..1000 {
        let p = random_psd(2, 2, &mut rng);
        let inner = (&a - &n).dot(&(p - &n));
        assert!(inner <= 1e-12, "{inner}");
    }
}

#[test]
fn orthonormalize_random_well_conditioned() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..50 {
        let x = random_orthonormal(6, 3, &mut rng).transpose() + gaussian(3, 6, &mut rng) * 0.1;
        let y = orthonormalize_rows(&x).unwrap();
        assert!((&y * y.transpose() - DMatrix::identity(3, 3)).norm() < 1e-10);
        let rx = Subspace::row_span(&x, 1e-10).unwrap();
        let ry = Subspace::row_span(&y, 1e-10).unwrap();
        assert!(rx.projector_distance(&ry) < 1e-9);
        assert!(checks::check_approximate_projection(&x).unwrap().pass);
    }
}

#[test]
fn subspace_distance_randomized() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..100 {
        let ep_basis = random_orthonormal(8, 4, &mut rng);
        let coeff = gaussian(4, 2, &mut rng);
        let inside = &ep_basis * coeff;
        let noisy = inside + gaussian(8, 2, &mut rng) * 0.05;
        let e = Subspace::span(&noisy, 1e-12).unwrap();
        let ep = Subspace::from_orthonormal(ep_basis).unwrap();
        let r = checks::check_subspace_distance(&e, &ep).unwrap();
        assert!(r.pass, "{r:?}");
    }
}

#[test]
fn pseudoinverse_stability_sweep() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    for _ in 0..200 {
        let a = random_psd(5, 3, &mut rng);
        let eta = 0.3;
        let e = random_symmetric(5, &mut rng);
        let scale = eta * eta / 100.0 / linalg::op_norm(&e);
        let at = nearest_psd(&(&a + e * scale)).unwrap();
        let r = checks::check_pseudoinverse_stability(&a, &at, eta).unwrap();
        assert!(r.pass, "{r:?}");
    }
}

#[test]
fn davis_kahan_sweep() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    for _ in 0..100 {
        let a = random_symmetric(6, &mut rng);
        let b = &a + random_symmetric(6, &mut rng) * 1e-3;
        let l = sym_eigen(&a).unwrap().eigenvalues;
        let r = checks::check_davis_kahan(&a, &b, (l[1] - 1e-6, l[0] + 1e-6), 0.5 * (l[1] - l[2]))
            .unwrap();
        assert!(r.pass(), "{r:?}");
    }
}

#[test]
fn almost_same_eigen_sweep() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for _ in 0..100 {
        let q = random_orthonormal(5, 5, &mut rng);
        let lambda = 1.0;
        let delta = 0.2;
        let vals = [0.85, 1.1, 1.18, 3.0, 0.1];
        let r = &q * DMatrix::from_diagonal(&DVector::from_row_slice(&vals)) * q.transpose();
        let coef = gaussian(3, 1, &mut rng);
        let w = q.columns(0, 3) * coef;
        let w = w.column(0).into_owned();
        let rep = checks::check_almost_same_eigen(&r, &w, lambda, delta).unwrap();
        assert!(rep.pass, "{rep:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn truncation_splits_spectrum(seed in any::<u64>(), eta in -2.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_symmetric(5, &mut rng);
        let high = spectral_truncate(&a, eta).unwrap();
        let spec = sym_eigen(&a).unwrap();
        let low = spec.weighted_sum(|l| (l < eta - linalg::THRESHOLD_TIE_TOL).then_some(l));
        prop_assert!((high + low - &a).norm() < 1e-10 * a.norm().max(1.0));
    }

    #[test]
    fn nearest_psd_idempotent_and_contractive(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_symmetric(4, &mut rng);
        let n = nearest_psd(&a).unwrap();
        let nn = nearest_psd(&n).unwrap();
        prop_assert!((&nn - &n).norm() < 1e-10);
        for _ in 0..10 {
            let p = random_psd(4, 2, &mut rng);
            prop_assert!((&n - &p).norm() <= (&a - &p).norm() + 1e-10);
        }
    }

    #[test]
    fn pseudoinverse_moore_penrose(seed in any::<u64>(), eta in 0.05f64..1.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_symmetric(5, &mut rng);
        let at = spectral_truncate(&a, eta).unwrap();
        let b = truncated_pseudoinverse(&a, eta).unwrap();
        let rel = |m: DMatrix<f64>, base: &DMatrix<f64>| m.norm() / base.norm().max(1.0);
        prop_assert!(rel(&at * &b * &at - &at, &at) < 1e-9);
        prop_assert!(rel(&b * &at * &b - &b, &b) < 1e-9);
    }

    #[test]
    fn svd_reconstructs(seed in any::<u64>(), rows in 1usize..7, cols in 1usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = gaussian(rows, cols, &mut rng);
        let dec = svd(&a).unwrap();
        prop_assert!((dec.reconstruct() - &a).norm() <= 1e-10 * a.norm().max(1.0));
    }

    #[test]
    fn projector_is_idempotent(seed in any::<u64>(), k in 0usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = Subspace::span(&gaussian(6, k, &mut rng), 1e-12).unwrap();
        let p = s.projector();
        prop_assert!((&p * &p - &p).norm() < 1e-10);
        prop_assert_eq!(s.dim(), k);
    }
}
