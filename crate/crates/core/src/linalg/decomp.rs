use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

use super::{ensure_finite, Scalar, Subspace, SYMMETRY_TOL, THRESHOLD_TIE_TOL};
use crate::{JuntaError, Result};

/// Thin singular value decomposition `A = U diag(D) V^T` with `D` descending.
#[derive(Debug, Clone)]
pub struct Svd<T: Scalar> {
    pub u: DMatrix<T>,
    pub singular_values: DVector<T>,
    pub v: DMatrix<T>,
}

impl<T: Scalar> Svd<T> {
    pub fn reconstruct(&self) -> DMatrix<T> {
        &self.u * DMatrix::from_diagonal(&self.singular_values) * self.v.transpose()
    }

    pub fn rank(&self, tol: T) -> usize {
        self.singular_values.iter().filter(|&&s| s > tol).count()
    }
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues descending.
#[derive(Debug, Clone)]
pub struct SymmetricSpectrum<T: Scalar> {
    pub eigenvalues: DVector<T>,
    /// Orthonormal eigenvectors stored as columns.
    pub eigenvectors: DMatrix<T>,
}

impl<T: Scalar> SymmetricSpectrum<T> {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `sum_i weight(lambda_i) v_i v_i^T` over the eigenpairs for which `weight` returns `Some`.
    pub fn weighted_sum(&self, mut weight: impl FnMut(T) -> Option<T>) -> DMatrix<T> {
        let n = self.dim();
        let mut out = DMatrix::zeros(n, n);
        for (i, &lambda) in self.eigenvalues.iter().enumerate() {
            if let Some(w) = weight(lambda) {
                let v = self.eigenvectors.column(i);
                out.ger(w, &v, &v, T::one());
            }
        }
        out
    }

    pub fn reconstruct(&self) -> DMatrix<T> {
        self.weighted_sum(Some)
    }

    /// Columns of the eigenvectors whose eigenvalue passes `keep`.
    pub fn select(&self, mut keep: impl FnMut(T) -> bool) -> DMatrix<T> {
        let idx: Vec<usize> = (0..self.dim())
            .filter(|&i| keep(self.eigenvalues[i]))
            .collect();
        self.eigenvectors.select_columns(idx.iter())
    }
}

/// Flip each singular/eigen vector pair so that the largest-magnitude entry of
/// `v_i` is positive. Makes decompositions reproducible across backends.
fn canonical_signs<T: Scalar>(v: &mut DMatrix<T>, mut paired: Option<&mut DMatrix<T>>) {
    for j in 0..v.ncols() {
        let mut best = T::zero();
        let mut sign_neg = false;
        for i in 0..v.nrows() {
            let x = v[(i, j)];
            if x.abs() > best.abs() + T::lit(1e-12) {
                best = x;
                sign_neg = x < T::zero();
            }
        }
        if sign_neg {
            v.column_mut(j).neg_mut();
            if let Some(p) = paired.as_deref_mut() {
                p.column_mut(j).neg_mut();
            }
        }
    }
}

fn descending_order<T: Scalar>(values: &DVector<T>) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| {
        values[b]
            .partial_cmp(&values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    idx
}

pub fn svd<T: Scalar>(a: &DMatrix<T>) -> Result<Svd<T>> {
    ensure_finite(a)?;
    if a.is_empty() {
        return Err(JuntaError::Input("empty matrix".into()));
    }
    let raw = SVD::new(a.clone(), true, true);
    let u = raw.u.expect("requested U");
    let v = raw.v_t.expect("requested V^T").transpose();
    let order = descending_order(&raw.singular_values);
    let mut u = u.select_columns(order.iter());
    let mut v = v.select_columns(order.iter());
    let singular_values = DVector::from_iterator(
        order.len(),
        order.iter().map(|&i| raw.singular_values[i]),
    );
    canonical_signs(&mut v, Some(&mut u));
    Ok(Svd {
        u,
        singular_values,
        v,
    })
}

/// Validate near-symmetry and return `(A + A^T)/2`.
///
/// Inputs with `||A - A^T||_F > 1e-8 ||A||_F` are rejected.
pub fn symmetrize_checked<T: Scalar>(a: &DMatrix<T>) -> Result<DMatrix<T>> {
    ensure_finite(a)?;
    if !a.is_square() {
        return Err(JuntaError::Input(format!(
            "expected a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let at = a.transpose();
    let asym = (a - &at).norm().as_f64();
    let scale = a.norm().as_f64();
    if asym > SYMMETRY_TOL * scale {
        return Err(JuntaError::Input(format!(
            "matrix is not symmetric: ||A - A^T||_F = {asym:e} vs ||A||_F = {scale:e}"
        )));
    }
    Ok((a + at) * T::lit(0.5))
}

pub fn sym_eigen<T: Scalar>(a: &DMatrix<T>) -> Result<SymmetricSpectrum<T>> {
    let sym = symmetrize_checked(a)?;
    if sym.is_empty() {
        return Ok(SymmetricSpectrum {
            eigenvalues: DVector::zeros(0),
            eigenvectors: DMatrix::zeros(0, 0),
        });
    }
    let raw = SymmetricEigen::new(sym);
    let order = descending_order(&raw.eigenvalues);
    let mut eigenvectors = raw.eigenvectors.select_columns(order.iter());
    let eigenvalues =
        DVector::from_iterator(order.len(), order.iter().map(|&i| raw.eigenvalues[i]));
    canonical_signs(&mut eigenvectors, None);
    Ok(SymmetricSpectrum {
        eigenvalues,
        eigenvectors,
    })
}

fn retained<T: Scalar>(lambda: T, eta: T) -> bool {
    lambda >= eta - T::lit(THRESHOLD_TIE_TOL)
}

/// `A_{>=eta} = sum over lambda_i >= eta of lambda_i v_i v_i^T`.
pub fn spectral_truncate<T: Scalar>(a: &DMatrix<T>, eta: T) -> Result<DMatrix<T>> {
    let spec = sym_eigen(a)?;
    Ok(spec.weighted_sum(|l| retained(l, eta).then_some(l)))
}

/// `A_{>=eta}^{-1} = sum over lambda_i >= eta of v_i v_i^T / lambda_i`, for `eta > 0`.
pub fn truncated_pseudoinverse<T: Scalar>(a: &DMatrix<T>, eta: T) -> Result<DMatrix<T>> {
    if !(eta > T::zero()) {
        return Err(JuntaError::param("eta", "truncation threshold must be positive"));
    }
    let spec = sym_eigen(a)?;
    Ok(spec.weighted_sum(|l| retained(l, eta).then(|| T::one() / l)))
}

/// Frobenius-nearest PSD matrix: symmetrize, then clip negative eigenvalues to zero.
pub fn nearest_psd<T: Scalar>(a: &DMatrix<T>) -> Result<DMatrix<T>> {
    let spec = sym_eigen(a)?;
    Ok(spec.weighted_sum(|l| (l > T::zero()).then_some(l)))
}

/// Orthonormal basis for the eigenvectors of `a` with eigenvalue in `[lo, hi]`
/// (ties within `1e-12` count as inside).
pub fn eigenspace<T: Scalar>(a: &DMatrix<T>, lo: T, hi: T) -> Result<Subspace<T>> {
    let spec = sym_eigen(a)?;
    let tie = T::lit(THRESHOLD_TIE_TOL);
    let basis = spec.select(|l| l >= lo - tie && l <= hi + tie);
    Ok(Subspace::from_orthonormal_unchecked(basis, a.nrows()))
}

/// Replace `X = U D V^T` (rows `m <= n`, full row rank) by `Y = U V^T`:
/// orthonormal rows spanning the same row space.
pub fn orthonormalize_rows<T: Scalar>(x: &DMatrix<T>) -> Result<DMatrix<T>> {
    let (m, n) = x.shape();
    if m > n {
        return Err(JuntaError::Input(format!(
            "orthonormalize_rows needs rows <= cols, got {m}x{n}"
        )));
    }
    let dec = svd(x)?;
    let smax = dec.singular_values[0].as_f64();
    let smin = dec.singular_values[m - 1].as_f64();
    let tol = 1e-10 * smax.max(1.0);
    if smin <= tol {
        return Err(JuntaError::Degeneracy {
            singular_value: smin,
            tolerance: tol,
        });
    }
    Ok(&dec.u * dec.v.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;

    #[test]
    fn identity_svd_is_trivial() {
        let i3 = DMatrix::<f64>::identity(3, 3);
        let dec = svd(&i3).unwrap();
        assert_relative_eq!(dec.u, i3, epsilon = 1e-14);
        assert_relative_eq!(dec.v, i3, epsilon = 1e-14);
        assert_relative_eq!(dec.singular_values, DVector::from_element(3, 1.0), epsilon = 1e-14);
    }

    #[test]
    fn diag_svd_sorted() {
        let a = dmatrix![0.0, 0.0; 0.0, 3.0];
        let dec = svd(&a).unwrap();
        assert_relative_eq!(dec.singular_values[0], 3.0, epsilon = 1e-14);
        assert_relative_eq!(dec.singular_values[1], 0.0, epsilon = 1e-14);
        assert_relative_eq!(dec.reconstruct(), a, epsilon = 1e-14);
    }

    #[test]
    fn non_finite_rejected() {
        let a = dmatrix![1.0, f64::NAN; 0.0, 1.0];
        assert!(matches!(svd(&a), Err(JuntaError::Input(_))));
    }

    #[test]
    fn truncation_examples() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0, 0.1]));
        let t = spectral_truncate(&a, 0.5).unwrap();
        let want = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0, 0.0]));
        assert_relative_eq!(t, want, epsilon = 1e-14);

        let below = spectral_truncate(&a, 0.05).unwrap();
        assert_relative_eq!(below, a, epsilon = 1e-14);
    }

    #[test]
    fn tie_at_threshold_is_retained() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.5]));
        let t = spectral_truncate(&a, 0.5 + 5e-13).unwrap();
        assert_relative_eq!(t, a, epsilon = 1e-14);
    }

    #[test]
    fn pseudoinverse_examples() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0, 0.1]));
        let p = truncated_pseudoinverse(&a, 0.5).unwrap();
        let want = DMatrix::from_diagonal(&DVector::from_vec(vec![0.25, 1.0, 0.0]));
        assert_relative_eq!(p, want, epsilon = 1e-14);

        let z = DMatrix::<f64>::zeros(4, 4);
        assert_relative_eq!(truncated_pseudoinverse(&z, 0.3).unwrap(), z);
        assert!(matches!(
            truncated_pseudoinverse(&a, 0.0),
            Err(JuntaError::Parameter { name: "eta", .. })
        ));
    }

    #[test]
    fn asymmetry_rules() {
        let bad = dmatrix![1.0, 0.5; 0.0, 1.0];
        assert!(matches!(spectral_truncate(&bad, 0.1), Err(JuntaError::Input(_))));
        // Round-off asymmetry is accepted and symmetrized.
        let ok = dmatrix![1.0, 0.5 + 1e-12; 0.5, 1.0];
        assert!(sym_eigen(&ok).is_ok());
    }

    #[test]
    fn nearest_psd_examples() {
        let a = dmatrix![1.0, 0.0; 0.0, -2.0];
        assert_relative_eq!(nearest_psd(&a).unwrap(), dmatrix![1.0, 0.0; 0.0, 0.0], epsilon = 1e-14);
        let neg = -DMatrix::<f64>::identity(3, 3);
        assert_relative_eq!(nearest_psd(&neg).unwrap(), DMatrix::zeros(3, 3), epsilon = 1e-14);
        let psd = dmatrix![2.0, 1.0; 1.0, 2.0];
        assert_relative_eq!(nearest_psd(&psd).unwrap(), psd, epsilon = 1e-13);
    }

    #[test]
    fn orthonormalize_diagonal_case() {
        let x = dmatrix![2.0, 0.0, 0.0; 0.0, 1.0, 0.0];
        let y = orthonormalize_rows(&x).unwrap();
        let want = dmatrix![1.0, 0.0, 0.0; 0.0, 1.0, 0.0];
        assert_relative_eq!(y, want, epsilon = 1e-14);
        let lhs = (&x - &y).norm();
        let rhs = (&x * x.transpose() - DMatrix::identity(2, 2)).norm();
        assert_relative_eq!(lhs, 1.0, epsilon = 1e-14);
        assert_relative_eq!(rhs, 3.0, epsilon = 1e-14);
    }

    #[test]
    fn orthonormalize_fixed_point_and_degenerate() {
        let x = dmatrix![0.6, 0.8, 0.0; 0.0, 0.0, 1.0];
        assert_relative_eq!(orthonormalize_rows(&x).unwrap(), x, epsilon = 1e-14);
        let rank1 = dmatrix![1.0, 2.0, 3.0; 2.0, 4.0, 6.0];
        match orthonormalize_rows(&rank1) {
            Err(JuntaError::Degeneracy { singular_value, .. }) => assert!(singular_value < 1e-9),
            other => panic!("expected degeneracy, got {other:?}"),
        }
    }

    #[test]
    fn works_in_single_precision() {
        let a = DMatrix::<f32>::from_diagonal(&DVector::from_vec(vec![4.0f32, 1.0, 0.1]));
        let p = truncated_pseudoinverse(&a, 0.5f32).unwrap();
        assert!((p[(0, 0)] - 0.25).abs() < 1e-6);
        assert!(p[(2, 2)].abs() < 1e-6);
    }
}
