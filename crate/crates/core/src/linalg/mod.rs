//! Dense real linear algebra used throughout the pipeline.
//!
//! Decompositions and subspace geometry are generic over [`Scalar`] so the
//! same routines run in `f32` and `f64`; the perturbation checkers in
//! [`checks`] work in `f64` because they report numbers, not matrices.

pub mod checks;
mod decomp;
mod subspace;

pub use decomp::{
    eigenspace, nearest_psd, orthonormalize_rows, spectral_truncate, svd, sym_eigen,
    symmetrize_checked, truncated_pseudoinverse, Svd, SymmetricSpectrum,
};
pub use subspace::{nearest_subspace_inside, principal_angles, Subspace, SubspaceFit};

use nalgebra::{DMatrix, RealField};
use num_traits::{FromPrimitive, ToPrimitive};

/// Real scalar usable by the decomposition routines (`f32`, `f64`).
pub trait Scalar: RealField + Copy + FromPrimitive + ToPrimitive {
    /// Lossy conversion from an `f64` constant.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite constant")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T: RealField + Copy + FromPrimitive + ToPrimitive> Scalar for T {}

/// Relative asymmetry above which a matrix is rejected as non-symmetric.
pub const SYMMETRY_TOL: f64 = 1e-8;

/// Eigenvalues within this distance of a truncation threshold count as retained.
pub const THRESHOLD_TIE_TOL: f64 = 1e-12;

pub fn frobenius<T: Scalar>(a: &DMatrix<T>) -> T {
    a.norm()
}

/// Spectral norm (largest singular value).
pub fn op_norm<T: Scalar>(a: &DMatrix<T>) -> T {
    if a.is_empty() {
        return T::zero();
    }
    a.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(T::zero(), |m, s| if s > m { s } else { m })
}

pub fn all_finite<T: Scalar>(a: &DMatrix<T>) -> bool {
    a.iter().all(|x| x.is_finite())
}

pub(crate) fn ensure_finite<T: Scalar>(a: &DMatrix<T>) -> crate::Result<()> {
    if all_finite(a) {
        Ok(())
    } else {
        Err(crate::JuntaError::Input("matrix has non-finite entries".into()))
    }
}
