use nalgebra::{DMatrix, DVector};

use super::{ensure_finite, op_norm, svd, Scalar};
use crate::{JuntaError, Result};

/// A linear subspace of `R^n` stored through an orthonormal column basis.
///
/// The trivial subspace has a basis with zero columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace<T: Scalar> {
    ambient_dim: usize,
    basis: DMatrix<T>,
}

impl<T: Scalar> Subspace<T> {
    pub fn trivial(ambient_dim: usize) -> Self {
        Self {
            ambient_dim,
            basis: DMatrix::zeros(ambient_dim, 0),
        }
    }

    pub fn full(ambient_dim: usize) -> Self {
        Self {
            ambient_dim,
            basis: DMatrix::identity(ambient_dim, ambient_dim),
        }
    }

    /// Span of the listed standard basis vectors.
    pub fn coordinate(ambient_dim: usize, coords: &[usize]) -> Result<Self> {
        let mut basis = DMatrix::zeros(ambient_dim, coords.len());
        for (j, &c) in coords.iter().enumerate() {
            if c >= ambient_dim {
                return Err(JuntaError::Dimension {
                    expected: ambient_dim,
                    got: c + 1,
                });
            }
            basis[(c, j)] = T::one();
        }
        Self::from_orthonormal(basis)
    }

    /// Wrap a basis whose columns must already be orthonormal (checked to `1e-6`
    /// in `f32`-safe relative terms).
    pub fn from_orthonormal(basis: DMatrix<T>) -> Result<Self> {
        ensure_finite(&basis)?;
        let k = basis.ncols();
        let gram = basis.transpose() * &basis;
        let defect = (gram - DMatrix::identity(k, k)).norm().as_f64();
        let tol = if std::mem::size_of::<T>() <= 4 { 1e-4 } else { 1e-8 };
        if defect > tol {
            return Err(JuntaError::Input(format!(
                "basis columns are not orthonormal (defect {defect:e})"
            )));
        }
        Ok(Self {
            ambient_dim: basis.nrows(),
            basis,
        })
    }

    pub(crate) fn from_orthonormal_unchecked(basis: DMatrix<T>, ambient_dim: usize) -> Self {
        debug_assert_eq!(basis.nrows(), ambient_dim);
        Self { ambient_dim, basis }
    }

    /// Span of the columns of `vectors`. Directions with singular value at
    /// most `rank_tol` times the largest are discarded.
    pub fn span(vectors: &DMatrix<T>, rank_tol: f64) -> Result<Self> {
        let n = vectors.nrows();
        if vectors.ncols() == 0 {
            return Ok(Self::trivial(n));
        }
        let dec = svd(vectors)?;
        let smax = dec.singular_values[0].as_f64();
        if smax == 0.0 {
            return Ok(Self::trivial(n));
        }
        let r = dec
            .singular_values
            .iter()
            .filter(|s| s.as_f64() > rank_tol * smax)
            .count();
        Ok(Self {
            ambient_dim: n,
            basis: dec.u.columns(0, r).into_owned(),
        })
    }

    /// Span of the rows of `rows`.
    pub fn row_span(rows: &DMatrix<T>, rank_tol: f64) -> Result<Self> {
        Self::span(&rows.transpose(), rank_tol)
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<T> {
        &self.basis
    }

    pub fn projector(&self) -> DMatrix<T> {
        &self.basis * self.basis.transpose()
    }

    /// Projector onto the orthogonal complement.
    pub fn complement_projector(&self) -> DMatrix<T> {
        DMatrix::identity(self.ambient_dim, self.ambient_dim) - self.projector()
    }

    pub fn complement(&self) -> Self {
        if self.dim() == 0 {
            return Self::full(self.ambient_dim);
        }
        let p = self.complement_projector();
        let spec = super::sym_eigen(&p).expect("projector is symmetric");
        let basis = spec.select(|l| l > T::lit(0.5));
        Self::from_orthonormal_unchecked(basis, self.ambient_dim)
    }

    pub fn project(&self, x: &DVector<T>) -> DVector<T> {
        &self.basis * (self.basis.transpose() * x)
    }

    /// Coordinates of `x` in the stored basis.
    pub fn coords(&self, x: &DVector<T>) -> DVector<T> {
        self.basis.transpose() * x
    }

    /// `||Pi_self - Pi_other||_F`.
    pub fn projector_distance(&self, other: &Self) -> T {
        (self.projector() - other.projector()).norm()
    }

    /// `||Pi_self Pi_{other^perp}||_2`: how far `self` sticks out of `other`.
    pub fn excess_op(&self, other: &Self) -> T {
        op_norm(&(self.projector() * other.complement_projector()))
    }

    /// `||Pi_self Pi_{other^perp}||_F`.
    pub fn excess_fro(&self, other: &Self) -> T {
        (self.projector() * other.complement_projector()).norm()
    }
}

/// Principal angles between two subspaces in ascending order.
pub fn principal_angles<T: Scalar>(a: &Subspace<T>, b: &Subspace<T>) -> Result<Vec<T>> {
    if a.ambient_dim() != b.ambient_dim() {
        return Err(JuntaError::Dimension {
            expected: a.ambient_dim(),
            got: b.ambient_dim(),
        });
    }
    let r = a.dim().min(b.dim());
    if r == 0 {
        return Ok(Vec::new());
    }
    let cross = a.basis().transpose() * b.basis();
    let dec = svd(&cross)?;
    let mut angles: Vec<T> = dec
        .singular_values
        .iter()
        .take(r)
        .map(|&c| c.min(T::one()).max(-T::one()).acos())
        .collect();
    angles.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
    Ok(angles)
}

/// Result of fitting a subspace of `E'` to `E`.
#[derive(Debug, Clone)]
pub struct SubspaceFit<T: Scalar> {
    /// `E~`, a subspace of `E'` with the dimension of `E`.
    pub subspace: Subspace<T>,
    /// `||Pi_E Pi_{E'^perp}||_2`.
    pub excess_op: T,
    /// `||Pi_E Pi_{E'^perp}||_F`.
    pub excess_fro: T,
    /// `||Pi_E - Pi_{E~}||_F`.
    pub distance: T,
}

/// Find `E~ ⊆ E'` with `dim E~ = dim E` close to `E`, taken from the right
/// singular vectors of `Pi_E Pi_{E'}`.
///
/// Fails with a geometry error unless `||Pi_E Pi_{E'^perp}||_2 < 1`.
pub fn nearest_subspace_inside<T: Scalar>(
    e: &Subspace<T>,
    eprime: &Subspace<T>,
) -> Result<SubspaceFit<T>> {
    if e.ambient_dim() != eprime.ambient_dim() {
        return Err(JuntaError::Dimension {
            expected: e.ambient_dim(),
            got: eprime.ambient_dim(),
        });
    }
    let n = e.ambient_dim();
    let k = e.dim();
    let excess_op = e.excess_op(eprime);
    let excess_fro = e.excess_fro(eprime);
    if excess_op.as_f64() >= 1.0 - 1e-12 || k > eprime.dim() {
        return Err(JuntaError::Geometry {
            op_norm: excess_op.as_f64(),
        });
    }
    if k == 0 {
        return Ok(SubspaceFit {
            subspace: Subspace::trivial(n),
            excess_op,
            excess_fro,
            distance: T::zero(),
        });
    }
    // Work in coordinates: Pi_E Pi_E' = Q_E (Q_E^T Q_E') Q_E'^T, so the right
    // singular vectors are Q_E' times those of the small k x k' cross matrix.
    let cross = e.basis().transpose() * eprime.basis();
    let dec = svd(&cross)?;
    let v = eprime.basis() * dec.v.columns(0, k);
    let subspace = Subspace::from_orthonormal_unchecked(v, n);
    let distance = e.projector_distance(&subspace);
    Ok(SubspaceFit {
        subspace,
        excess_op,
        excess_fro,
        distance,
    })
}
