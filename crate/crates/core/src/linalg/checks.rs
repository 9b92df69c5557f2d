//! Numerical checkers for matrix and subspace perturbation inequalities.
//!
//! Every checker returns both sides of its inequality. `pass` means
//! `lhs <= rhs` up to a round-off allowance.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{
    nearest_subspace_inside, op_norm, orthonormalize_rows, sym_eigen, truncated_pseudoinverse,
    Subspace, THRESHOLD_TIE_TOL,
};
use crate::{JuntaError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs`; negative on failure.
    pub slack: f64,
    pub pass: bool,
    /// The inequality holds for trivial reasons (an empty subspace, say).
    pub vacuous: bool,
    /// Intermediate quantities worth looking at when a check is close.
    pub details: BTreeMap<String, f64>,
}

impl CheckReport {
    pub fn new(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        let mut r = Self {
            name: name.into(),
            lhs,
            rhs,
            slack: 0.0,
            pass: false,
            vacuous: false,
            details: BTreeMap::new(),
        };
        r.rescore();
        r
    }

    pub fn vacuous(name: impl Into<String>) -> Self {
        let mut r = Self::new(name, 0.0, 0.0);
        r.vacuous = true;
        r
    }

    pub fn detail(mut self, key: &str, value: f64) -> Self {
        self.details.insert(key.to_string(), value);
        self
    }

    /// Same check against `factor * rhs`. Used for negative controls.
    pub fn with_bound_scaled(&self, factor: f64) -> Self {
        let mut r = self.clone();
        r.rhs *= factor;
        r.rescore();
        r
    }

    fn rescore(&mut self) {
        self.slack = self.rhs - self.lhs;
        let allowance = 1e-12 * self.rhs.abs().max(1.0);
        self.pass = self.vacuous || (self.lhs.is_finite() && self.lhs <= self.rhs + allowance);
    }
}

fn ensure_psd(a: &DMatrix<f64>, what: &str) -> Result<()> {
    let spec = sym_eigen(a)?;
    let scale = spec.eigenvalues.iter().fold(1.0f64, |m, l| m.max(l.abs()));
    if let Some(&min) = spec.eigenvalues.iter().last() {
        if min < -1e-9 * scale {
            return Err(JuntaError::Input(format!(
                "{what} is not PSD (eigenvalue {min:e})"
            )));
        }
    }
    Ok(())
}

/// `||(A_{>=eta}^{-1} - Atilde_{>=eta/2}^{-1}) Pi_V||_2 <= 20 ||A||_F sqrt(||A - Atilde||_2) / eta^{5/2}`
/// with `V` the span of eigenvectors of `A` with eigenvalue at least `eta`.
pub fn check_pseudoinverse_stability(
    a: &DMatrix<f64>,
    atilde: &DMatrix<f64>,
    eta: f64,
) -> Result<CheckReport> {
    if !(eta > 0.0) {
        return Err(JuntaError::param("eta", "must be positive"));
    }
    ensure_psd(a, "A")?;
    ensure_psd(atilde, "Atilde")?;
    let spec = sym_eigen(a)?;
    let pi_v = spec.weighted_sum(|l| (l >= eta - THRESHOLD_TIE_TOL).then_some(1.0));
    let diff = truncated_pseudoinverse(a, eta)? - truncated_pseudoinverse(atilde, eta / 2.0)?;
    let lhs = op_norm(&(diff * pi_v));
    let pert = op_norm(&(a - atilde));
    let rhs = 20.0 * a.norm() * pert.sqrt() / eta.powf(2.5);
    Ok(CheckReport::new("pseudoinverse_stability", lhs, rhs).detail("perturbation_op", pert))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DavisKahanReport {
    pub operator: CheckReport,
    pub frobenius: CheckReport,
}

impl DavisKahanReport {
    pub fn pass(&self) -> bool {
        self.operator.pass && self.frobenius.pass
    }
}

/// `||Pi_{E1} Pi_{E2}|| <= pi/(2 delta) ||A - B||` in operator and Frobenius norm,
/// where `E1` is the `A`-eigenspace inside `[lo, hi]` and `E2` the
/// `B`-eigenspace outside `[lo - delta, hi + delta]`.
pub fn check_davis_kahan(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    interval: (f64, f64),
    delta: f64,
) -> Result<DavisKahanReport> {
    if !(delta > 0.0) {
        return Err(JuntaError::param("delta", "must be positive"));
    }
    let (lo, hi) = interval;
    if lo > hi {
        return Err(JuntaError::param("interval", "lower end above upper end"));
    }
    if a.shape() != b.shape() {
        return Err(JuntaError::Dimension {
            expected: a.nrows(),
            got: b.nrows(),
        });
    }
    let sa = sym_eigen(a)?;
    let sb = sym_eigen(b)?;
    let e1 = sa.select(|l| l >= lo && l <= hi);
    let e2 = sb.select(|l| l < lo - delta || l > hi + delta);
    if e1.ncols() == 0 || e2.ncols() == 0 {
        return Ok(DavisKahanReport {
            operator: CheckReport::vacuous("davis_kahan_operator"),
            frobenius: CheckReport::vacuous("davis_kahan_frobenius"),
        });
    }
    // ||Pi_1 Pi_2|| = ||Q_1^T Q_2|| for orthonormal bases, in both norms.
    let cross = e1.transpose() * &e2;
    let d = a - b;
    let c = std::f64::consts::PI / (2.0 * delta);
    Ok(DavisKahanReport {
        operator: CheckReport::new("davis_kahan_operator", op_norm(&cross), c * op_norm(&d)),
        frobenius: CheckReport::new("davis_kahan_frobenius", cross.norm(), c * d.norm()),
    })
}

/// `||I - W B^T B W^T||_F <= (4/eta) ||Nhat - B^T B||_F`.
///
/// `w_hat` is `r x M` (retained rows only) and `b` is `n x M`, its columns
/// being the gradients. The detail `projector_gap` is `||Pi_Ehat - B W^T W B^T||_F`,
/// equal to the left side whenever `W B^T` has full row rank.
pub fn check_almost_isometry(
    w_hat: &DMatrix<f64>,
    b: &DMatrix<f64>,
    n_hat: &DMatrix<f64>,
    eta: f64,
) -> Result<CheckReport> {
    if !(eta > 0.0) {
        return Err(JuntaError::param("eta", "must be positive"));
    }
    let m = b.ncols();
    if w_hat.ncols() != m || n_hat.shape() != (m, m) {
        return Err(JuntaError::Dimension {
            expected: m,
            got: w_hat.ncols(),
        });
    }
    let r = w_hat.nrows();
    let rows = w_hat * b.transpose();
    let gram = &rows * rows.transpose();
    let lhs = (DMatrix::identity(r, r) - gram).norm();
    let btb = b.transpose() * b;
    let rhs = 4.0 / eta * (n_hat - &btb).norm();
    let ehat = Subspace::row_span(&rows, 1e-10)?;
    let pi_hat = rows.transpose() * &rows;
    let gap = (ehat.projector() - pi_hat).norm();
    Ok(CheckReport::new("almost_isometry", lhs, rhs).detail("projector_gap", gap))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlmostSameSubspaceReport {
    /// Bound `20 ||N||_F ||N||_2 sqrt(||Nhat - N||_2) / eta^{5/2}`.
    pub mixed_norms: CheckReport,
    /// Bound `20 ||N||_2^2 sqrt(||Nhat - N||_2) / eta^{5/2}`.
    pub operator_norms: CheckReport,
}

/// `||Pi_{E>=eta(B B^T)} (I - B W^T W B^T)||_2` against both readings of the
/// bound, with `N = B^T B`.
pub fn check_almost_same_subspace(
    b: &DMatrix<f64>,
    w_hat: &DMatrix<f64>,
    n_hat: &DMatrix<f64>,
    eta: f64,
) -> Result<AlmostSameSubspaceReport> {
    if !(eta > 0.0) {
        return Err(JuntaError::param("eta", "must be positive"));
    }
    let n = b.nrows();
    let bbt = b * b.transpose();
    let spec = sym_eigen(&bbt)?;
    let pi = spec.weighted_sum(|l| (l >= eta - THRESHOLD_TIE_TOL).then_some(1.0));
    let approx = b * w_hat.transpose() * w_hat * b.transpose();
    let lhs = op_norm(&(pi * (DMatrix::identity(n, n) - approx)));
    let nmat = b.transpose() * b;
    let pert = op_norm(&(n_hat - &nmat)).sqrt();
    let nop = op_norm(&nmat);
    let scale = 20.0 * pert / eta.powf(2.5);
    Ok(AlmostSameSubspaceReport {
        mixed_norms: CheckReport::new("almost_same_subspace_mixed", lhs, scale * nmat.norm() * nop),
        operator_norms: CheckReport::new("almost_same_subspace_operator", lhs, scale * nop * nop),
    })
}

/// `||R^{-1} w - w/lambda|| <= (2 delta / lambda^2) ||w||` for PSD `R` and `w`
/// inside the `[lambda - delta, lambda + delta]` eigenband, `lambda > 2 delta`.
pub fn check_almost_same_eigen(
    r: &DMatrix<f64>,
    w: &DVector<f64>,
    lambda: f64,
    delta: f64,
) -> Result<CheckReport> {
    if !(delta > 0.0 && lambda > 2.0 * delta) {
        return Err(JuntaError::param("lambda", "need lambda > 2 delta > 0"));
    }
    ensure_psd(r, "R")?;
    let spec = sym_eigen(r)?;
    let in_band = |l: f64| (l - lambda).abs() <= delta + THRESHOLD_TIE_TOL;
    let band = spec.select(in_band);
    let outside = w - &band * (band.transpose() * w);
    if outside.norm() > 1e-9 * w.norm().max(1.0) {
        return Err(JuntaError::Input(
            "w is not inside the requested eigenband".into(),
        ));
    }
    let rinv_w = spec.weighted_sum(|l| in_band(l).then(|| 1.0 / l)) * w;
    let lhs = (rinv_w - w / lambda).norm();
    let rhs = 2.0 * delta / (lambda * lambda) * w.norm();
    Ok(CheckReport::new("almost_same_eigen", lhs, rhs))
}

/// `||Pi_E - Pi_Etilde||_F^2 <= 8 ||Pi_E Pi_{E'^perp}||_F^2` for the subspace
/// `Etilde ⊆ E'` returned by [`nearest_subspace_inside`].
pub fn check_subspace_distance(e: &Subspace<f64>, eprime: &Subspace<f64>) -> Result<CheckReport> {
    let fit = nearest_subspace_inside(e, eprime)?;
    Ok(CheckReport::new(
        "subspace_distance",
        fit.distance.powi(2),
        8.0 * fit.excess_fro.powi(2),
    )
    .detail("excess_op", fit.excess_op))
}

/// `||X - Y||_F <= ||X X^T - I||_F` with `Y` the row orthonormalization of `X`.
pub fn check_approximate_projection(x: &DMatrix<f64>) -> Result<CheckReport> {
    let y = orthonormalize_rows(x)?;
    let m = x.nrows();
    let lhs = (x - &y).norm();
    let rhs = (x * x.transpose() - DMatrix::identity(m, m)).norm();
    Ok(CheckReport::new("approximate_projection", lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;

    #[test]
    fn pseudoinverse_stability_identical_inputs() {
        let a = dmatrix![2.0, 0.5; 0.5, 1.0];
        let r = check_pseudoinverse_stability(&a, &a, 0.3).unwrap();
        assert!(r.lhs < 1e-12 && r.pass);
    }

    #[test]
    fn pseudoinverse_stability_diagonal() {
        let a = dmatrix![1.0, 0.0; 0.0, 0.0];
        let at = dmatrix![1.0 + 1e-4, 0.0; 0.0, 0.0];
        let r = check_pseudoinverse_stability(&a, &at, 0.5).unwrap();
        assert_relative_eq!(r.lhs, 1e-4 / (1.0 + 1e-4), epsilon = 1e-12);
        assert_relative_eq!(r.rhs, 20.0 * 1e-2 / 0.5f64.powf(2.5), epsilon = 1e-9);
        assert_relative_eq!(r.rhs, 1.1314, epsilon = 1e-4);
        assert!(r.pass);
        assert!(!r.with_bound_scaled(1e-5).pass);
    }

    #[test]
    fn pseudoinverse_stability_rejects_indefinite() {
        let a = dmatrix![1.0, 0.0; 0.0, -1.0];
        assert!(check_pseudoinverse_stability(&a, &a, 0.5).is_err());
    }

    #[test]
    fn davis_kahan_commuting_case() {
        let a = dmatrix![1.0, 0.0; 0.0, 0.0];
        let b = dmatrix![1.0, 0.0; 0.0, 0.01];
        let r = check_davis_kahan(&a, &b, (0.9, 1.1), 0.5).unwrap();
        assert!(r.operator.lhs < 1e-12 && r.pass());
        let same = check_davis_kahan(&a, &a, (0.9, 1.1), 0.5).unwrap();
        assert!(same.frobenius.lhs < 1e-12);
    }

    #[test]
    fn davis_kahan_empty_is_vacuous() {
        let a = dmatrix![1.0, 0.0; 0.0, 0.0];
        let r = check_davis_kahan(&a, &a, (5.0, 6.0), 0.5).unwrap();
        assert!(r.operator.vacuous && r.pass());
    }

    #[test]
    fn approximate_projection_diagonal() {
        let x = dmatrix![2.0, 0.0, 0.0; 0.0, 1.0, 0.0];
        let r = check_approximate_projection(&x).unwrap();
        assert_relative_eq!(r.lhs, 1.0, epsilon = 1e-12);
        assert_relative_eq!(r.rhs, 3.0, epsilon = 1e-12);
        assert!(r.pass);
    }

    #[test]
    fn almost_same_eigen_exact_eigenvector() {
        let r = DMatrix::from_diagonal(&DVector::from_vec(vec![1.05, 0.97, 0.2]));
        let w = DVector::from_vec(vec![0.6, 0.8, 0.0]);
        let rep = check_almost_same_eigen(&r, &w, 1.0, 0.1).unwrap();
        let direct = ((0.6 / 1.05 - 0.6f64).powi(2) + (0.8 / 0.97 - 0.8f64).powi(2)).sqrt();
        assert_relative_eq!(rep.lhs, direct, epsilon = 1e-12);
        assert_relative_eq!(rep.rhs, 0.2, epsilon = 1e-12);
        assert!(rep.pass);
        let off = DVector::from_vec(vec![0.0, 0.0, 1.0]);
        assert!(check_almost_same_eigen(&r, &off, 1.0, 0.1).is_err());
    }

    #[test]
    fn almost_isometry_exact_gram_is_tight() {
        // B with orthogonal gradient columns; Nhat = B^T B exactly.
        let b = dmatrix![1.0, 0.0, 0.0; 0.0, 2.0, 0.0; 0.0, 0.0, 0.0];
        let n_hat = b.transpose() * &b;
        // Rows v_i^T / sqrt(lambda_i) for the two nonzero eigenvalues.
        let w = dmatrix![0.0, 0.5, 0.0; 1.0, 0.0, 0.0];
        let r = check_almost_isometry(&w, &b, &n_hat, 0.5).unwrap();
        assert!(r.lhs < 1e-12 && r.rhs < 1e-12 && r.pass);
        assert!(r.details["projector_gap"] < 1e-12);
    }

    #[test]
    fn negative_control_scaling() {
        let r = CheckReport::new("x", 1.0, 2.0);
        assert!(r.pass);
        assert!(!r.with_bound_scaled(1e-3).pass);
        assert_relative_eq!(r.with_bound_scaled(1e-3).slack, 0.002 - 1.0);
    }
}
