//! The averaging operator `A_E f(x) = E_z[f(Pi_E x + Pi_{E^perp} z)]` and
//! Monte-Carlo correlation estimates.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::gaussian::{McEstimate, Running};
use crate::linalg::{checks::CheckReport, nearest_subspace_inside, Subspace};
use crate::oracle::QueryOracle;
use crate::rng::{self, tag};
use crate::{JuntaError, Result};

fn same_dim(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(JuntaError::Dimension {
            expected: a,
            got: b,
        })
    }
}

/// The point `Pi_E x + Pi_{E^perp} z`.
pub fn mix_point(e: &Subspace<f64>, x: &DVector<f64>, z: &DVector<f64>) -> DVector<f64> {
    let px = e.project(x);
    let pz = e.project(z);
    px + z - pz
}

/// Monte-Carlo estimate of `A_E f(x)`.
pub fn averaging_apply(
    f: &QueryOracle,
    e: &Subspace<f64>,
    x: &[f64],
    n_samples: u64,
    seed: u64,
) -> Result<McEstimate> {
    same_dim(f.dim(), e.ambient_dim())?;
    same_dim(f.dim(), x.len())?;
    let x = DVector::from_column_slice(x);
    let px = e.project(&x);
    let mut r = rng::stream(seed, &[tag("averaging_apply")]);
    let mut acc = Running::default();
    for _ in 0..n_samples {
        let z = rng::gaussian_vector(f.dim(), &mut r);
        let p = &px + &z - e.project(&z);
        acc.push(f.query_vec(&p)?);
    }
    Ok(acc.estimate())
}

/// Monte-Carlo estimate of `E[f(x) g(x)]` over `x ~ N(0, I)`.
pub fn correlation_mc(f: &QueryOracle, g: &QueryOracle, n_samples: u64, seed: u64) -> Result<McEstimate> {
    same_dim(f.dim(), g.dim())?;
    let mut r = rng::stream(seed, &[tag("correlation_mc")]);
    let mut acc = Running::default();
    let mut x = vec![0.0; f.dim()];
    for _ in 0..n_samples {
        rng::fill_gaussian(&mut x, &mut r);
        acc.push(f.query(&x)? * g.query(&x)?);
    }
    Ok(acc.estimate())
}

/// Outcome of a Monte-Carlo identity `E[lhs] = E[rhs]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub name: String,
    /// Estimate of the difference of the two sides.
    pub difference: McEstimate,
    /// Passes when `|difference| <= 3 stderr` (plus round-off).
    pub pass: bool,
}

impl IdentityCheck {
    fn new(name: &str, acc: &Running) -> Self {
        let difference = acc.estimate();
        Self {
            name: name.into(),
            difference,
            pass: difference.value.abs() <= 3.0 * difference.stderr + 1e-12,
        }
    }
}

/// `E[(A_E f) g] = E[f (A_E g)]`. One draw of `(x, z)` gives unbiased terms
/// `f(Pi_E x + Pi_{E^perp} z) g(x) - f(x) g(Pi_E x + Pi_{E^perp} z)`.
pub fn self_adjoint_check(
    f: &QueryOracle,
    g: &QueryOracle,
    e: &Subspace<f64>,
    n_samples: u64,
    seed: u64,
) -> Result<IdentityCheck> {
    same_dim(f.dim(), g.dim())?;
    same_dim(f.dim(), e.ambient_dim())?;
    let mut r = rng::stream(seed, &[tag("self_adjoint")]);
    let mut acc = Running::default();
    for _ in 0..n_samples {
        let x = rng::gaussian_vector(f.dim(), &mut r);
        let z = rng::gaussian_vector(f.dim(), &mut r);
        let m = mix_point(e, &x, &z);
        acc.push(f.query_vec(&m)? * g.query_vec(&x)? - f.query_vec(&x)? * g.query_vec(&m)?);
    }
    Ok(IdentityCheck::new("self_adjoint", &acc))
}

/// `A_E A_{E'} f = A_E f` for `E ⊆ E'`, averaged against `g`:
/// `E[g(x) (f(nested) - f(single))]` with independent draws for each side.
pub fn tower_check(
    f: &QueryOracle,
    g: &QueryOracle,
    e: &Subspace<f64>,
    eprime: &Subspace<f64>,
    n_samples: u64,
    seed: u64,
) -> Result<IdentityCheck> {
    same_dim(f.dim(), e.ambient_dim())?;
    same_dim(f.dim(), eprime.ambient_dim())?;
    if e.excess_op(eprime) > 1e-9 {
        return Err(JuntaError::Input("tower property needs E inside E'".into()));
    }
    let n = f.dim();
    let mut r = rng::stream(seed, &[tag("tower")]);
    let mut acc = Running::default();
    for _ in 0..n_samples {
        let x = rng::gaussian_vector(n, &mut r);
        let z = rng::gaussian_vector(n, &mut r);
        let zp = rng::gaussian_vector(n, &mut r);
        let z2 = rng::gaussian_vector(n, &mut r);
        // A_E (A_{E'} f)(x) = E_{z,z'}[f(Pi_E' y + Pi_{E'^perp} z')] with y = Pi_E x + Pi_{E^perp} z.
        let y = mix_point(e, &x, &z);
        let nested = mix_point(eprime, &y, &zp);
        let single = mix_point(e, &x, &z2);
        let gx = g.query_vec(&x)?;
        acc.push(gx * (f.query_vec(&nested)? - f.query_vec(&single)?));
    }
    Ok(IdentityCheck::new("tower", &acc))
}

/// `E||grad A_E f||^2 <= E||Pi_E grad f||^2` for a smooth built-in spec,
/// using `grad A_E f(x) = E_z[Pi_E grad f(Pi_E x + Pi_{E^perp} z)]` with `inner` draws.
pub fn gradient_energy_check(
    f: &QueryOracle,
    e: &Subspace<f64>,
    n_samples: u64,
    inner: u64,
    seed: u64,
) -> Result<CheckReport> {
    let spec = f
        .spec()
        .ok_or_else(|| JuntaError::Capability("needs an analytic gradient".into()))?;
    let n = f.dim();
    let mut r = rng::stream(seed, &[tag("gradient_energy")]);
    let mut lhs = Running::default();
    let mut rhs = Running::default();
    for _ in 0..n_samples {
        let x = rng::gaussian_vector(n, &mut r);
        let mut g = DVector::zeros(n);
        for _ in 0..inner.max(1) {
            let z = rng::gaussian_vector(n, &mut r);
            g += e.project(&spec.grad_pt(0.0, mix_point(e, &x, &z).as_slice())?);
        }
        g /= inner.max(1) as f64;
        lhs.push(g.norm_squared());
        rhs.push(e.project(&spec.grad_pt(0.0, x.as_slice())?).norm_squared());
    }
    let (l, rr) = (lhs.estimate(), rhs.estimate());
    let slack = 3.0 * (l.stderr.powi(2) + rr.stderr.powi(2)).sqrt();
    Ok(CheckReport::new("gradient_energy", l.value, rr.value + slack)
        .detail("lhs_stderr", l.stderr)
        .detail("rhs_stderr", rr.stderr))
}

/// For `c`-Lipschitz `f`, subspaces `E`, `E'` with `||Pi_E Pi_{E'^perp}|| < 1`
/// and `Etilde ⊆ E'` from the principal-vector construction:
/// `|E[f A_E g] - E[f A_Etilde g]| <= 4c ||Pi_E Pi_{E'^perp}||_F`.
///
/// The left side is estimated as `E[g(x)(f(mix_E) - f(mix_Etilde))]` with shared
/// draws; it passes when `|estimate| - 3 stderr <= rhs`.
pub fn correlation_subspace_stability_check(
    f: &QueryOracle,
    c: f64,
    g: &QueryOracle,
    e: &Subspace<f64>,
    eprime: &Subspace<f64>,
    n_samples: u64,
    seed: u64,
) -> Result<CheckReport> {
    same_dim(f.dim(), g.dim())?;
    let fit = nearest_subspace_inside(e, eprime)?;
    let n = f.dim();
    let mut r = rng::stream(seed, &[tag("correlation_subspace_stability")]);
    let mut acc = Running::default();
    for _ in 0..n_samples {
        let x = rng::gaussian_vector(n, &mut r);
        let z = rng::gaussian_vector(n, &mut r);
        let a = f.query_vec(&mix_point(e, &x, &z))?;
        let b = f.query_vec(&mix_point(&fit.subspace, &x, &z))?;
        acc.push(g.query_vec(&x)? * (a - b));
    }
    let est = acc.estimate();
    let lhs = (est.value.abs() - 3.0 * est.stderr).max(0.0);
    Ok(
        CheckReport::new("correlation_subspace_stability", lhs, 4.0 * c * fit.excess_fro)
            .detail("estimate", est.value)
            .detail("stderr", est.stderr)
            .detail("excess_fro", fit.excess_fro),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian;
    use crate::oracle::{CorruptionSpec, FunctionSpec};
    use approx::assert_relative_eq;

    fn sign_x1(n: usize) -> QueryOracle {
        QueryOracle::new(FunctionSpec::axis_halfspace(n, 0, 0.0), None).unwrap()
    }

    #[test]
    fn averaging_along_relevant_direction_is_exact() {
        let f = sign_x1(3);
        let e = Subspace::coordinate(3, &[0]).unwrap();
        let est = averaging_apply(&f, &e, &[0.4, 2.0, -1.0], 200, 1).unwrap();
        assert_eq!(est.value, 1.0);
        assert_eq!(est.stderr, 0.0);
    }

    #[test]
    fn averaging_across_is_zero() {
        let f = sign_x1(2);
        let e = Subspace::coordinate(2, &[1]).unwrap();
        let est = averaging_apply(&f, &e, &[0.4, 2.0], 20_000, 2).unwrap();
        assert!(est.value.abs() <= 3.0 * est.stderr);
    }

    #[test]
    fn averaging_matches_quadrature_oracle() {
        let f = sign_x1(2);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let e = Subspace::from_orthonormal(nalgebra::dmatrix![s; s]).unwrap();
        let x = [0.8, -0.3];
        // Direct 1-d quadrature over the free direction (e1 - e2)/sqrt(2).
        let rule = gaussian::gauss_hermite(80);
        let proj = (x[0] + x[1]) / 2.0;
        let oracle = rule.integrate(|w| if proj + w * s >= 0.0 { 1.0 } else { -1.0 });
        let closed = f.spec().unwrap().average(&e, &x).unwrap();
        assert_relative_eq!(closed, 2.0 * gaussian::cdf((x[0] + x[1]) / 2f64.sqrt()) - 1.0, epsilon = 1e-14);
        assert!((closed - oracle).abs() < 2e-2);
        let mc = averaging_apply(&f, &e, &x, 40_000, 3).unwrap();
        assert!((mc.value - closed).abs() <= 4.0 * mc.stderr);
    }

    #[test]
    fn correlation_examples() {
        let f = sign_x1(3);
        let same = correlation_mc(&f, &f.fork(), 1000, 4).unwrap();
        assert_eq!(same.value, 1.0);
        let g = QueryOracle::new(FunctionSpec::axis_halfspace(3, 1, 0.0), None).unwrap();
        let ind = correlation_mc(&f, &g, 40_000, 5).unwrap();
        assert!(ind.value.abs() <= 3.0 * ind.stderr);
        let noisy = QueryOracle::new(
            FunctionSpec::axis_halfspace(3, 0, 0.0),
            Some(CorruptionSpec::random_flip(0.1, 1)),
        )
        .unwrap();
        let c = correlation_mc(&noisy, &f, 40_000, 6).unwrap();
        assert!((c.value - 0.8).abs() <= 2.0 * c.stderr + 0.005, "{c:?}");
    }

    #[test]
    fn self_adjoint_and_tower_hold() {
        let f = QueryOracle::new(FunctionSpec::halfspace(vec![0.6, 0.8, 0.0], 0.3), None).unwrap();
        let g = QueryOracle::new(
            FunctionSpec::SmoothTanhJunta {
                directions: vec![vec![0.0, 0.6, 0.8]],
                gains: vec![1.5],
            },
            None,
        )
        .unwrap();
        let e = Subspace::coordinate(3, &[1]).unwrap();
        let ep = Subspace::coordinate(3, &[1, 2]).unwrap();
        assert!(self_adjoint_check(&f, &g, &e, 20_000, 7).unwrap().pass);
        assert!(tower_check(&f, &g, &e, &ep, 20_000, 8).unwrap().pass);
        assert!(tower_check(&f, &g, &ep, &e, 10, 8).is_err());
    }

    #[test]
    fn gradient_energy_inequality() {
        let f = QueryOracle::new(
            FunctionSpec::SmoothTanhJunta {
                directions: vec![vec![0.6, 0.8, 0.0]],
                gains: vec![2.0],
            },
            None,
        )
        .unwrap();
        let e = Subspace::coordinate(3, &[0]).unwrap();
        let rep = gradient_energy_check(&f, &e, 4000, 16, 9).unwrap();
        assert!(rep.pass, "{rep:?}");
    }
}
