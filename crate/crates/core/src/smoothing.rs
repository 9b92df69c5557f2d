//! The Ornstein–Uhlenbeck noise operator `P_t` and query-based estimators
//! built on it.
//!
//! `P_t f(x) = E_y[f(e^{-t} x + sigma_t y)]` with `sigma_t = sqrt(1 - e^{-2t})`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::gaussian::{self, McEstimate, Running};
use crate::oracle::QueryOracle;
use crate::rng::{self, tag};
use crate::{JuntaError, Result};

pub fn noise_scale(t: f64) -> f64 {
    (-(-2.0 * t).exp_m1()).sqrt()
}

/// `2 Phi((e^{-t} <u,x> - theta) / sigma_t) - 1`.
pub fn pt_halfspace_closed_form(u: &[f64], theta: f64, t: f64, x: &[f64]) -> f64 {
    let proj: f64 = u.iter().zip(x).map(|(a, b)| a * b).sum();
    2.0 * gaussian::cdf(((-t).exp() * proj - theta) / noise_scale(t)) - 1.0
}

/// Result of a query-based estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradEstimate {
    pub value: f64,
    pub stderr: f64,
    pub queries_used: u64,
    pub n_samples: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingParams {
    pub t: f64,
    pub eps: f64,
    pub delta: f64,
}

impl SmoothingParams {
    pub fn new(t: f64, eps: f64, delta: f64) -> Result<Self> {
        check_common(t, eps, delta)?;
        Ok(Self { t, eps, delta })
    }

    /// Samples used by [`pt_eval`].
    pub fn n_samples(&self) -> u64 {
        hoeffding_samples(2.0, self.eps, self.delta)
    }
}

/// Samples needed for a mean of variables with range `range` to be within
/// `eps` with probability `1 - delta`.
pub fn hoeffding_samples(range: f64, eps: f64, delta: f64) -> u64 {
    (range * range * (2.0 / delta).ln() / (2.0 * eps * eps)).ceil() as u64
}

fn check_common(t: f64, eps: f64, delta: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(JuntaError::param("t", "noise time must be positive"));
    }
    if !(eps > 0.0) {
        return Err(JuntaError::param("eps", "accuracy must be positive"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(JuntaError::param("delta", "failure probability must lie in (0, 1)"));
    }
    Ok(())
}

fn check_dim(f: &QueryOracle, x: &[f64]) -> Result<()> {
    if x.len() != f.dim() {
        return Err(JuntaError::Dimension {
            expected: f.dim(),
            got: x.len(),
        });
    }
    Ok(())
}

/// Estimate `P_t f(x)` within `eps` with probability `1 - delta`.
pub fn pt_eval(
    f: &QueryOracle,
    t: f64,
    x: &[f64],
    eps: f64,
    delta: f64,
    seed: u64,
) -> Result<GradEstimate> {
    check_common(t, eps, delta)?;
    check_dim(f, x)?;
    let n = hoeffding_samples(2.0, eps, delta);
    let a = (-t).exp();
    let s = noise_scale(t);
    let mut r = rng::stream(seed, &[tag("pt_eval")]);
    let start = f.queries();
    let mut acc = Running::default();
    let mut y = vec![0.0; x.len()];
    let mut p = vec![0.0; x.len()];
    for _ in 0..n {
        rng::fill_gaussian(&mut y, &mut r);
        for i in 0..x.len() {
            p[i] = a * x[i] + s * y[i];
        }
        match f.query(&p) {
            Ok(v) => acc.push(v),
            Err(e) => return Err(e.with_partial(acc.mean())),
        }
    }
    let est = acc.estimate();
    Ok(GradEstimate {
        value: est.value,
        stderr: est.stderr,
        queries_used: f.queries() - start,
        n_samples: n,
    })
}

/// Sample plan for [`grad_inner_product`]. Depends only on `(t, eps, delta)`,
/// never on the ambient dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InnerProductPlan {
    /// `e^{-2t} / sigma_t^2`, converting `Q'(0)` into the gradient inner product.
    pub scale: f64,
    /// Correlation used in the central difference.
    pub rho0: f64,
    pub n_samples: u64,
    pub queries: u64,
}

impl InnerProductPlan {
    pub fn new(t: f64, eps: f64, delta: f64) -> Result<Self> {
        check_common(t, eps, delta)?;
        let s2 = noise_scale(t).powi(2);
        let scale = (-2.0 * t).exp() / s2;
        // Odd Hermite terms of degree >= 3 contribute at most
        // scale * rho^2 / (1 - rho^2); keep that below eps / 2.
        let c = eps / (2.0 * scale);
        let rho0 = (c / (1.0 + c)).sqrt().min(0.9);
        let range = 2.0 * scale / rho0;
        let n_samples = hoeffding_samples(range, eps / 2.0, delta);
        Ok(Self {
            scale,
            rho0,
            n_samples,
            queries: 3 * n_samples,
        })
    }
}

/// Estimate `<grad P_t f(x1), grad P_t f(x2)>` within `eps` with probability
/// `1 - delta`.
///
/// With `Q(rho) = E[f(e^{-t} x1 + sigma Y) f(e^{-t} x2 + sigma Y')]` for
/// `rho`-correlated Gaussians, the inner product is `e^{-2t}/sigma^2 * Q'(0)`.
/// `Q'(0)` is taken as a central difference at `+-rho0` with shared samples.
pub fn grad_inner_product(
    f: &QueryOracle,
    t: f64,
    x1: &[f64],
    x2: &[f64],
    eps: f64,
    delta: f64,
    seed: u64,
) -> Result<GradEstimate> {
    let plan = InnerProductPlan::new(t, eps, delta)?;
    check_dim(f, x1)?;
    check_dim(f, x2)?;
    let n = x1.len();
    let a = (-t).exp();
    let s = noise_scale(t);
    let rho = plan.rho0;
    let rho_c = (1.0 - rho * rho).sqrt();
    let mut r = rng::stream(seed, &[tag("grad_inner_product")]);
    let start = f.queries();
    let mut acc = Running::default();
    let (mut y, mut w) = (vec![0.0; n], vec![0.0; n]);
    let (mut p, mut pp, mut pm) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let coef = plan.scale / (2.0 * rho);
    for _ in 0..plan.n_samples {
        rng::fill_gaussian(&mut y, &mut r);
        rng::fill_gaussian(&mut w, &mut r);
        for i in 0..n {
            p[i] = a * x1[i] + s * y[i];
            let base = a * x2[i] + s * rho_c * w[i];
            pp[i] = base + s * rho * y[i];
            pm[i] = base - s * rho * y[i];
        }
        let step = (|| -> Result<f64> {
            let v = f.query(&p)?;
            let up = f.query(&pp)?;
            let down = f.query(&pm)?;
            Ok(coef * v * (up - down))
        })();
        match step {
            Ok(d) => acc.push(d),
            Err(e) => return Err(e.with_partial(acc.mean())),
        }
    }
    let est = acc.estimate();
    Ok(GradEstimate {
        value: est.value,
        stderr: est.stderr,
        queries_used: f.queries() - start,
        n_samples: plan.n_samples,
    })
}

/// Stein-identity estimate of `grad P_t f(x)`:
/// `grad P_t f(x) = (e^{-t}/sigma) E[f(e^{-t} x + sigma W) W]`, averaged over
/// antithetic pairs `+-W`. Reused for every direction `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSketch {
    pub point: DVector<f64>,
    pub gradient: DVector<f64>,
    pub pairs: u64,
    pub queries_used: u64,
    /// Estimate of `E||gradient - grad P_t f(x)||^2`.
    pub mean_sq_error: f64,
}

impl GradientSketch {
    /// `<gradient, y>`.
    pub fn project(&self, y: &[f64]) -> f64 {
        self.gradient.iter().zip(y).map(|(g, v)| g * v).sum()
    }
}

/// Antithetic pairs needed so that `||gradient - grad P_t f(x)|| <= eta / 2` with
/// probability `1 - delta` (Chebyshev on the per-pair second moment, which is at
/// most `dim * e^{-2t}/sigma_t^2`).
pub fn sketch_pairs(t: f64, dim: usize, eta: f64, delta: f64) -> Result<u64> {
    check_common(t, eta, delta)?;
    let v = dim as f64 * (-2.0 * t).exp() / noise_scale(t).powi(2);
    Ok((4.0 * v / (eta * eta * delta)).ceil().max(1.0) as u64)
}

pub fn gradient_sketch(f: &QueryOracle, t: f64, x: &[f64], pairs: u64, seed: u64) -> Result<GradientSketch> {
    if !(t > 0.0) {
        return Err(JuntaError::param("t", "noise time must be positive"));
    }
    if pairs == 0 {
        return Err(JuntaError::param("pairs", "need at least one sample pair"));
    }
    check_dim(f, x)?;
    let n = x.len();
    let a = (-t).exp();
    let s = noise_scale(t);
    let c = a / s;
    let mut r = rng::stream(seed, &[tag("gradient_sketch")]);
    let start = f.queries();
    let mut w = vec![0.0; n];
    let (mut p, mut m) = (vec![0.0; n], vec![0.0; n]);
    let mut sum = DVector::zeros(n);
    let mut sum_sq = 0.0;
    for done in 0..pairs {
        rng::fill_gaussian(&mut w, &mut r);
        for i in 0..n {
            p[i] = a * x[i] + s * w[i];
            m[i] = a * x[i] - s * w[i];
        }
        let d = match f.query(&p).and_then(|up| Ok((up - f.query(&m)?) * 0.5 * c)) {
            Ok(d) => d,
            Err(e) => {
                let partial = if done > 0 { sum.norm() / done as f64 } else { 0.0 };
                return Err(e.with_partial(partial));
            }
        };
        for i in 0..n {
            sum[i] += d * w[i];
        }
        sum_sq += d * d * w.iter().map(|v| v * v).sum::<f64>();
    }
    let k = pairs as f64;
    let gradient = sum / k;
    // Per-pair second moment minus the squared mean, divided by the pair count.
    let mean_sq_error = ((sum_sq / k - gradient.norm_squared()).max(0.0)) / k;
    Ok(GradientSketch {
        point: DVector::from_column_slice(x),
        gradient,
        pairs,
        queries_used: f.queries() - start,
        mean_sq_error,
    })
}

/// Estimate `<grad P_t f(x), y>`.
///
/// The estimate `Est(x, y) = <g_x, y>` comes from a gradient sketch `g_x` with
/// `||g_x - grad P_t f(x)|| <= eta / 2` with probability `1 - delta`; over a
/// Gaussian `y` the error is then `N(0, ||g_x - grad||^2)`, so
/// `Pr_y[|Est - <grad, y>| > lambda eta] <= 1/lambda^2`. The inner product
/// with `y` is computed exactly, so `nu` only enters the reported stderr floor.
#[allow(clippy::too_many_arguments)]
pub fn project_on_gradient(
    f: &QueryOracle,
    t: f64,
    x: &[f64],
    y: &[f64],
    eta: f64,
    nu: f64,
    delta: f64,
    seed: u64,
) -> Result<GradEstimate> {
    if !(nu > 0.0) {
        return Err(JuntaError::param("nu", "accuracy must be positive"));
    }
    check_dim(f, y)?;
    let pairs = sketch_pairs(t, f.dim(), eta, delta)?;
    let sk = gradient_sketch(f, t, x, pairs, seed)?;
    let yn: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(GradEstimate {
        value: sk.project(y),
        stderr: sk.mean_sq_error.sqrt() * yn / (f.dim() as f64).sqrt().max(1.0),
        queries_used: sk.queries_used,
        n_samples: sk.pairs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessRow {
    pub t: f64,
    pub estimate: McEstimate,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessReport {
    pub s: f64,
    pub rows: Vec<SmoothnessRow>,
    pub pass: bool,
    pub queries_used: u64,
}

/// Monte-Carlo test of `E|f - P_t f| <= s sqrt(t)` on a grid of `t`.
///
/// For `x` with `|f(x)| = 1`, `|f(x) - P_t f(x)| = 1 - f(x) P_t f(x)`, so one inner
/// sample gives an unbiased term. Elsewhere `inner` samples estimate `P_t f(x)`.
/// A row passes when `estimate - 3 stderr <= s sqrt(t)`.
pub fn smoothness_check(
    f: &QueryOracle,
    s: f64,
    t_grid: &[f64],
    n_samples: u64,
    inner: u64,
    seed: u64,
) -> Result<SmoothnessReport> {
    if !(s > 0.0) {
        return Err(JuntaError::param("s", "smoothness must be positive"));
    }
    let n = f.dim();
    let start = f.queries();
    let inner = inner.max(1);
    let mut rows = Vec::with_capacity(t_grid.len());
    for (ti, &t) in t_grid.iter().enumerate() {
        if !(t > 0.0) {
            return Err(JuntaError::param("t", "grid values must be positive"));
        }
        let a = (-t).exp();
        let sig = noise_scale(t);
        let mut r = rng::stream(seed, &[tag("smoothness_check"), ti as u64]);
        let mut acc = Running::default();
        let mut x = vec![0.0; n];
        let mut y = vec![0.0; n];
        let mut p = vec![0.0; n];
        for _ in 0..n_samples {
            rng::fill_gaussian(&mut x, &mut r);
            let v = f.query(&x)?;
            let mut mean = 0.0;
            for _ in 0..inner {
                rng::fill_gaussian(&mut y, &mut r);
                for i in 0..n {
                    p[i] = a * x[i] + sig * y[i];
                }
                mean += f.query(&p)?;
            }
            mean /= inner as f64;
            let term = if v.abs() == 1.0 {
                1.0 - v * mean
            } else {
                (v - mean).abs()
            };
            acc.push(term);
        }
        let estimate = acc.estimate();
        let bound = s * t.sqrt();
        rows.push(SmoothnessRow {
            t,
            estimate,
            bound,
            pass: estimate.value - 3.0 * estimate.stderr <= bound,
        });
    }
    Ok(SmoothnessReport {
        s,
        pass: rows.iter().all(|r| r.pass),
        rows,
        queries_used: f.queries() - start,
    })
}

/// Result of comparing `E[f_sm g]` with `E[f g]` for `f_sm = P_{kappa^2/s^2} f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingCorrelationReport {
    pub difference: McEstimate,
    /// `kappa / 2`.
    pub half_kappa_bound: f64,
    /// `kappa`, which is what `E|P_t g - g| <= s sqrt(t)` yields.
    pub kappa_bound: f64,
    pub pass_half_kappa: bool,
    pub pass_kappa: bool,
}

/// Monte-Carlo of `E[f_sm g] - E[f g] = E[f(x) (g(e^{-t}x + sigma y) - g(x))]`
/// (self-adjointness of `P_t`), with `t = kappa^2 / s^2`.
pub fn smoothing_correlation_check(
    f: &QueryOracle,
    g: &QueryOracle,
    kappa: f64,
    s: f64,
    n_samples: u64,
    seed: u64,
) -> Result<SmoothingCorrelationReport> {
    if !(kappa > 0.0 && s > 0.0) {
        return Err(JuntaError::param("kappa", "kappa and s must be positive"));
    }
    if f.dim() != g.dim() {
        return Err(JuntaError::Dimension {
            expected: f.dim(),
            got: g.dim(),
        });
    }
    let n = f.dim();
    let t = (kappa / s).powi(2);
    let a = (-t).exp();
    let sig = noise_scale(t);
    let mut r = rng::stream(seed, &[tag("smoothing_correlation")]);
    let mut acc = Running::default();
    let mut x = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut p = vec![0.0; n];
    for _ in 0..n_samples {
        rng::fill_gaussian(&mut x, &mut r);
        rng::fill_gaussian(&mut y, &mut r);
        for i in 0..n {
            p[i] = a * x[i] + sig * y[i];
        }
        let fx = f.query(&x)?;
        acc.push(fx * (g.query(&p)? - g.query(&x)?));
    }
    let difference = acc.estimate();
    let slack = difference.value.abs() - 3.0 * difference.stderr;
    Ok(SmoothingCorrelationReport {
        difference,
        half_kappa_bound: kappa / 2.0,
        kappa_bound: kappa,
        pass_half_kappa: slack <= kappa / 2.0,
        pass_kappa: slack <= kappa,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::FunctionSpec;
    use approx::assert_relative_eq;
    use std::f64::consts::{LN_2, PI};

    fn halfspace(n: usize) -> QueryOracle {
        QueryOracle::new(FunctionSpec::axis_halfspace(n, 0, 0.0), None).unwrap()
    }

    #[test]
    fn noise_scale_values() {
        assert_relative_eq!(noise_scale(LN_2), 0.75f64.sqrt(), epsilon = 1e-15);
        assert!(noise_scale(1e-12) > 0.0);
    }

    #[test]
    fn closed_form_examples() {
        let u = [1.0, 0.0];
        assert_relative_eq!(pt_halfspace_closed_form(&u, 0.3, 0.7, &[0.3 * 0.7f64.exp(), 5.0]), 0.0, epsilon = 1e-14);
        assert_relative_eq!(pt_halfspace_closed_form(&u, 0.0, LN_2, &[1.0, 0.0]), 0.4363, epsilon = 1e-4);
        let far = pt_halfspace_closed_form(&u, 0.5, 40.0, &[1.0, 0.0]);
        assert_relative_eq!(far, 2.0 * gaussian::cdf(-0.5) - 1.0, epsilon = 1e-12);
    }

    #[test]
    fn pt_eval_constant_and_symmetric() {
        let c = QueryOracle::new(FunctionSpec::Constant { value: 1.0, dim: 2 }, None).unwrap();
        let e = pt_eval(&c, 0.5, &[0.1, 0.2], 0.1, 0.05, 1).unwrap();
        assert_eq!(e.value, 1.0);
        assert_eq!(e.queries_used, e.n_samples);
        let h = halfspace(2);
        let e = pt_eval(&h, 0.5, &[0.0, 0.0], 0.05, 0.05, 2).unwrap();
        assert!(e.value.abs() <= 0.05);
        let e = pt_eval(&h, LN_2, &[1.0, 0.0], 0.05, 0.05, 3).unwrap();
        assert!((e.value - 0.4363).abs() <= 0.05);
    }

    #[test]
    fn pt_eval_rejects_bad_t() {
        let h = halfspace(2);
        assert!(matches!(
            pt_eval(&h, 0.0, &[0.0, 0.0], 0.1, 0.1, 0),
            Err(JuntaError::Parameter { name: "t", .. })
        ));
    }

    #[test]
    fn inner_product_plan_is_dimension_free() {
        let plan = InnerProductPlan::new(LN_2, 0.05, 0.1).unwrap();
        assert_relative_eq!(plan.scale, 1.0 / 3.0, epsilon = 1e-14);
        // bias bound at rho0 equals eps / 2
        assert_relative_eq!(plan.scale * plan.rho0.powi(2) / (1.0 - plan.rho0.powi(2)), 0.025, epsilon = 1e-12);
        assert!(plan.queries <= 1_000_000);
    }

    #[test]
    fn inner_product_constant_is_zero() {
        let c = QueryOracle::new(FunctionSpec::Constant { value: -1.0, dim: 3 }, None).unwrap();
        let e = grad_inner_product(&c, 0.5, &[0.0; 3], &[1.0; 3], 0.1, 0.1, 0).unwrap();
        assert_eq!(e.value, 0.0);
        assert_eq!(e.queries_used, 3 * e.n_samples);
    }

    #[test]
    fn inner_product_halfspace() {
        let h = halfspace(2);
        let e = grad_inner_product(&h, LN_2, &[0.0, 0.0], &[0.0, 0.0], 0.05, 0.1, 4).unwrap();
        let truth = 4.0 * 0.25 / 0.75 / (2.0 * PI);
        assert_relative_eq!(truth, 0.2122, epsilon = 1e-4);
        assert!((e.value - truth).abs() <= 0.05, "{}", e.value);
    }

    #[test]
    fn inner_product_budget_error_carries_partial() {
        let h = halfspace(2).with_budget(300);
        match grad_inner_product(&h, LN_2, &[0.0, 0.0], &[0.0, 0.0], 0.05, 0.1, 4) {
            Err(JuntaError::Budget { used, partial, .. }) => {
                assert_eq!(used, 300);
                assert!(partial.is_some());
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn project_on_gradient_examples() {
        let h = halfspace(3);
        let u = [1.0, 0.0, 0.0];
        let e = project_on_gradient(&h, LN_2, &[0.0; 3], &u, 0.1, 0.01, 0.1, 5).unwrap();
        assert!((e.value - 0.4607).abs() <= 0.11, "{}", e.value);
        let c = QueryOracle::new(FunctionSpec::Constant { value: 0.5, dim: 3 }, None).unwrap();
        let e = project_on_gradient(&c, LN_2, &[0.0; 3], &u, 0.1, 0.01, 0.1, 5).unwrap();
        assert_eq!(e.value, 0.0);
    }

    #[test]
    fn smoothness_of_sign() {
        let h = halfspace(1);
        let rep = smoothness_check(&h, 1.0, &[0.01, 0.1, 1.0], 20_000, 1, 6).unwrap();
        assert!(rep.pass, "{rep:?}");
        for row in &rep.rows {
            let truth = 1.0 - 2.0 / PI * (-row.t).exp().asin();
            assert!((row.estimate.value - truth).abs() <= 4.0 * row.estimate.stderr + 1e-3);
        }
        let bad = smoothness_check(&h, 0.01, &[0.01], 20_000, 1, 7).unwrap();
        assert!(!bad.pass);
        let c = QueryOracle::new(FunctionSpec::Constant { value: 1.0, dim: 2 }, None).unwrap();
        let rep = smoothness_check(&c, 0.1, &[0.01, 1.0], 1000, 1, 8).unwrap();
        assert!(rep.pass && rep.rows.iter().all(|r| r.estimate.value == 0.0));
    }
}
