//! Orthonormal (probabilists') Hermite polynomials and quadrature-based
//! Hermite expansions of low-dimensional functions.

use serde::{Deserialize, Serialize};

use crate::gaussian::{GaussianRule, INV_SQRT_2PI};
use crate::oracle::QueryOracle;
use crate::{JuntaError, Result};

/// Largest dimension for which tensor quadrature is attempted.
pub const MAX_QUADRATURE_DIM: usize = 3;

/// Default cap on tensor quadrature points.
pub const DEFAULT_TENSOR_CAP: usize = 4_000_000;

/// `h_0(x), .., h_{max}(x)` with `E[h_i h_j] = delta_ij` under `N(0, 1)`.
pub fn hermite_1d(max_degree: usize, x: f64) -> Vec<f64> {
    let mut h = Vec::with_capacity(max_degree + 1);
    h.push(1.0);
    if max_degree >= 1 {
        h.push(x);
    }
    for j in 1..max_degree {
        let next = (x * h[j] - (j as f64).sqrt() * h[j - 1]) / ((j + 1) as f64).sqrt();
        h.push(next);
    }
    h
}

/// Hermite functions `psi_j = h_j sqrt(pdf)`; bounded for every `j`, so the
/// recurrence stays finite where `h_j` alone would overflow.
pub fn hermite_functions(max_degree: usize, x: f64) -> Vec<f64> {
    let mut p = Vec::with_capacity(max_degree + 1);
    p.push(INV_SQRT_2PI.sqrt() * (-0.25 * x * x).exp());
    if max_degree >= 1 {
        p.push(x * p[0]);
    }
    for j in 1..max_degree {
        let next = (x * p[j] - (j as f64).sqrt() * p[j - 1]) / ((j + 1) as f64).sqrt();
        p.push(next);
    }
    p
}

/// `prod_i h_{S_i}(x_i)`.
pub fn hermite_eval(s: &[u32], x: &[f64]) -> f64 {
    assert_eq!(s.len(), x.len(), "multi-index and point differ in length");
    s.iter()
        .zip(x)
        .map(|(&d, &xi)| hermite_1d(d as usize, xi)[d as usize])
        .product()
}

/// All multi-indices in `k` variables with total degree `< degree`, by degree
/// then lexicographically.
pub fn multi_indices(k: usize, degree: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    for d in 0..degree {
        let mut cur = vec![0u32; k];
        push_with_degree(&mut out, &mut cur, 0, d as u32);
    }
    out
}

fn push_with_degree(out: &mut Vec<Vec<u32>>, cur: &mut Vec<u32>, pos: usize, left: u32) {
    if cur.is_empty() {
        if left == 0 {
            out.push(Vec::new());
        }
        return;
    }
    if pos == cur.len() - 1 {
        cur[pos] = left;
        out.push(cur.clone());
        cur[pos] = 0;
        return;
    }
    for v in (0..=left).rev() {
        cur[pos] = v;
        push_with_degree(out, cur, pos + 1, left - v);
    }
    cur[pos] = 0;
}

/// Number of multi-indices in `k` variables with degree `< degree`: `C(degree - 1 + k, k)`.
pub fn count_indices(k: usize, degree: usize) -> u64 {
    if degree == 0 {
        return 0;
    }
    let mut c: u128 = 1;
    for i in 1..=k as u128 {
        c = c * (degree as u128 - 1 + i) / i;
    }
    c.min(u64::MAX as u128) as u64
}

/// Truncated Hermite expansion computed by quadrature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HermiteExpansion {
    pub k: usize,
    /// Retained indices have degree `< degree`.
    pub degree: usize,
    pub indices: Vec<Vec<u32>>,
    pub coefficients: Vec<f64>,
    /// `E[f^2]` by the same quadrature.
    pub energy: f64,
}

impl HermiteExpansion {
    pub fn retained_mass(&self) -> f64 {
        self.coefficients.iter().map(|c| c * c).sum()
    }

    /// `E[f^2] - sum_{|S| < degree} f_hat(S)^2`.
    pub fn tail(&self) -> f64 {
        self.energy - self.retained_mass()
    }
}

/// Expand `f: R^k -> R` in Hermite polynomials of degree `< degree`.
pub fn hermite_expand(
    mut f: impl FnMut(&[f64]) -> Result<f64>,
    k: usize,
    degree: usize,
    rule: &GaussianRule,
    tensor_cap: usize,
) -> Result<HermiteExpansion> {
    if k > MAX_QUADRATURE_DIM {
        return Err(JuntaError::Capability(format!(
            "Hermite quadrature in {k} dimensions (limit {MAX_QUADRATURE_DIM})"
        )));
    }
    let hr = rule.build_half()?;
    let nodes = &hr.rule.nodes;
    let total = (nodes.len() as f64).powi(k as i32);
    if total > tensor_cap as f64 {
        return Err(JuntaError::Capability(format!(
            "tensor quadrature with {total:e} points exceeds cap {tensor_cap}"
        )));
    }
    let max_d = degree.saturating_sub(1);
    let psi: Vec<Vec<f64>> = nodes.iter().map(|&x| hermite_functions(max_d, x)).collect();
    let indices = multi_indices(k, degree);
    let mut coefficients = vec![0.0; indices.len()];
    let mut energy = 0.0;
    let mut idx = vec![0usize; k];
    let mut x = vec![0.0; k];
    loop {
        for d in 0..k {
            x[d] = nodes[idx[d]];
        }
        let fx = f(&x)?;
        let w: f64 = idx.iter().map(|&i| hr.rule.weights[i]).product();
        energy += w * fx * fx;
        let half: f64 = idx.iter().map(|&i| hr.half[i]).product();
        if half != 0.0 && fx != 0.0 {
            for (c, s) in coefficients.iter_mut().zip(&indices) {
                let basis: f64 = s.iter().zip(&idx).map(|(&d, &i)| psi[i][d as usize]).product();
                *c += fx * half * basis;
            }
        }
        let mut d = 0;
        loop {
            if d == k {
                return Ok(HermiteExpansion {
                    k,
                    degree,
                    indices,
                    coefficients,
                    energy,
                });
            }
            idx[d] += 1;
            if idx[d] < nodes.len() {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}

/// Default rule for a given dimension: the fine composite rule in 1-d, a
/// coarser composite rule (still breaking at 0) for `k = 2, 3`.
pub fn default_rule(k: usize) -> GaussianRule {
    match k {
        0 | 1 => GaussianRule::fine(),
        2 => GaussianRule::CompositeLegendre {
            half_width: 10.0,
            panel: 0.5,
            order: 12,
        },
        _ => GaussianRule::CompositeLegendre {
            half_width: 8.0,
            panel: 1.0,
            order: 8,
        },
    }
}

/// Hermite tail of an oracle on `R^k` beyond degree `degree` (indices with
/// `|S| >= degree`). Every quadrature node is one query.
pub fn hermite_tail_mass(f: &QueryOracle, degree: usize, rule: &GaussianRule) -> Result<HermiteExpansion> {
    hermite_expand(|x| f.query(x), f.dim(), degree, rule, DEFAULT_TENSOR_CAP)
}

/// Squared Hermite coefficients of `sign(x)` for degrees `< degree`:
/// odd `j` only, `c_1^2 = 2/pi` and `c_{j+2}^2 / c_j^2 = j^2 / ((j+1)(j+2))`.
pub fn sign_coefficients_sq(degree: usize) -> Vec<f64> {
    let mut out = vec![0.0; degree];
    let mut c = 2.0 / std::f64::consts::PI;
    let mut j = 1;
    while j < degree {
        out[j] = c;
        let jf = j as f64;
        c *= jf * jf / ((jf + 1.0) * (jf + 2.0));
        j += 2;
    }
    out
}

/// `1 - sum_{j < degree} c_j^2` for `sign`.
pub fn sign_tail_closed_form(degree: usize) -> f64 {
    1.0 - sign_coefficients_sq(degree).iter().sum::<f64>()
}

/// Degree cutoff for an `s`-smooth function at tail level `delta`:
/// `t = delta^2 / s^2`, `m = ceil(1/t)`; the tail beyond `m` is `< 4 delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailPlan {
    pub t: f64,
    pub degree: usize,
    pub bound: f64,
}

pub fn tail_plan(s: f64, delta: f64) -> Result<TailPlan> {
    if !(s > 0.0 && delta > 0.0) {
        return Err(JuntaError::param("delta", "s and delta must be positive"));
    }
    let t = delta * delta / (s * s);
    Ok(TailPlan {
        t,
        degree: (1.0 / t - 1e-9).ceil() as usize,
        bound: 4.0 * delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::gauss_hermite;
    use crate::oracle::FunctionSpec;
    use approx::assert_relative_eq;

    #[test]
    fn low_degree_values() {
        assert_eq!(hermite_eval(&[0], &[3.7]), 1.0);
        assert_relative_eq!(hermite_eval(&[1], &[0.3]), 0.3);
        assert_relative_eq!(hermite_eval(&[2], &[2.0]), 3.0 / 2f64.sqrt(), epsilon = 1e-14);
        assert_relative_eq!(hermite_eval(&[1, 2], &[2.0, 2.0]), 6.0 / 2f64.sqrt(), epsilon = 1e-14);
        let p = hermite_functions(5, 1.3);
        let h = hermite_1d(5, 1.3);
        for j in 0..=5 {
            assert_relative_eq!(p[j], h[j] * crate::gaussian::pdf(1.3).sqrt(), epsilon = 1e-14);
        }
    }

    #[test]
    fn orthonormal_up_to_degree_six() {
        let rule = gauss_hermite(30);
        for k in 1..=2 {
            let idx = multi_indices(k, 7);
            for s in &idx {
                for t in &idx {
                    let mut acc = 0.0;
                    for (pt, w) in crate::gaussian::tensor_points(&rule, k, 10_000).unwrap() {
                        acc += w * hermite_eval(s, &pt) * hermite_eval(t, &pt);
                    }
                    let want = if s == t { 1.0 } else { 0.0 };
                    assert!((acc - want).abs() < 1e-8, "{s:?} {t:?} {acc}");
                }
            }
        }
    }

    #[test]
    fn index_counts() {
        assert_eq!(multi_indices(2, 3).len(), 6);
        assert_eq!(count_indices(2, 3), 6);
        assert_eq!(count_indices(3, 5) as usize, multi_indices(3, 5).len());
        assert_eq!(multi_indices(1, 4), vec![vec![0], vec![1], vec![2], vec![3]]);
        assert_eq!(multi_indices(0, 3), vec![Vec::<u32>::new()]);
    }

    #[test]
    fn sign_tail_matches_closed_form() {
        let f = QueryOracle::new(FunctionSpec::axis_halfspace(1, 0, 0.0), None).unwrap();
        for &m in &[10usize, 40] {
            let e = hermite_tail_mass(&f, m, &GaussianRule::fine()).unwrap();
            assert!((e.tail() - sign_tail_closed_form(m)).abs() < 1e-6, "m={m}");
            let closed = sign_coefficients_sq(m);
            for (c, w) in e.coefficients.iter().zip(&closed) {
                assert!((c * c - w).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn trivial_tails() {
        let lin = |x: &[f64]| Ok(x[0]);
        let e = hermite_expand(lin, 1, 2, &GaussianRule::Hermite { order: 20 }, 100).unwrap();
        assert!(e.tail().abs() < 1e-12);
        let c = |_: &[f64]| Ok(1.0);
        let e = hermite_expand(c, 2, 1, &GaussianRule::Hermite { order: 10 }, 1000).unwrap();
        assert!(e.tail().abs() < 1e-12);
    }

    #[test]
    fn high_dimension_refused() {
        let c = |_: &[f64]| Ok(1.0);
        let err = hermite_expand(c, 4, 2, &GaussianRule::Hermite { order: 3 }, 1000);
        assert!(matches!(err, Err(JuntaError::Capability(_))));
    }

    #[test]
    fn two_dimensional_parseval() {
        let f = |x: &[f64]| Ok(if x[0] + 0.5 * x[1] >= 0.2 { 1.0 } else { -1.0 });
        let e = hermite_expand(f, 2, 12, &default_rule(2), DEFAULT_TENSOR_CAP).unwrap();
        assert!(e.retained_mass() <= 1.0 + 1e-6);
        assert!(e.energy > 0.999);
    }

    #[test]
    fn plan_values() {
        let p = tail_plan(1.0, 0.1).unwrap();
        assert_eq!(p.degree, 100);
        assert_relative_eq!(p.bound, 0.4);
    }
}
