//! Standard normal distribution helpers, Monte-Carlo accumulators and
//! quadrature rules for the Gaussian measure.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

use crate::linalg::sym_eigen;
use crate::{JuntaError, Result};

pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

pub fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

pub fn quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    Normal::standard().inverse_cdf(p)
}

/// Monte-Carlo estimate with its standard error and sample count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub stderr: f64,
    pub n: u64,
}

impl McEstimate {
    pub fn exact(value: f64) -> Self {
        Self {
            value,
            stderr: 0.0,
            n: 0,
        }
    }
}

/// Welford running mean and variance.
#[derive(Debug, Clone, Copy, Default)]
pub struct Running {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Running {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn estimate(&self) -> McEstimate {
        let stderr = if self.n < 2 {
            f64::INFINITY
        } else {
            (self.variance() / self.n as f64).sqrt()
        };
        McEstimate {
            value: self.mean,
            stderr,
            n: self.n,
        }
    }
}

/// One-dimensional quadrature rule `sum_i w_i g(x_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, mut g: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * g(x))
            .sum()
    }
}

/// Golub–Welsch for a symmetric tridiagonal Jacobi matrix with zero diagonal.
fn golub_welsch(offdiag: &[f64], mass: f64) -> QuadRule {
    let n = offdiag.len() + 1;
    let mut j = DMatrix::zeros(n, n);
    for (i, &b) in offdiag.iter().enumerate() {
        j[(i, i + 1)] = b;
        j[(i + 1, i)] = b;
    }
    let spec = sym_eigen(&j).expect("Jacobi matrix is symmetric");
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = spec.eigenvectors[(0, i)];
            (spec.eigenvalues[i], mass * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    // Symmetrize nodes and weights, which are exact reflections of each other.
    for i in 0..n / 2 {
        let k = n - 1 - i;
        let x = 0.5 * (pairs[k].0 - pairs[i].0);
        let w = 0.5 * (pairs[k].1 + pairs[i].1);
        pairs[i] = (-x, w);
        pairs[k] = (x, w);
    }
    if n % 2 == 1 {
        pairs[n / 2].0 = 0.0;
    }
    QuadRule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    }
}

/// Gauss–Hermite rule for the standard normal measure (weights sum to 1).
pub fn gauss_hermite(order: usize) -> QuadRule {
    assert!(order >= 1);
    let off: Vec<f64> = (1..order).map(|i| (i as f64).sqrt()).collect();
    golub_welsch(&off, 1.0)
}

/// Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> QuadRule {
    assert!(order >= 1);
    let off: Vec<f64> = (1..order)
        .map(|i| {
            let i = i as f64;
            i / (4.0 * i * i - 1.0).sqrt()
        })
        .collect();
    golub_welsch(&off, 2.0)
}

/// How to integrate against the standard Gaussian in each coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GaussianRule {
    /// Gauss–Hermite with the given number of nodes. Best for smooth integrands.
    Hermite { order: usize },
    /// Composite Gauss–Legendre on `[-half_width, half_width]` with panels of
    /// width `panel`, weighted by the Gaussian density. Panel edges include 0,
    /// so integrands with a jump at the origin are integrated exactly.
    CompositeLegendre {
        half_width: f64,
        panel: f64,
        order: usize,
    },
}

impl GaussianRule {
    /// Rule for high-degree expansions of functions with a jump at 0.
    pub fn fine() -> Self {
        GaussianRule::CompositeLegendre {
            half_width: 48.0,
            panel: 0.25,
            order: 16,
        }
    }

    /// Nodes and Gaussian-measure weights.
    pub fn build(&self) -> Result<QuadRule> {
        match *self {
            GaussianRule::Hermite { order } => {
                if order == 0 || order > 400 {
                    return Err(JuntaError::param("order", "Gauss-Hermite order must be in 1..=400"));
                }
                Ok(gauss_hermite(order))
            }
            GaussianRule::CompositeLegendre {
                half_width,
                panel,
                order,
            } => {
                if !(half_width > 0.0 && panel > 0.0 && order >= 1) {
                    return Err(JuntaError::param("panel", "composite rule needs positive sizes"));
                }
                let per_side = (half_width / panel).ceil() as usize;
                let base = gauss_legendre(order);
                let mut nodes = Vec::with_capacity(2 * per_side * order);
                let mut weights = Vec::with_capacity(2 * per_side * order);
                for p in 0..2 * per_side {
                    let lo = (p as f64 - per_side as f64) * panel;
                    let mid = lo + 0.5 * panel;
                    for (x, w) in base.nodes.iter().zip(&base.weights) {
                        let node = mid + 0.5 * panel * x;
                        nodes.push(node);
                        weights.push(0.5 * panel * w * pdf(node));
                    }
                }
                Ok(QuadRule { nodes, weights })
            }
        }
    }
}

/// A rule together with "half weights" `w_i / sqrt(pdf(x_i))`, which let
/// callers integrate products `u(x) v(x)` with `u sqrt(pdf)` bounded (Hermite
/// functions) without overflow far in the tails.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfWeightRule {
    pub rule: QuadRule,
    pub half: Vec<f64>,
}

impl GaussianRule {
    pub fn build_half(&self) -> Result<HalfWeightRule> {
        let rule = self.build()?;
        let half = match *self {
            GaussianRule::Hermite { .. } => rule
                .nodes
                .iter()
                .zip(&rule.weights)
                .map(|(&x, &w)| w * (0.25 * x * x).exp() / INV_SQRT_2PI.sqrt())
                .collect(),
            GaussianRule::CompositeLegendre { panel, order, .. } => {
                let base = gauss_legendre(order);
                rule.nodes
                    .iter()
                    .enumerate()
                    .map(|(i, &x)| 0.5 * panel * base.weights[i % order] * INV_SQRT_2PI.sqrt() * (-0.25 * x * x).exp())
                    .collect()
            }
        };
        Ok(HalfWeightRule { rule, half })
    }
}

/// Tensor-product rule in `k` dimensions, refusing more than `cap` points.
pub fn tensor_points(rule: &QuadRule, k: usize, cap: usize) -> Result<Vec<(Vec<f64>, f64)>> {
    let total = (rule.len() as f64).powi(k as i32);
    if total > cap as f64 {
        return Err(JuntaError::Capability(format!(
            "tensor quadrature with {total:e} points exceeds cap {cap}"
        )));
    }
    let mut out = Vec::with_capacity(total as usize);
    let mut idx = vec![0usize; k];
    loop {
        let point: Vec<f64> = idx.iter().map(|&i| rule.nodes[i]).collect();
        let weight: f64 = idx.iter().map(|&i| rule.weights[i]).product();
        out.push((point, weight));
        let mut d = 0;
        loop {
            if d == k {
                return Ok(out);
            }
            idx[d] += 1;
            if idx[d] < rule.len() {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}
