//! Black-box query oracles over Gaussian space.
//!
//! A [`QueryOracle`] wraps either a built-in [`FunctionSpec`] or an arbitrary
//! closure, counts every evaluation, enforces an optional hard query budget and
//! optionally corrupts labels deterministically.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::gaussian::{self, gauss_hermite, QuadRule};
use crate::linalg::Subspace;
use crate::rng::{hash_labels, mix64};
use crate::smoothing::noise_scale;
use crate::{JuntaError, Result};

const UNIT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Halfspace {
    pub direction: Vec<f64>,
    #[serde(default)]
    pub threshold: f64,
}

/// Built-in target families. Sign conventions: `sign(0) = +1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FunctionSpec {
    /// `sign(<u, x> - theta)`.
    Halfspace {
        direction: Vec<f64>,
        #[serde(default)]
        threshold: f64,
    },
    /// `+1` on the intersection of the halfspaces `<u_i, x> >= theta_i`, `-1` elsewhere.
    Intersection { halfspaces: Vec<Halfspace> },
    /// `table[b]` where bit `i` of `b` is set iff `<d_i, x> >= 0`.
    BooleanJuntaLift {
        directions: Vec<Vec<f64>>,
        table: Vec<f64>,
    },
    /// `(1/k) sum_i tanh(g_i <d_i, x>)`.
    SmoothTanhJunta {
        directions: Vec<Vec<f64>>,
        gains: Vec<f64>,
    },
    Constant { value: f64, dim: usize },
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sgn(v: f64) -> f64 {
    if v >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

fn hermite64() -> &'static QuadRule {
    static RULE: OnceLock<QuadRule> = OnceLock::new();
    RULE.get_or_init(|| gauss_hermite(64))
}

impl FunctionSpec {
    pub fn halfspace(direction: Vec<f64>, threshold: f64) -> Self {
        FunctionSpec::Halfspace {
            direction,
            threshold,
        }
    }

    /// `sign(x_axis - threshold)` in `R^dim`.
    pub fn axis_halfspace(dim: usize, axis: usize, threshold: f64) -> Self {
        let mut d = vec![0.0; dim];
        d[axis] = 1.0;
        Self::halfspace(d, threshold)
    }

    /// Direction/threshold pairs; for the Boolean lift the thresholds are 0.
    fn directions(&self) -> Vec<&[f64]> {
        match self {
            FunctionSpec::Halfspace { direction, .. } => vec![direction],
            FunctionSpec::Intersection { halfspaces } => {
                halfspaces.iter().map(|h| h.direction.as_slice()).collect()
            }
            FunctionSpec::BooleanJuntaLift { directions, .. }
            | FunctionSpec::SmoothTanhJunta { directions, .. } => {
                directions.iter().map(|d| d.as_slice()).collect()
            }
            FunctionSpec::Constant { .. } => vec![],
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            FunctionSpec::Constant { dim, .. } => *dim,
            _ => self.directions().first().map_or(0, |d| d.len()),
        }
    }

    /// Number of relevant directions.
    pub fn arity(&self) -> usize {
        self.directions().len()
    }

    pub fn validate(&self) -> Result<()> {
        let dirs = self.directions();
        let n = self.dim();
        if n == 0 {
            return Err(JuntaError::Input("function has zero ambient dimension".into()));
        }
        for d in &dirs {
            if d.len() != n {
                return Err(JuntaError::Dimension {
                    expected: n,
                    got: d.len(),
                });
            }
            if d.iter().any(|x| !x.is_finite()) {
                return Err(JuntaError::Input("direction has non-finite entries".into()));
            }
            let norm = dot(d, d).sqrt();
            if (norm - 1.0).abs() > UNIT_TOL {
                return Err(JuntaError::Input(format!(
                    "direction is not unit-norm (norm {norm})"
                )));
            }
        }
        match self {
            FunctionSpec::Halfspace { threshold, .. } if !threshold.is_finite() => {
                Err(JuntaError::Input("threshold must be finite".into()))
            }
            FunctionSpec::Intersection { halfspaces } if halfspaces.is_empty() => {
                Err(JuntaError::Input("intersection of zero halfspaces".into()))
            }
            FunctionSpec::BooleanJuntaLift { directions, table } => {
                if directions.is_empty() || directions.len() > 16 {
                    return Err(JuntaError::Input("lift needs 1..=16 directions".into()));
                }
                if table.len() != 1 << directions.len() {
                    return Err(JuntaError::Dimension {
                        expected: 1 << directions.len(),
                        got: table.len(),
                    });
                }
                if table.iter().any(|v| !(v.abs() <= 1.0)) {
                    return Err(JuntaError::Input("table values must lie in [-1, 1]".into()));
                }
                Ok(())
            }
            FunctionSpec::SmoothTanhJunta { directions, gains } => {
                if directions.is_empty() || gains.len() != directions.len() {
                    return Err(JuntaError::Input("need one gain per direction".into()));
                }
                if gains.iter().any(|g| !g.is_finite()) {
                    return Err(JuntaError::Input("gains must be finite".into()));
                }
                Ok(())
            }
            FunctionSpec::Constant { value, .. } if !(value.abs() <= 1.0) => {
                Err(JuntaError::Input("constant must lie in [-1, 1]".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            FunctionSpec::Halfspace {
                direction,
                threshold,
            } => sgn(dot(direction, x) - threshold),
            FunctionSpec::Intersection { halfspaces } => {
                if halfspaces
                    .iter()
                    .all(|h| dot(&h.direction, x) >= h.threshold)
                {
                    1.0
                } else {
                    -1.0
                }
            }
            FunctionSpec::BooleanJuntaLift { directions, table } => {
                let idx = directions
                    .iter()
                    .enumerate()
                    .filter(|(_, d)| dot(d, x) >= 0.0)
                    .fold(0usize, |acc, (i, _)| acc | (1 << i));
                table[idx]
            }
            FunctionSpec::SmoothTanhJunta { directions, gains } => {
                let k = directions.len() as f64;
                directions
                    .iter()
                    .zip(gains)
                    .map(|(d, g)| (g * dot(d, x)).tanh())
                    .sum::<f64>()
                    / k
            }
            FunctionSpec::Constant { value, .. } => *value,
        }
    }

    /// Whether the relevant directions are pairwise orthogonal (within `1e-9`).
    fn orthonormal_directions(&self) -> bool {
        let d = self.directions();
        (0..d.len()).all(|i| (i + 1..d.len()).all(|j| dot(d[i], d[j]).abs() <= UNIT_TOL))
    }

    fn need_orthonormal(&self, what: &str) -> Result<()> {
        if self.orthonormal_directions() {
            Ok(())
        } else {
            Err(JuntaError::Capability(format!(
                "closed-form {what} needs pairwise orthogonal directions"
            )))
        }
    }

    /// Closed-form `P_t f(x)`.
    pub fn pt(&self, t: f64, x: &[f64]) -> Result<f64> {
        if t < 0.0 {
            return Err(JuntaError::param("t", "must be nonnegative"));
        }
        if t == 0.0 {
            return Ok(self.eval(x));
        }
        let a = (-t).exp();
        let s = noise_scale(t);
        Ok(match self {
            FunctionSpec::Halfspace {
                direction,
                threshold,
            } => 2.0 * gaussian::cdf((a * dot(direction, x) - threshold) / s) - 1.0,
            FunctionSpec::Intersection { halfspaces } => {
                self.need_orthonormal("smoothing")?;
                let p: f64 = halfspaces
                    .iter()
                    .map(|h| gaussian::cdf((a * dot(&h.direction, x) - h.threshold) / s))
                    .product();
                2.0 * p - 1.0
            }
            FunctionSpec::BooleanJuntaLift { directions, table } => {
                self.need_orthonormal("smoothing")?;
                let q: Vec<f64> = directions
                    .iter()
                    .map(|d| gaussian::cdf(a * dot(d, x) / s))
                    .collect();
                table
                    .iter()
                    .enumerate()
                    .map(|(b, v)| v * bit_prob(b, &q, None))
                    .sum()
            }
            FunctionSpec::SmoothTanhJunta { directions, gains } => {
                let rule = hermite64();
                let k = directions.len() as f64;
                directions
                    .iter()
                    .zip(gains)
                    .map(|(d, g)| {
                        let m = a * dot(d, x);
                        rule.integrate(|z| (g * (m + s * z)).tanh())
                    })
                    .sum::<f64>()
                    / k
            }
            FunctionSpec::Constant { value, .. } => *value,
        })
    }

    /// Closed-form `grad P_t f(x)`. `t = 0` is allowed only for smooth families.
    pub fn grad_pt(&self, t: f64, x: &[f64]) -> Result<DVector<f64>> {
        let n = self.dim();
        if t < 0.0 {
            return Err(JuntaError::param("t", "must be nonnegative"));
        }
        let smooth = matches!(
            self,
            FunctionSpec::SmoothTanhJunta { .. } | FunctionSpec::Constant { .. }
        );
        if t == 0.0 && !smooth {
            return Err(JuntaError::Capability(
                "gradient of a discontinuous function at t = 0".into(),
            ));
        }
        let a = (-t).exp();
        let s = noise_scale(t);
        let mut g = DVector::zeros(n);
        let mut add = |d: &[f64], c: f64| {
            for (gi, di) in g.iter_mut().zip(d) {
                *gi += c * di;
            }
        };
        match self {
            FunctionSpec::Halfspace {
                direction,
                threshold,
            } => {
                let z = (a * dot(direction, x) - threshold) / s;
                add(direction, 2.0 * a / s * gaussian::pdf(z));
            }
            FunctionSpec::Intersection { halfspaces } => {
                self.need_orthonormal("gradient")?;
                let z: Vec<f64> = halfspaces
                    .iter()
                    .map(|h| (a * dot(&h.direction, x) - h.threshold) / s)
                    .collect();
                for (i, h) in halfspaces.iter().enumerate() {
                    let others: f64 = z
                        .iter()
                        .enumerate()
                        .filter(|&(j, _)| j != i)
                        .map(|(_, &zj)| gaussian::cdf(zj))
                        .product();
                    add(&h.direction, 2.0 * a / s * gaussian::pdf(z[i]) * others);
                }
            }
            FunctionSpec::BooleanJuntaLift { directions, table } => {
                self.need_orthonormal("gradient")?;
                let z: Vec<f64> = directions.iter().map(|d| a * dot(d, x) / s).collect();
                let q: Vec<f64> = z.iter().map(|&zi| gaussian::cdf(zi)).collect();
                for (i, d) in directions.iter().enumerate() {
                    let dq = a / s * gaussian::pdf(z[i]);
                    let partial: f64 = table
                        .iter()
                        .enumerate()
                        .map(|(b, v)| v * bit_prob(b, &q, Some(i)))
                        .sum();
                    add(d, dq * partial);
                }
            }
            FunctionSpec::SmoothTanhJunta { directions, gains } => {
                let k = directions.len() as f64;
                let rule = hermite64();
                for (d, gain) in directions.iter().zip(gains) {
                    let m = a * dot(d, x);
                    let e = if t == 0.0 {
                        1.0 / (gain * m).cosh().powi(2)
                    } else {
                        rule.integrate(|z| 1.0 / (gain * (m + s * z)).cosh().powi(2))
                    };
                    add(d, gain * a * e / k);
                }
            }
            FunctionSpec::Constant { .. } => {}
        }
        Ok(g)
    }

    /// Closed-form `A_E f(x)` (halfspaces and constants only).
    ///
    /// For `sign(<u,x> - theta)` this is `2 Phi((<Pi_E u, x> - theta) / |Pi_{E^perp} u|) - 1`.
    pub fn average(&self, e: &Subspace<f64>, x: &[f64]) -> Result<f64> {
        match self {
            FunctionSpec::Halfspace {
                direction,
                threshold,
            } => {
                let u = DVector::from_column_slice(direction);
                let pu = e.project(&u);
                let rest = (&u - &pu).norm();
                let m = dot(pu.as_slice(), x) - threshold;
                if rest < 1e-12 {
                    Ok(sgn(m))
                } else {
                    Ok(2.0 * gaussian::cdf(m / rest) - 1.0)
                }
            }
            FunctionSpec::Constant { value, .. } => Ok(*value),
            _ => Err(JuntaError::Capability(
                "closed-form averaging is available for halfspaces only".into(),
            )),
        }
    }

    /// Lipschitz constant, when finite.
    pub fn lipschitz(&self) -> Option<f64> {
        match self {
            FunctionSpec::SmoothTanhJunta { gains, .. } => {
                Some(gains.iter().map(|g| g.abs()).sum::<f64>() / gains.len() as f64)
            }
            FunctionSpec::Constant { .. } => Some(0.0),
            _ => None,
        }
    }

    /// A smoothness parameter `s` with `E|f - P_t f| <= s sqrt(t)`.
    ///
    /// Halfspaces use `s = 1`; Boolean combinations of `k` halfspaces use `s = k`;
    /// `L`-Lipschitz functions use `s = L sqrt(2)`.
    pub fn smoothness(&self) -> f64 {
        match self {
            FunctionSpec::Halfspace { .. } => 1.0,
            FunctionSpec::Intersection { halfspaces } => halfspaces.len() as f64,
            FunctionSpec::BooleanJuntaLift { directions, .. } => directions.len() as f64,
            FunctionSpec::SmoothTanhJunta { .. } => {
                self.lipschitz().unwrap_or(0.0) * std::f64::consts::SQRT_2
            }
            FunctionSpec::Constant { .. } => 0.0,
        }
    }

    /// Relevant directions as matrix columns (`n x k`).
    pub fn relevant_directions(&self) -> DMatrix<f64> {
        let d = self.directions();
        let n = self.dim();
        DMatrix::from_fn(n, d.len(), |i, j| d[j][i])
    }

    /// `Some(threshold)` for a single halfspace.
    pub fn threshold(&self) -> Option<f64> {
        match self {
            FunctionSpec::Halfspace { threshold, .. } => Some(*threshold),
            _ => None,
        }
    }
}

/// `prod_j P(bit_j = b_j)` with `q_j = P(bit_j = 1)`. With `skip = Some(i)` the
/// factor for bit `i` is replaced by its derivative in `q_i` (`+1` or `-1`).
fn bit_prob(b: usize, q: &[f64], skip: Option<usize>) -> f64 {
    q.iter()
        .enumerate()
        .map(|(j, &qj)| {
            let on = b >> j & 1 == 1;
            if skip == Some(j) {
                if on {
                    1.0
                } else {
                    -1.0
                }
            } else if on {
                qj
            } else {
                1.0 - qj
            }
        })
        .product()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionMode {
    /// Each point is flipped independently with probability `rate`, as a fixed
    /// pseudo-random function of the point.
    RandomFlip,
    /// Flip every point whose projection on a direction lies in a band of
    /// Gaussian mass `rate` starting at the threshold.
    AdversarialBandFlip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub mode: CorruptionMode,
    pub rate: f64,
    #[serde(default)]
    pub seed: u64,
    /// Band direction; defaults to the target's first relevant direction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Vec<f64>>,
}

impl CorruptionSpec {
    pub fn random_flip(rate: f64, seed: u64) -> Self {
        Self {
            mode: CorruptionMode::RandomFlip,
            rate,
            seed,
            direction: None,
        }
    }

    pub fn band_flip(rate: f64) -> Self {
        Self {
            mode: CorruptionMode::AdversarialBandFlip,
            rate,
            seed: 0,
            direction: None,
        }
    }
}

#[derive(Debug, Clone)]
enum Corruption {
    Random { seed: u64, rate: f64 },
    Band { direction: Vec<f64>, lo: f64, hi: f64 },
}

/// Grid used to turn a point into a hash key.
pub const QUANTIZATION: f64 = 1e-9;

fn point_hash(seed: u64, x: &[f64]) -> u64 {
    let mut h = mix64(seed ^ 0x5851_F42D_4C95_7F2D);
    for &xi in x {
        let q = (xi / QUANTIZATION).round().clamp(-9.2e18, 9.2e18) as i64;
        h = mix64(h ^ q as u64);
    }
    h
}

impl Corruption {
    fn compile(spec: &CorruptionSpec, target: Option<&FunctionSpec>, dim: usize) -> Result<Self> {
        if !(0.0..0.5).contains(&spec.rate) {
            return Err(JuntaError::param("rate", "corruption rate must lie in [0, 1/2)"));
        }
        match spec.mode {
            CorruptionMode::RandomFlip => Ok(Corruption::Random {
                seed: hash_labels(&[spec.seed]),
                rate: spec.rate,
            }),
            CorruptionMode::AdversarialBandFlip => {
                let direction = match (&spec.direction, target) {
                    (Some(d), _) => d.clone(),
                    (None, Some(t)) if t.arity() > 0 => t.directions()[0].to_vec(),
                    _ => {
                        return Err(JuntaError::Input(
                            "band corruption needs a direction".into(),
                        ))
                    }
                };
                if direction.len() != dim {
                    return Err(JuntaError::Dimension {
                        expected: dim,
                        got: direction.len(),
                    });
                }
                if (dot(&direction, &direction).sqrt() - 1.0).abs() > UNIT_TOL {
                    return Err(JuntaError::Input("band direction is not unit-norm".into()));
                }
                let start = target.and_then(|t| t.threshold()).unwrap_or(0.0);
                let p0 = gaussian::cdf(start);
                let (lo, hi) = if p0 + spec.rate < 1.0 {
                    (start, gaussian::quantile(p0 + spec.rate))
                } else {
                    (gaussian::quantile(1.0 - spec.rate), f64::INFINITY)
                };
                Ok(Corruption::Band { direction, lo, hi })
            }
        }
    }

    fn flips(&self, x: &[f64]) -> bool {
        match self {
            Corruption::Random { seed, rate } => {
                let u = (point_hash(*seed, x) >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
                u < *rate
            }
            Corruption::Band { direction, lo, hi } => {
                let p = dot(direction, x);
                p >= *lo && p < *hi
            }
        }
    }
}

type CustomFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Source {
    Spec(FunctionSpec),
    Custom(CustomFn),
}

/// Descriptive metadata carried by an oracle.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OracleMeta {
    /// `s` such that the clean function is s-smooth.
    pub smoothness: Option<f64>,
    pub lipschitz: Option<f64>,
    /// Arity of the relevant subspace of the clean function.
    pub relevant_dim: Option<usize>,
}

/// Counted, optionally budgeted and corrupted function `R^n -> [-1, 1]`.
pub struct QueryOracle {
    dim: usize,
    source: Source,
    corruption_spec: Option<CorruptionSpec>,
    corruption: Option<Corruption>,
    counter: AtomicU64,
    budget: Option<u64>,
    meta: OracleMeta,
}

impl fmt::Debug for QueryOracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("QueryOracle")
            .field("dim", &self.dim)
            .field("spec", &self.spec())
            .field("corruption", &self.corruption_spec)
            .field("queries", &self.queries())
            .field("budget", &self.budget)
            .finish()
    }
}

impl QueryOracle {
    /// Build an oracle for `spec`, optionally corrupted.
    pub fn new(spec: FunctionSpec, corruption: Option<CorruptionSpec>) -> Result<Self> {
        spec.validate()?;
        let dim = spec.dim();
        let compiled = corruption
            .as_ref()
            .map(|c| Corruption::compile(c, Some(&spec), dim))
            .transpose()?;
        let meta = OracleMeta {
            smoothness: Some(spec.smoothness()),
            lipschitz: spec.lipschitz(),
            relevant_dim: Some(spec.arity()),
        };
        Ok(Self {
            dim,
            source: Source::Spec(spec),
            corruption_spec: corruption,
            corruption: compiled,
            counter: AtomicU64::new(0),
            budget: None,
            meta,
        })
    }

    /// Wrap an arbitrary function. Values are clamped to `[-1, 1]`.
    pub fn custom(dim: usize, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            dim,
            source: Source::Custom(Arc::new(f)),
            corruption_spec: None,
            corruption: None,
            counter: AtomicU64::new(0),
            budget: None,
            meta: OracleMeta::default(),
        }
    }

    pub fn with_budget(mut self, budget: u64) -> Self {
        self.budget = Some(budget);
        self
    }

    pub fn with_meta(mut self, meta: OracleMeta) -> Self {
        self.meta = meta;
        self
    }

    /// Add a corruption to an existing oracle.
    pub fn with_corruption(mut self, corruption: CorruptionSpec) -> Result<Self> {
        let target = match &self.source {
            Source::Spec(s) => Some(s),
            Source::Custom(_) => None,
        };
        self.corruption = Some(Corruption::compile(&corruption, target, self.dim)?);
        self.corruption_spec = Some(corruption);
        Ok(self)
    }

    /// A copy with a fresh counter and the same budget, corruption and source.
    pub fn fork(&self) -> Self {
        Self {
            dim: self.dim,
            source: self.source.clone(),
            corruption_spec: self.corruption_spec.clone(),
            corruption: self.corruption.clone(),
            counter: AtomicU64::new(0),
            budget: self.budget,
            meta: self.meta.clone(),
        }
    }

    /// The uncorrupted function with a fresh counter and no budget.
    pub fn clean(&self) -> Self {
        Self {
            corruption_spec: None,
            corruption: None,
            budget: None,
            ..self.fork()
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn meta(&self) -> &OracleMeta {
        &self.meta
    }

    /// Analytic description, when the oracle wraps a built-in family.
    pub fn spec(&self) -> Option<&FunctionSpec> {
        match &self.source {
            Source::Spec(s) => Some(s),
            Source::Custom(_) => None,
        }
    }

    pub fn corruption(&self) -> Option<&CorruptionSpec> {
        self.corruption_spec.as_ref()
    }

    pub fn queries(&self) -> u64 {
        self.counter.load(Ordering::Relaxed)
    }

    pub fn budget(&self) -> Option<u64> {
        self.budget
    }

    pub fn remaining(&self) -> Option<u64> {
        self.budget.map(|b| b.saturating_sub(self.queries()))
    }

    /// Evaluate at `x`, counting one query. Fails without evaluating once the
    /// budget is spent.
    pub fn query(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(JuntaError::Dimension {
                expected: self.dim,
                got: x.len(),
            });
        }
        match self.budget {
            Some(budget) => {
                self.counter
                    .fetch_update(Ordering::Relaxed, Ordering::Relaxed, |used| {
                        (used < budget).then_some(used + 1)
                    })
                    .map_err(|used| JuntaError::Budget {
                        used,
                        budget,
                        partial: None,
                    })?;
            }
            None => {
                self.counter.fetch_add(1, Ordering::Relaxed);
            }
        }
        let v = match &self.source {
            Source::Spec(s) => s.eval(x),
            Source::Custom(f) => f(x),
        };
        if v.is_nan() {
            return Err(JuntaError::Input("oracle returned NaN".into()));
        }
        let v = v.clamp(-1.0, 1.0);
        Ok(match &self.corruption {
            Some(c) if c.flips(x) => -v,
            _ => v,
        })
    }

    pub fn query_vec(&self, x: &DVector<f64>) -> Result<f64> {
        self.query(x.as_slice())
    }
}
