//! Finite nets over sphere directions, subspaces, smooth functions and linear
//! juntas on a low-dimensional coordinate space `R^m`.
//!
//! Halfspace and ramp nets are built in the `L^1(gamma)` metric: a bounded
//! target's correlation moves by at most `E|h - h'|`, which is what the
//! correlation search needs, and it keeps desk-scale nets small. Smooth-function
//! and subspace nets use the `L^2` / Frobenius metrics.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::gaussian::{self, Running};
use crate::hermite::{self, count_indices, multi_indices, HermiteExpansion};
use crate::linalg::{checks::CheckReport, orthonormalize_rows, Subspace};
use crate::oracle::{FunctionSpec, OracleMeta, QueryOracle};
use crate::rng::{self, hash_labels, tag};
use crate::smoothing::{self, SmoothnessReport};
use crate::{JuntaError, Result};

/// Default cap on enumerated elements.
pub const DEFAULT_CAP: u64 = 1_000_000;

/// Limits and knobs for desk-scale nets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetCaps {
    pub max_elements: u64,
    /// Hermite degree bound: indices with `|S| < degree` are kept.
    pub degree: usize,
    /// Coefficient grid step of the smooth net.
    pub grid: f64,
    /// Override for the subspace-net accuracy (defaults to `eps^2 / s`).
    pub subspace_accuracy: Option<f64>,
    /// Sampled embeddings per explicit member when averaging.
    pub averaging_samples: usize,
    /// Inner Gaussian draws per averaged member.
    pub averaging_draws: usize,
    pub seed: u64,
}

impl Default for NetCaps {
    fn default() -> Self {
        Self {
            max_elements: DEFAULT_CAP,
            degree: 3,
            grid: 0.5,
            subspace_accuracy: None,
            averaging_samples: 8,
            averaging_draws: 256,
            seed: 0,
        }
    }
}

fn size_error(what: &'static str, cardinality: f64, cap: u64) -> JuntaError {
    JuntaError::Size { what, cardinality, cap }
}

fn check_cap(what: &'static str, cardinality: f64, cap: u64) -> Result<()> {
    if cardinality > cap as f64 {
        Err(size_error(what, cardinality, cap))
    } else {
        Ok(())
    }
}

/// Number of points in [`sphere_net`].
pub fn sphere_net_size(m: usize, delta: f64) -> f64 {
    match m {
        0 => 0.0,
        1 => 2.0,
        _ => {
            let n = sphere_steps(m, delta) as f64;
            (n + 1.0).powi(m as i32) - (n - 1.0).powi(m as i32)
        }
    }
}

fn sphere_steps(m: usize, delta: f64) -> usize {
    let h = 2.0 * delta / ((m - 1) as f64).sqrt();
    (2.0 / h).ceil().max(1.0) as usize
}

/// `delta`-net of the unit sphere in `R^m`: a grid on the surface of
/// `[-1, 1]^m` with face spacing `2 delta / sqrt(m - 1)`, pushed radially onto
/// the sphere. Radial projection is 1-Lipschitz outside the unit ball.
pub fn sphere_net(m: usize, delta: f64, cap: u64) -> Result<Vec<DVector<f64>>> {
    if !(delta > 0.0) {
        return Err(JuntaError::param("delta", "net radius must be positive"));
    }
    check_cap("sphere net", sphere_net_size(m, delta), cap)?;
    match m {
        0 => return Ok(Vec::new()),
        1 => return Ok(vec![DVector::from_element(1, 1.0), DVector::from_element(1, -1.0)]),
        _ => {}
    }
    let n = sphere_steps(m, delta);
    let mut out = Vec::new();
    let mut idx = vec![0usize; m];
    loop {
        if idx.iter().any(|&i| i == 0 || i == n) {
            let v = DVector::from_iterator(m, idx.iter().map(|&i| -1.0 + 2.0 * i as f64 / n as f64));
            let norm = v.norm();
            out.push(v / norm);
        }
        let mut d = 0;
        loop {
            if d == m {
                return Ok(out);
            }
            idx[d] += 1;
            if idx[d] <= n {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}

fn canonical_sign(v: &DVector<f64>) -> bool {
    v.iter().find(|x| x.abs() > 1e-12).map_or(false, |&x| x > 0.0)
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Accuracy of the sphere net behind [`subspace_net`]: spans of `k` points each
/// within `delta` of an orthonormal basis satisfy
/// `||Pi_E - Pi_V||_F = sqrt(2) ||Pi_{V^perp} Q_E||_F <= sqrt(2 k) delta`.
pub fn subspace_net_delta(k: usize, eps: f64) -> f64 {
    eps / (2.0 * k as f64).sqrt()
}

/// `k`-dimensional subspaces of `R^m` such that every `k`-dimensional subspace
/// is within projector Frobenius distance `eps` of one of them.
pub fn subspace_net(m: usize, k: usize, eps: f64, cap: u64) -> Result<Vec<Subspace<f64>>> {
    if k > m {
        return Err(JuntaError::param("k", "subspace dimension exceeds ambient dimension"));
    }
    if !(eps > 0.0) {
        return Err(JuntaError::param("eps", "net radius must be positive"));
    }
    if k == 0 {
        return Ok(vec![Subspace::trivial(m)]);
    }
    if k == m {
        return Ok(vec![Subspace::full(m)]);
    }
    let delta = subspace_net_delta(k, eps);
    let half = sphere_net_size(m, delta) / 2.0;
    check_cap("subspace net", binomial(half.round() as usize, k), cap)?;
    let points: Vec<DVector<f64>> = sphere_net(m, delta, u64::MAX)?
        .into_iter()
        .filter(canonical_sign)
        .collect();
    let mut out = Vec::new();
    let mut combo: Vec<usize> = (0..k).collect();
    loop {
        let cols: Vec<DVector<f64>> = combo.iter().map(|&i| points[i].clone()).collect();
        let sub = Subspace::span(&DMatrix::from_columns(&cols), 1e-9)?;
        if sub.dim() == k {
            out.push(sub);
        }
        // Next k-combination in lexicographic order.
        let mut i = k;
        loop {
            if i == 0 {
                return Ok(out);
            }
            i -= 1;
            if combo[i] < points.len() - k + i {
                combo[i] += 1;
                for j in i + 1..k {
                    combo[j] = combo[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Ordered orthonormal `k`-frames in `R^m` (columns of `m x k` matrices),
/// from Gram–Schmidt on ordered tuples of sphere-net points at radius `delta`.
pub fn frame_net(m: usize, k: usize, delta: f64, cap: u64) -> Result<Vec<DMatrix<f64>>> {
    if k > m {
        return Err(JuntaError::param("k", "frame size exceeds ambient dimension"));
    }
    if k == 0 {
        return Ok(vec![DMatrix::zeros(m, 0)]);
    }
    let size = sphere_net_size(m, delta);
    check_cap("frame net", size.powi(k as i32), cap)?;
    let points = sphere_net(m, delta, u64::MAX)?;
    let mut out = Vec::new();
    let mut idx = vec![0usize; k];
    'outer: loop {
        let mut cols: Vec<DVector<f64>> = Vec::with_capacity(k);
        let mut ok = true;
        for &i in &idx {
            let mut v = points[i].clone();
            for c in &cols {
                let d = c.dot(&v);
                v -= c * d;
            }
            let n = v.norm();
            if n < 0.5 {
                ok = false;
                break;
            }
            cols.push(v / n);
        }
        if ok {
            out.push(DMatrix::from_columns(&cols));
        }
        let mut d = 0;
        loop {
            if d == k {
                break 'outer;
            }
            idx[d] += 1;
            if idx[d] < points.len() {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
    Ok(out)
}

/// A function on `R^k` that can sit in a net.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NetFunction {
    /// `sum_S c_S h_S(y)`, optionally clamped to `[-1, 1]`.
    Hermite {
        k: usize,
        indices: Vec<Vec<u32>>,
        coefficients: Vec<f64>,
        clamped: bool,
    },
    /// `2 Phi((alpha y - theta) / sqrt(1 - alpha^2)) - 1` on `R^1`;
    /// `alpha = 1` is `sign(y - theta)`, `alpha = 0` the constant `1 - 2 Phi(theta)`.
    Ramp { alpha: f64, theta: f64 },
    /// A built-in function whose ambient dimension is `k`.
    Spec { spec: FunctionSpec },
    /// `y -> mean_z base(top^T y + bottom^T z)` for an orthonormal
    /// `2k x k` matrix `[top; bottom]` and fixed inner draws `z`.
    Averaged {
        base: Box<NetFunction>,
        top: DMatrix<f64>,
        bottom: DMatrix<f64>,
        draws: Vec<Vec<f64>>,
    },
}

impl NetFunction {
    pub fn arity(&self) -> usize {
        match self {
            NetFunction::Hermite { k, .. } => *k,
            NetFunction::Ramp { .. } => 1,
            NetFunction::Spec { spec } => spec.dim(),
            NetFunction::Averaged { base, .. } => base.arity(),
        }
    }

    pub fn constant(value: f64) -> Self {
        let u = (0.5 * (1.0 - value)).clamp(0.0, 1.0);
        NetFunction::Ramp {
            alpha: 0.0,
            // Finite so the member survives JSON; Phi(40) is 1 in f64.
            theta: gaussian::quantile(u).clamp(-40.0, 40.0),
        }
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        match self {
            NetFunction::Hermite {
                indices,
                coefficients,
                clamped,
                k,
            } => {
                let max_deg = indices.iter().flatten().copied().max().unwrap_or(0) as usize;
                let tables: Vec<Vec<f64>> = (0..*k).map(|i| hermite::hermite_1d(max_deg, y[i])).collect();
                let v: f64 = indices
                    .iter()
                    .zip(coefficients)
                    .map(|(s, c)| c * s.iter().enumerate().map(|(i, &d)| tables[i][d as usize]).product::<f64>())
                    .sum();
                if *clamped {
                    v.clamp(-1.0, 1.0)
                } else {
                    v
                }
            }
            NetFunction::Ramp { alpha, theta } => ramp(*alpha, *theta, y[0]),
            NetFunction::Spec { spec } => spec.eval(y),
            NetFunction::Averaged {
                base,
                top,
                bottom,
                draws,
            } => {
                let yv = DVector::from_column_slice(y);
                let head = top.transpose() * yv;
                let mut acc = 0.0;
                for z in draws {
                    let p = &head + bottom.transpose() * DVector::from_column_slice(z);
                    acc += base.eval(p.as_slice());
                }
                acc / draws.len() as f64
            }
        }
    }

    /// Global Lipschitz constant when one is known.
    pub fn lipschitz_bound(&self) -> Option<f64> {
        match self {
            NetFunction::Hermite { indices, .. } => {
                if indices.iter().all(|s| s.iter().sum::<u32>() <= 1) {
                    Some(self.linear_norm())
                } else {
                    None
                }
            }
            NetFunction::Ramp { alpha, .. } => {
                if *alpha >= 1.0 {
                    None
                } else {
                    Some(2.0 * gaussian::INV_SQRT_2PI * alpha / (1.0 - alpha * alpha).sqrt())
                }
            }
            NetFunction::Spec { spec } => spec.lipschitz(),
            // The inner map y -> top^T y is a contraction.
            NetFunction::Averaged { base, .. } => base.lipschitz_bound(),
        }
    }

    fn linear_norm(&self) -> f64 {
        match self {
            NetFunction::Hermite {
                indices, coefficients, ..
            } => indices
                .iter()
                .zip(coefficients)
                .filter(|(s, _)| s.iter().sum::<u32>() == 1)
                .map(|(_, c)| c * c)
                .sum::<f64>()
                .sqrt(),
            _ => 0.0,
        }
    }

    /// As a query oracle on `R^k`.
    pub fn to_oracle(&self) -> QueryOracle {
        let f = self.clone();
        let meta = OracleMeta {
            smoothness: None,
            lipschitz: self.lipschitz_bound(),
            relevant_dim: Some(self.arity()),
        };
        QueryOracle::custom(self.arity(), move |y| f.eval(y)).with_meta(meta)
    }
}

/// `2 Phi((alpha y - theta) / sqrt(1 - alpha^2)) - 1`, or `sign(y - theta)` at `alpha = 1`.
pub fn ramp(alpha: f64, theta: f64, y: f64) -> f64 {
    if alpha >= 1.0 {
        if y >= theta {
            1.0
        } else {
            -1.0
        }
    } else {
        2.0 * gaussian::cdf((alpha * y - theta) / (1.0 - alpha * alpha).sqrt()) - 1.0
    }
}

/// Ramp grid with `L^1` covering radius about `r` per direction.
///
/// Thresholds are uniform in `u = Phi(theta)` with step `r/2` over
/// `|theta| <= 3` (each sign function moves by `2 |Delta u|`), angles
/// `alpha = sin(phi)` step by `1.5 r` (a ramp moves by at most `2/pi` per
/// radian of `phi`), and directions come from a sphere net at `0.75 r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RampGrid {
    pub alphas: Vec<f64>,
    pub thetas: Vec<f64>,
    pub sphere_delta: f64,
}

impl RampGrid {
    pub fn new(r: f64, with_ramps: bool) -> Result<Self> {
        if !(r > 0.0) {
            return Err(JuntaError::param("eps", "net radius must be positive"));
        }
        let du = 0.5 * r;
        let umax = gaussian::cdf(3.0) - 0.5;
        let steps = (umax / du).floor() as i64;
        let thetas: Vec<f64> = (-steps..=steps).map(|i| gaussian::quantile(0.5 + i as f64 * du)).collect();
        let half_pi = std::f64::consts::FRAC_PI_2;
        let alphas = if with_ramps {
            let n = (half_pi / (1.5 * r)).ceil().max(1.0) as usize;
            (1..=n).map(|i| (half_pi * i as f64 / n as f64).sin().min(1.0)).collect()
        } else {
            vec![1.0]
        };
        Ok(Self {
            alphas,
            thetas,
            sphere_delta: 0.75 * r,
        })
    }
}

/// Number of integer vectors in `Z^d` with squared norm at most `r2`.
pub fn lattice_count(d: usize, r2: i64) -> f64 {
    fn go(d: usize, r2: i64, memo: &mut HashMap<(usize, i64), f64>) -> f64 {
        if r2 < 0 {
            return 0.0;
        }
        if d == 0 {
            return 1.0;
        }
        if let Some(&v) = memo.get(&(d, r2)) {
            return v;
        }
        let r = isqrt(r2);
        let v = (-r..=r).map(|j| go(d - 1, r2 - j * j, memo)).sum();
        memo.insert((d, r2), v);
        v
    }
    go(d, r2, &mut HashMap::new())
}

fn isqrt(v: i64) -> i64 {
    if v < 0 {
        return -1;
    }
    let mut r = (v as f64).sqrt() as i64;
    while r * r > v {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= v {
        r += 1;
    }
    r
}

/// Lazy enumeration of integer vectors with squared norm at most `r2`.
#[derive(Debug, Clone)]
pub struct LatticeIter {
    r2: i64,
    cur: Vec<i64>,
    done: bool,
}

impl LatticeIter {
    pub fn new(d: usize, r2: i64) -> Self {
        let mut it = Self {
            r2,
            cur: vec![0; d],
            done: r2 < 0,
        };
        it.reset_from(0);
        it
    }

    fn bound(&self, i: usize) -> i64 {
        let used: i64 = self.cur[..i].iter().map(|v| v * v).sum();
        isqrt(self.r2 - used)
    }

    fn reset_from(&mut self, i: usize) {
        for j in i..self.cur.len() {
            self.cur[j] = -self.bound(j);
        }
    }
}

impl Iterator for LatticeIter {
    type Item = Vec<i64>;

    fn next(&mut self) -> Option<Vec<i64>> {
        if self.done {
            return None;
        }
        let out = self.cur.clone();
        let mut i = self.cur.len();
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            if self.cur[i] < self.bound(i) {
                self.cur[i] += 1;
                self.reset_from(i + 1);
                break;
            }
        }
        Some(out)
    }
}

/// Values the covering argument asks for, kept next to the practical caps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothNetTheory {
    /// `eps / 40`.
    pub delta: f64,
    /// `delta^2 / s^2`.
    pub t: f64,
    /// `1 / t`.
    pub degree: f64,
    /// Volumetric bound `C(m - 1 + k, k) ln(3 / delta)` on the log-size.
    pub log_size: f64,
}

/// Grid net of the unit coefficient ball over Hermite indices `|S| < degree`.
/// Members are clamped to `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothNet {
    pub k: usize,
    pub s: f64,
    pub eps: f64,
    pub degree: usize,
    pub grid: f64,
    pub indices: Vec<Vec<u32>>,
    pub theory: SmoothNetTheory,
    radius_units: i64,
}

pub fn smooth_net(k: usize, s: f64, eps: f64, caps: &NetCaps) -> Result<SmoothNet> {
    if !(s > 0.0 && eps > 0.0) {
        return Err(JuntaError::param("eps", "s and eps must be positive"));
    }
    if caps.degree == 0 || !(caps.grid > 0.0) {
        return Err(JuntaError::param("grid", "need degree >= 1 and a positive grid"));
    }
    if count_indices(k, caps.degree) > 10_000 {
        return Err(size_error("Hermite index set", count_indices(k, caps.degree) as f64, 10_000));
    }
    let delta = eps / 40.0;
    let t = delta * delta / (s * s);
    let th_degree = 1.0 / t;
    let th_count = binomial((th_degree.ceil() as usize).saturating_sub(1) + k, k);
    Ok(SmoothNet {
        k,
        s,
        eps,
        degree: caps.degree,
        grid: caps.grid,
        indices: multi_indices(k, caps.degree),
        theory: SmoothNetTheory {
            delta,
            t,
            degree: th_degree,
            log_size: th_count * (3.0 / delta).ln(),
        },
        radius_units: (1.0 / (caps.grid * caps.grid) + 1e-9).floor() as i64,
    })
}

impl SmoothNet {
    /// Number of coefficients per member.
    pub fn dim(&self) -> usize {
        self.indices.len()
    }

    pub fn cardinality(&self) -> f64 {
        lattice_count(self.dim(), self.radius_units)
    }

    fn member(&self, v: &[i64]) -> NetFunction {
        NetFunction::Hermite {
            k: self.k,
            indices: self.indices.clone(),
            coefficients: v.iter().map(|&c| c as f64 * self.grid).collect(),
            clamped: true,
        }
    }

    /// Lazily walk the lattice points.
    pub fn lattice(&self) -> LatticeIter {
        LatticeIter::new(self.dim(), self.radius_units)
    }

    pub fn iter(&self) -> impl Iterator<Item = NetFunction> + '_ {
        self.lattice().map(move |v| self.member(&v))
    }

    pub fn enumerate(&self, cap: u64) -> Result<Vec<NetFunction>> {
        check_cap("smooth net", self.cardinality(), cap)?;
        Ok(self.iter().collect())
    }

    /// Net member for a coefficient vector (truncated toward zero, so it
    /// stays inside the ball) and the Parseval bound
    /// `sqrt(||c - c'||^2 + tail)` on the `L^2` distance of the unclamped
    /// member to a function with those coefficients and tail mass `tail`.
    /// Clamping only moves the member closer to any `[-1, 1]`-valued target.
    pub fn nearest(&self, coefficients: &[f64], tail: f64) -> Result<(NetFunction, f64)> {
        if coefficients.len() != self.dim() {
            return Err(JuntaError::Dimension {
                expected: self.dim(),
                got: coefficients.len(),
            });
        }
        let norm = coefficients.iter().map(|c| c * c).sum::<f64>().sqrt();
        let scale = if norm > 1.0 { 1.0 / norm } else { 1.0 };
        let v: Vec<i64> = coefficients
            .iter()
            .map(|c| (c * scale / self.grid).trunc() as i64)
            .collect();
        let dist2: f64 = coefficients
            .iter()
            .zip(&v)
            .map(|(c, &u)| (c - u as f64 * self.grid).powi(2))
            .sum();
        Ok((self.member(&v), (dist2 + tail.max(0.0)).sqrt()))
    }

    /// Coefficients of `expansion` reordered to this net's index list.
    pub fn align(&self, expansion: &HermiteExpansion) -> Result<Vec<f64>> {
        let map: HashMap<&Vec<u32>, f64> = expansion.indices.iter().zip(&expansion.coefficients).map(|(s, &c)| (s, c)).collect();
        self.indices
            .iter()
            .map(|s| {
                map.get(s)
                    .copied()
                    .ok_or_else(|| JuntaError::param("degree", "expansion degree below the net's"))
            })
            .collect()
    }
}

/// A class of functions on `R^k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassSpec {
    /// All `s`-smooth functions `R^k -> [-1, 1]`.
    AllSmooth { k: usize, s: f64 },
    /// `sign(y - theta)` on `R^1`.
    Halfspaces,
    /// The averaged halfspace class: ramps `2 Phi((alpha y - theta)/sqrt(1 - alpha^2)) - 1`.
    HalfspaceRamps,
    Explicit { k: usize, members: Vec<NetFunction> },
}

impl ClassSpec {
    pub fn arity(&self) -> usize {
        match self {
            ClassSpec::AllSmooth { k, .. } | ClassSpec::Explicit { k, .. } => *k,
            ClassSpec::Halfspaces | ClassSpec::HalfspaceRamps => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let ClassSpec::Explicit { k, members } = self {
            if members.is_empty() {
                return Err(JuntaError::Input("explicit class has no members".into()));
            }
            if let Some(f) = members.iter().find(|f| f.arity() != *k) {
                return Err(JuntaError::Dimension {
                    expected: *k,
                    got: f.arity(),
                });
            }
        }
        if let ClassSpec::AllSmooth { s, .. } = self {
            if !(*s > 0.0) {
                return Err(JuntaError::param("s", "smoothness must be positive"));
            }
        }
        Ok(())
    }
}

/// Random `2k x k` matrix with orthonormal columns, split into its top and
/// bottom `k x k` blocks.
pub fn random_embedding(k: usize, seed: u64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let mut r = rng::stream(seed, &[tag("embedding")]);
    let g = DMatrix::from_fn(k, 2 * k, |_, _| rng::gaussian_vector(1, &mut r)[0]);
    let w = orthonormalize_rows(&g)?.transpose();
    Ok((w.rows(0, k).into_owned(), w.rows(k, k).into_owned()))
}

/// Average of `base` along the embedding `[top; bottom]`.
pub fn averaged_member(base: &NetFunction, top: DMatrix<f64>, bottom: DMatrix<f64>, draws: usize, seed: u64) -> NetFunction {
    let k = base.arity();
    let mut r = rng::stream(seed, &[tag("averaging_draws")]);
    let draws = (0..draws)
        .map(|_| rng::gaussian_vector(k, &mut r).as_slice().to_vec())
        .collect();
    NetFunction::Averaged {
        base: Box::new(base.clone()),
        top,
        bottom,
        draws,
    }
}

/// Closure of a class under embedding into `2k` dimensions and averaging back.
pub fn averaged_class(cls: &ClassSpec, caps: &NetCaps) -> Result<ClassSpec> {
    cls.validate()?;
    Ok(match cls {
        ClassSpec::AllSmooth { .. } | ClassSpec::HalfspaceRamps => cls.clone(),
        ClassSpec::Halfspaces => ClassSpec::HalfspaceRamps,
        ClassSpec::Explicit { k, members } => {
            let mut out = members.clone();
            for (i, f) in members.iter().enumerate() {
                for j in 0..caps.averaging_samples {
                    let seed = hash_labels(&[caps.seed, tag("averaged_class"), i as u64, j as u64]);
                    let (top, bottom) = random_embedding(*k, seed)?;
                    out.push(averaged_member(f, top, bottom, caps.averaging_draws, seed));
                }
            }
            ClassSpec::Explicit { k: *k, members: out }
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetSizes {
    pub functions: u64,
    pub frames: u64,
    pub elements: u64,
    pub log_cardinality: f64,
    /// Log-size of the net the covering argument would build, when known.
    pub theory_log_cardinality: Option<f64>,
}

/// Net of linear juntas on `R^m`: element `(i, j)` is `y -> functions[i](frames[j]^T y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JuntaNet {
    pub m: usize,
    /// Arity of the net functions (`min(k, m)` for the smooth class).
    pub k: usize,
    pub eps: f64,
    pub functions: Vec<NetFunction>,
    /// `m x k` frames.
    pub frames: Vec<DMatrix<f64>>,
    pub elements: Vec<(u32, u32)>,
    pub sizes: NetSizes,
    pub log: Vec<String>,
}

impl JuntaNet {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn eval(&self, element: usize, y: &[f64]) -> f64 {
        let (fi, fr) = self.elements[element];
        let frame = &self.frames[fr as usize];
        let p = frame.transpose() * DVector::from_column_slice(y);
        self.functions[fi as usize].eval(p.as_slice())
    }

    pub fn function(&self, element: usize) -> &NetFunction {
        &self.functions[self.elements[element].0 as usize]
    }

    pub fn frame(&self, element: usize) -> &DMatrix<f64> {
        &self.frames[self.elements[element].1 as usize]
    }

    fn from_parts(
        m: usize,
        k: usize,
        eps: f64,
        functions: Vec<NetFunction>,
        frames: Vec<DMatrix<f64>>,
        elements: Vec<(u32, u32)>,
        theory: Option<f64>,
        log: Vec<String>,
    ) -> Self {
        let sizes = NetSizes {
            functions: functions.len() as u64,
            frames: frames.len() as u64,
            elements: elements.len() as u64,
            log_cardinality: (elements.len() as f64).ln(),
            theory_log_cardinality: theory,
        };
        Self {
            m,
            k,
            eps,
            functions,
            frames,
            elements,
            sizes,
            log,
        }
    }
}

fn product(nf: usize, nr: usize) -> Vec<(u32, u32)> {
    let mut out = Vec::with_capacity(nf * nr);
    for j in 0..nr {
        for i in 0..nf {
            out.push((i as u32, j as u32));
        }
    }
    out
}

/// Net of `Ind_{R^m}(cls)` at radius `eps`.
///
/// Every element is built from a class member and a frame, so it already has a
/// witness in the induced class and nothing needs pruning.
pub fn junta_net(m: usize, eps: f64, cls: &ClassSpec, caps: &NetCaps) -> Result<JuntaNet> {
    cls.validate()?;
    if !(eps > 0.0) {
        return Err(JuntaError::param("eps", "net radius must be positive"));
    }
    let cap = caps.max_elements;
    match cls {
        ClassSpec::AllSmooth { k, s } => {
            let ke = (*k).min(m);
            let fnet = smooth_net(ke, *s, eps, caps)?;
            let acc = caps.subspace_accuracy.unwrap_or(eps * eps / s);
            let nf = fnet.cardinality();
            let nsub_est = if ke == 0 || ke == m {
                1.0
            } else {
                binomial((sphere_net_size(m, subspace_net_delta(ke, acc)) / 2.0).round() as usize, ke)
            };
            check_cap("junta net", nf * nsub_est, cap)?;
            let subs = subspace_net(m, ke, acc, cap)?;
            check_cap("junta net", nf * subs.len() as f64, cap)?;
            let functions = fnet.enumerate(cap)?;
            let frames: Vec<DMatrix<f64>> = subs.iter().map(|e| e.basis().clone()).collect();
            let elements = product(functions.len(), frames.len());
            let sub_theory = (m * ke) as f64 * (3.0 * ke.max(1) as f64 / acc).ln().max(0.0);
            let log = vec![
                format!("smooth net: k={ke}, degree<{}, grid={}, {} members", fnet.degree, fnet.grid, functions.len()),
                format!(
                    "theory: delta={:.3e}, t={:.3e}, degree={:.3e}",
                    fnet.theory.delta, fnet.theory.t, fnet.theory.degree
                ),
                format!("subspace net: accuracy {acc:.3e}, {} subspaces", frames.len()),
            ];
            Ok(JuntaNet::from_parts(
                m,
                ke,
                eps,
                functions,
                frames,
                elements,
                Some(fnet.theory.log_size + sub_theory),
                log,
            ))
        }
        ClassSpec::Halfspaces | ClassSpec::HalfspaceRamps => {
            let ramps = matches!(cls, ClassSpec::HalfspaceRamps);
            let grid = RampGrid::new(eps, ramps)?;
            let ndir = sphere_net_size(m, grid.sphere_delta);
            let mut functions = Vec::new();
            // Constants first so that ties resolve toward them.
            if ramps || m == 0 {
                functions.extend(grid.thetas.iter().map(|&th| NetFunction::Ramp { alpha: 0.0, theta: th }));
                if !ramps {
                    // sign(0 - theta) is +-1.
                    functions = vec![NetFunction::constant(1.0), NetFunction::constant(-1.0)];
                }
            }
            let n_const = functions.len();
            let n_dir_fns = if m == 0 { 0 } else { grid.alphas.len() * grid.thetas.len() };
            check_cap("junta net", n_const as f64 + n_dir_fns as f64 * ndir, cap)?;
            let dirs = if m == 0 { Vec::new() } else { sphere_net(m, grid.sphere_delta, cap)? };
            if m > 0 {
                for &a in &grid.alphas {
                    for &th in &grid.thetas {
                        functions.push(NetFunction::Ramp { alpha: a, theta: th });
                    }
                }
            }
            let mut frames = vec![DMatrix::zeros(m, 1)];
            frames.extend(dirs.iter().map(|d| DMatrix::from_column_slice(m, 1, d.as_slice())));
            let mut elements: Vec<(u32, u32)> = (0..n_const).map(|i| (i as u32, 0)).collect();
            for j in 1..frames.len() {
                for i in n_const..functions.len() {
                    elements.push((i as u32, j as u32));
                }
            }
            let log = vec![format!(
                "{} net: {} directions (delta {:.3e}), {} alphas, {} thresholds",
                if ramps { "ramp" } else { "halfspace" },
                dirs.len(),
                grid.sphere_delta,
                grid.alphas.len(),
                grid.thetas.len()
            )];
            let theory = Some(m as f64 * (3.0 / grid.sphere_delta).ln() + ((grid.alphas.len() * grid.thetas.len()) as f64).ln());
            Ok(JuntaNet::from_parts(m, 1, eps, functions, frames, elements, theory, log))
        }
        ClassSpec::Explicit { k, members } => {
            let frames = if *k > m {
                // Fewer coordinates than the arity: pad with zeros.
                vec![DMatrix::from_fn(m, *k, |i, j| if i == j { 1.0 } else { 0.0 })]
            } else {
                let delta = eps / (2.0 * (*k).max(1) as f64).sqrt();
                check_cap(
                    "junta net",
                    members.len() as f64 * sphere_net_size(m, delta).powi(*k as i32),
                    cap,
                )?;
                frame_net(m, *k, delta, cap)?
            };
            check_cap("junta net", (members.len() * frames.len()) as f64, cap)?;
            let elements = product(members.len(), frames.len());
            let log = vec![format!("explicit net: {} members x {} frames", members.len(), frames.len())];
            Ok(JuntaNet::from_parts(m, *k, eps, members.clone(), frames, elements, None, log))
        }
    }
}

/// `||g o X - g o Y||_{L^2} <= Lip(g) ||X - Y||_F` by Monte Carlo; the
/// left side is reduced by 3 standard errors.
pub fn composition_distance_check(
    g: &NetFunction,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    n_samples: u64,
    seed: u64,
) -> Result<CheckReport> {
    let lip = g
        .lipschitz_bound()
        .ok_or_else(|| JuntaError::Capability("function has no finite Lipschitz bound".into()))?;
    if x.shape() != y.shape() || x.nrows() != g.arity() {
        return Err(JuntaError::Dimension {
            expected: g.arity(),
            got: x.nrows(),
        });
    }
    let n = x.ncols();
    let mut r = rng::stream(seed, &[tag("composition_distance")]);
    let mut acc = Running::default();
    for _ in 0..n_samples {
        let z = rng::gaussian_vector(n, &mut r);
        let d = g.eval((x * &z).as_slice()) - g.eval((y * &z).as_slice());
        acc.push(d * d);
    }
    let (l2, se) = l2_from_squares(&acc);
    Ok(CheckReport::new("composition_distance", (l2 - 3.0 * se).max(0.0), lip * (x - y).norm())
        .detail("l2", l2)
        .detail("stderr", se))
}

fn l2_from_squares(acc: &Running) -> (f64, f64) {
    let est = acc.estimate();
    let l2 = est.value.max(0.0).sqrt();
    let se = if l2 > 0.0 { est.stderr / (2.0 * l2) } else { est.stderr.sqrt() };
    (l2, se)
}

/// `||f - P_t f||_{L^2}` for `t = eps^2 / s^2` against `eps` (lhs reduced by
/// one standard error) and against `sqrt(2 eps)`, which is what
/// `E|f - P_t f| <= s sqrt(t)` and `|f| <= 1` give.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzApproxReport {
    pub l2: f64,
    pub stderr: f64,
    pub t: f64,
    pub eps_bound: CheckReport,
    pub bounded_bound: CheckReport,
}

pub fn approx_by_lipschitz_check(f: &FunctionSpec, s: f64, eps: f64, n_samples: u64, seed: u64) -> Result<LipschitzApproxReport> {
    if !(s > 0.0 && eps > 0.0) {
        return Err(JuntaError::param("eps", "s and eps must be positive"));
    }
    let t = eps * eps / (s * s);
    let n = f.dim();
    let mut r = rng::stream(seed, &[tag("approx_by_lipschitz")]);
    let mut acc = Running::default();
    for _ in 0..n_samples {
        let x = rng::gaussian_vector(n, &mut r);
        let d = f.eval(x.as_slice()) - f.pt(t, x.as_slice())?;
        acc.push(d * d);
    }
    let (l2, se) = l2_from_squares(&acc);
    Ok(LipschitzApproxReport {
        l2,
        stderr: se,
        t,
        eps_bound: CheckReport::new("approx_by_lipschitz", (l2 - se).max(0.0), eps),
        bounded_bound: CheckReport::new("approx_by_lipschitz_bounded", (l2 - 3.0 * se).max(0.0), (2.0 * eps).sqrt()),
    })
}

/// Run the smoothness check on a net member.
pub fn member_smoothness(f: &NetFunction, s: f64, t_grid: &[f64], n_samples: u64, seed: u64) -> Result<SmoothnessReport> {
    smoothing::smoothness_check(&f.to_oracle(), s, t_grid, n_samples, 1, seed)
}

/// Monte-Carlo `L^1` and `L^2` distances between two functions on `R^k`.
pub fn distance_mc(f: impl Fn(&[f64]) -> f64, g: impl Fn(&[f64]) -> f64, k: usize, n_samples: u64, seed: u64) -> (f64, f64) {
    let mut r = rng::stream(seed, &[tag("distance_mc")]);
    let (mut l1, mut l2) = (0.0, 0.0);
    for _ in 0..n_samples {
        let x = rng::gaussian_vector(k, &mut r);
        let d = f(x.as_slice()) - g(x.as_slice());
        l1 += d.abs();
        l2 += d * d;
    }
    (l1 / n_samples as f64, (l2 / n_samples as f64).sqrt())
}
