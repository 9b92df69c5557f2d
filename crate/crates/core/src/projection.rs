//! Gradient-based PCA with implicit coordinates.
//!
//! Sample `x_1..x_M`, estimate the Gram matrix of smoothed gradients
//! `A_ij = <grad P_t f(x_i), grad P_t f(x_j)>`, project it to the PSD cone,
//! and keep `W = D^{-1} V^T` over eigenvalues `d^2 >= eta/4`. The rows of
//! `W B^T` (with `B` the unknown `n x M` gradient matrix) then act as an
//! approximately orthonormal coordinate system for the informative subspace.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::averaging::mix_point;
use crate::gaussian::{self, McEstimate, Running};
use crate::linalg::{self, checks, checks::CheckReport, nearest_subspace_inside, op_norm, Subspace};
use crate::oracle::{FunctionSpec, QueryOracle};
use crate::rng::{self, hash_labels, tag};
use crate::smoothing::{self, grad_inner_product};
use crate::{JuntaError, Result};

/// Above this `M` the theory parameters are reported as infeasible.
pub const FEASIBLE_M: u64 = 100_000;

/// Parameters computed verbatim from the theoretical recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryParams {
    pub delta: f64,
    pub m: u64,
    pub eta: f64,
    pub eps_prime: f64,
    pub c0: f64,
    pub l: f64,
    pub nu: f64,
    pub k: usize,
    /// `false` when `M` is too large to run.
    pub feasible: bool,
}

pub fn theory_params(l: f64, nu: f64, k: usize) -> Result<TheoryParams> {
    if !(l > 0.0 && nu > 0.0) || k == 0 {
        return Err(JuntaError::param("L", "L, nu and k must be positive"));
    }
    let delta = 1.0 / 20.0;
    let c0 = 1e6;
    let eta = nu * nu / (100.0 * k as f64);
    let m_real = (l * l / (eta * eta)) * (l * delta / eta).ln();
    let m_real = m_real.max(1.0).ceil();
    let m = if m_real >= u64::MAX as f64 { u64::MAX } else { m_real as u64 };
    let eps_prime = eta.powi(5) * nu * nu / (l.powi(8) * c0 * c0 * m_real.powi(6));
    Ok(TheoryParams {
        delta,
        m,
        eta,
        eps_prime,
        c0,
        l,
        nu,
        k,
        feasible: m <= FEASIBLE_M,
    })
}

fn default_confidence() -> f64 {
    0.05
}

fn default_sketch_accuracy() -> f64 {
    0.1
}

fn default_sketch_delta() -> f64 {
    0.1
}

/// Desk-scale parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PracticalParams {
    /// Number of sample points.
    pub m: usize,
    pub eta: f64,
    /// Accuracy of each Gram entry.
    pub eps_prime: f64,
    /// Noise time of the smoothed gradients.
    pub t: f64,
    #[serde(default)]
    pub seed: u64,
    /// Overall confidence; each Gram entry uses `delta / M^2`.
    #[serde(default = "default_confidence")]
    pub delta: f64,
    /// Target accuracy `theta` of each implicit coordinate entry.
    #[serde(default = "default_sketch_accuracy")]
    pub sketch_accuracy: f64,
    #[serde(default = "default_sketch_delta")]
    pub sketch_delta: f64,
}

impl PracticalParams {
    pub fn new(m: usize, eta: f64, eps_prime: f64, t: f64) -> Self {
        Self {
            m,
            eta,
            eps_prime,
            t,
            seed: 0,
            delta: default_confidence(),
            sketch_accuracy: default_sketch_accuracy(),
            sketch_delta: default_sketch_delta(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(JuntaError::param("M", "need at least one sample point"));
        }
        if !(self.eta > 0.0) {
            return Err(JuntaError::param("eta", "must be positive"));
        }
        if !(self.eps_prime >= 0.0) {
            return Err(JuntaError::param("eps_prime", "must be nonnegative"));
        }
        if !(self.t > 0.0) {
            return Err(JuntaError::param("t", "must be positive"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(JuntaError::param("delta", "must lie in (0, 1)"));
        }
        if !(self.sketch_accuracy > 0.0 && self.sketch_delta > 0.0 && self.sketch_delta < 1.0) {
            return Err(JuntaError::param("sketch_accuracy", "sketch parameters must be positive"));
        }
        Ok(())
    }

    /// Confidence used for every Gram entry.
    pub fn entry_delta(&self) -> f64 {
        self.delta / (self.m * self.m) as f64
    }
}

impl TheoryParams {
    /// Run the theory recipe; fails when `M` is not enumerable.
    pub fn to_practical(&self, t: f64) -> Result<PracticalParams> {
        if !self.feasible {
            return Err(JuntaError::Size {
                what: "theory sample count M",
                cardinality: self.m as f64,
                cap: FEASIBLE_M,
            });
        }
        let mut p = PracticalParams::new(self.m as usize, self.eta, self.eps_prime, t);
        p.delta = self.delta;
        Ok(p)
    }
}

/// How Gram entries are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    /// Query-based estimates of the gradient inner products.
    Estimated,
    /// Closed-form smoothed gradients of a built-in target.
    Analytic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionOutput {
    pub mode: GradientMode,
    pub t: f64,
    pub eta: f64,
    pub eps_prime: f64,
    /// Sample points as rows (`M x n`).
    pub points: DMatrix<f64>,
    /// Raw Gram estimate before the PSD projection.
    pub gram_raw: DMatrix<f64>,
    /// `N_hat`, the PSD projection of the raw estimate.
    pub gram_estimate: DMatrix<f64>,
    /// Eigenvalues of `N_hat`, descending.
    pub eigenvalues: Vec<f64>,
    /// `m x M` implicit-coordinate matrix.
    pub w_hat: DMatrix<f64>,
    pub queries_used: u64,
    /// Analytic gradients as columns (`n x M`), when the target has them.
    pub gradients: Option<DMatrix<f64>>,
    /// `(4/eta) ||N_hat - B^T B||_F`, when `B` is known.
    pub defect_bound: Option<f64>,
}

impl ProjectionOutput {
    /// Retained rank.
    pub fn m(&self) -> usize {
        self.w_hat.nrows()
    }

    pub fn num_points(&self) -> usize {
        self.points.nrows()
    }

    pub fn ambient_dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        self.points.row(i).iter().copied().collect()
    }

    pub fn w_norm(&self) -> f64 {
        op_norm(&self.w_hat)
    }
}

/// Rows `v_i^T / sqrt(lambda_i)` over eigenpairs of `n_hat` with `lambda_i >= eta/4`.
pub fn implicit_whitening(n_hat: &DMatrix<f64>, eta: f64) -> Result<DMatrix<f64>> {
    if !(eta > 0.0) {
        return Err(JuntaError::param("eta", "must be positive"));
    }
    let spec = linalg::sym_eigen(n_hat)?;
    let keep: Vec<usize> = (0..spec.dim())
        .filter(|&i| spec.eigenvalues[i] >= eta / 4.0 - linalg::THRESHOLD_TIE_TOL && spec.eigenvalues[i] > 0.0)
        .collect();
    let m = n_hat.nrows();
    let mut w = DMatrix::zeros(keep.len(), m);
    for (r, &i) in keep.iter().enumerate() {
        let s = spec.eigenvalues[i].sqrt();
        for j in 0..m {
            w[(r, j)] = spec.eigenvectors[(j, i)] / s;
        }
    }
    Ok(w)
}

fn sample_points(n: usize, m: usize, seed: u64) -> DMatrix<f64> {
    let mut r = rng::stream(seed, &[tag("projection_points")]);
    let mut pts = DMatrix::zeros(m, n);
    for i in 0..m {
        let x = rng::gaussian_vector(n, &mut r);
        pts.set_row(i, &x.transpose());
    }
    pts
}

/// Closed-form gradients `grad P_t f(x_j)` as columns.
pub fn analytic_gradients(spec: &FunctionSpec, t: f64, points: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = points.ncols();
    let mut b = DMatrix::zeros(n, points.nrows());
    for j in 0..points.nrows() {
        let x: Vec<f64> = points.row(j).iter().copied().collect();
        b.set_column(j, &spec.grad_pt(t, &x)?);
    }
    Ok(b)
}

/// Run the implicit projection.
pub fn implicit_projection(
    f: &QueryOracle,
    params: &PracticalParams,
    mode: GradientMode,
) -> Result<ProjectionOutput> {
    params.validate()?;
    let n = f.dim();
    let m = params.m;
    let points = sample_points(n, m, params.seed);
    let gradients = match f.spec() {
        Some(spec) if f.corruption().is_none() => analytic_gradients(spec, params.t, &points).ok(),
        _ => None,
    };
    let start = f.queries();
    let gram_raw = match mode {
        GradientMode::Analytic => {
            let b = gradients.as_ref().ok_or_else(|| {
                JuntaError::Capability("analytic mode needs an uncorrupted built-in target".into())
            })?;
            b.transpose() * b
        }
        GradientMode::Estimated => {
            let mut a = DMatrix::zeros(m, m);
            let entry_delta = params.entry_delta();
            for i in 0..m {
                let xi = points.row(i).iter().copied().collect::<Vec<_>>();
                for j in i..m {
                    let xj = points.row(j).iter().copied().collect::<Vec<_>>();
                    let seed = hash_labels(&[params.seed, tag("gram"), i as u64, j as u64]);
                    let est = grad_inner_product(f, params.t, &xi, &xj, params.eps_prime, entry_delta, seed)?;
                    a[(i, j)] = est.value;
                    a[(j, i)] = est.value;
                }
            }
            a
        }
    };
    let queries_used = f.queries() - start;
    let gram_estimate = linalg::nearest_psd(&gram_raw)?;
    let eigenvalues = linalg::sym_eigen(&gram_estimate)?.eigenvalues.iter().copied().collect();
    let w_hat = implicit_whitening(&gram_estimate, params.eta)?;
    let defect_bound = gradients
        .as_ref()
        .map(|b| 4.0 / params.eta * (&gram_estimate - b.transpose() * b).norm());
    Ok(ProjectionOutput {
        mode,
        t: params.t,
        eta: params.eta,
        eps_prime: params.eps_prime,
        points,
        gram_raw,
        gram_estimate,
        eigenvalues,
        w_hat,
        queries_used,
        gradients,
        defect_bound,
    })
}

/// Linear map `z -> W Xi(z)` from ambient points to implicit coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinateMap {
    /// `m x n` matrix `W G`, with `G` the `M x n` matrix of (estimated or exact) gradients.
    pub matrix: DMatrix<f64>,
    /// Target accuracy `theta` of each entry of `Xi`; 0 for exact gradients.
    pub theta: f64,
    /// Declared bound `2 theta sqrt(M) ||W||_2` on the coordinate error.
    pub error_bound: f64,
    pub queries_used: u64,
}

impl CoordinateMap {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn coords(&self, z: &[f64]) -> DVector<f64> {
        &self.matrix * DVector::from_column_slice(z)
    }

    /// Exact map `W B^T` from analytic gradients.
    pub fn analytic(out: &ProjectionOutput) -> Result<Self> {
        let b = out.gradients.as_ref().ok_or_else(|| {
            JuntaError::Capability("exact coordinates need analytic gradients".into())
        })?;
        Ok(Self {
            matrix: &out.w_hat * b.transpose(),
            theta: 0.0,
            error_bound: 0.0,
            queries_used: 0,
        })
    }

    /// Map built from one gradient sketch per sample point. Each entry of `Xi`
    /// has error at most `2 theta` except with probability about 1/16 per entry.
    pub fn estimated(out: &ProjectionOutput, f: &QueryOracle, theta: f64, delta: f64, seed: u64) -> Result<Self> {
        let n = out.ambient_dim();
        let mm = out.num_points();
        if out.m() == 0 {
            return Ok(Self {
                matrix: DMatrix::zeros(0, n),
                theta,
                error_bound: 0.0,
                queries_used: 0,
            });
        }
        let pairs = smoothing::sketch_pairs(out.t, n, theta, delta)?;
        let start = f.queries();
        let mut g = DMatrix::zeros(mm, n);
        for i in 0..mm {
            let s = hash_labels(&[seed, tag("coordinate_sketch"), i as u64]);
            let sk = smoothing::gradient_sketch(f, out.t, &out.point(i), pairs, s)?;
            g.set_row(i, &sk.gradient.transpose());
        }
        Ok(Self {
            matrix: &out.w_hat * g,
            theta,
            error_bound: 2.0 * theta * (mm as f64).sqrt() * out.w_norm(),
            queries_used: f.queries() - start,
        })
    }
}

/// `W Xi` for a single point.
pub fn implicit_coords(
    out: &ProjectionOutput,
    f: &QueryOracle,
    z: &[f64],
    theta: f64,
    delta: f64,
    seed: u64,
) -> Result<(DVector<f64>, f64)> {
    let map = CoordinateMap::estimated(out, f, theta, delta, seed)?;
    Ok((map.coords(z), map.error_bound))
}

/// Almost-isometry inequality for a run with known gradients `b`.
pub fn isometry_defect(out: &ProjectionOutput, b: &DMatrix<f64>) -> Result<CheckReport> {
    if b.ncols() != out.num_points() {
        return Err(JuntaError::Dimension {
            expected: out.num_points(),
            got: b.ncols(),
        });
    }
    checks::check_almost_isometry(&out.w_hat, b, &out.gram_estimate, out.eta)
}

/// Principal angle (radians) between the row space of `W B^T` and `target`;
/// `pi/2` when the retained rank is 0.
pub fn recovery_angle(out: &ProjectionOutput, target: &Subspace<f64>) -> Result<f64> {
    let b = out
        .gradients
        .as_ref()
        .ok_or_else(|| JuntaError::Capability("needs analytic gradients".into()))?;
    if out.m() == 0 {
        return Ok(std::f64::consts::FRAC_PI_2);
    }
    let rows = &out.w_hat * b.transpose();
    let ehat = Subspace::row_span(&rows, 1e-10)?;
    let ang = linalg::principal_angles(target, &ehat)?;
    Ok(ang.last().copied().unwrap_or(std::f64::consts::FRAC_PI_2))
}

/// Which subspace `E ⊇ E_{eta/2}(A)` the truncation check uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubspaceChoice {
    /// Exactly the eigenspace with eigenvalues `>= eta/2`.
    Minimal,
    /// The eigenspace plus this many random extra directions.
    Padded(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationReport {
    pub difference: McEstimate,
    pub bound: f64,
    pub subspace_dim: usize,
    pub pass: bool,
}

/// `|E[Phi A_E h] - E[Phi h]| <= sqrt(k eta)` for
/// `A = (1/M) sum grad Phi(x_j) grad Phi(x_j)^T` and `E ⊇ E_{eta/2}(A)`.
///
/// `phi` must be a smooth built-in function; `h` any built-in `k`-junta. The
/// averaged side uses the closed form when `h` is a halfspace and a single
/// inner draw otherwise. Passes when `|estimate| - 3 stderr <= sqrt(k eta)`.
#[allow(clippy::too_many_arguments)]
pub fn truncation_preserves_correlation_check(
    phi: &FunctionSpec,
    k: usize,
    eta: f64,
    m: usize,
    h: &FunctionSpec,
    choice: SubspaceChoice,
    n_samples: u64,
    seed: u64,
) -> Result<TruncationReport> {
    let n = phi.dim();
    if h.dim() != n {
        return Err(JuntaError::Dimension { expected: n, got: h.dim() });
    }
    if !(eta > 0.0) || m == 0 {
        return Err(JuntaError::param("eta", "eta and M must be positive"));
    }
    let points = sample_points(n, m, hash_labels(&[seed, tag("truncation_points")]));
    let b = analytic_gradients(phi, 0.0, &points)?;
    let a = &b * b.transpose() / m as f64;
    let mut basis = linalg::eigenspace(&a, eta / 2.0, f64::INFINITY)?.basis().clone();
    if let SubspaceChoice::Padded(extra) = choice {
        let mut r = rng::stream(seed, &[tag("truncation_padding")]);
        let mut cols: Vec<DVector<f64>> = basis.column_iter().map(|c| c.into_owned()).collect();
        for _ in 0..extra {
            cols.push(rng::gaussian_vector(n, &mut r));
        }
        basis = if cols.is_empty() {
            DMatrix::zeros(n, 0)
        } else {
            DMatrix::from_columns(&cols)
        };
    }
    let e = Subspace::span(&basis, 1e-10)?;
    let mut r = rng::stream(seed, &[tag("truncation_mc")]);
    let mut acc = Running::default();
    let closed = matches!(h, FunctionSpec::Halfspace { .. });
    for _ in 0..n_samples {
        let x = rng::gaussian_vector(n, &mut r);
        let avg = if closed {
            h.average(&e, x.as_slice())?
        } else {
            let z = rng::gaussian_vector(n, &mut r);
            h.eval(mix_point(&e, &x, &z).as_slice())
        };
        acc.push(phi.eval(x.as_slice()) * (avg - h.eval(x.as_slice())));
    }
    let difference = acc.estimate();
    let bound = (k as f64 * eta).sqrt();
    Ok(TruncationReport {
        difference,
        bound,
        subspace_dim: e.dim(),
        pass: difference.value.abs() - 3.0 * difference.stderr <= bound,
    })
}

/// Subspace and correlation parts of the good-subspace argument for a run with
/// known gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoodSubspaceReport {
    /// `||Pi_E Pi_{Ehat^perp}||` against
    /// `20 ||N||_F ||N|| sqrt(||N_hat - N||) / eta^{5/2} + (4/eta) ||N_hat - N||_F`.
    pub geometry: CheckReport,
    /// `|E[f_sm A_Etilde h] - E[f_sm h]|` (minus 3 stderr) against the additive reading
    /// `sqrt(k eta) + 80 L^4 M^{5/2} sqrt(||N_hat - N||) / eta^{5/2} + (16 L / eta) ||N_hat - N||_F`.
    pub correlation: Option<CheckReport>,
}

/// `E = E_{>= eta/2}(B B^T)`, `Ehat` = row space of `W B^T`. The correlation
/// side needs `||Pi_E Pi_{Ehat^perp}|| < 1` and a halfspace `h`.
#[allow(clippy::too_many_arguments)]
pub fn good_subspace_check(
    out: &ProjectionOutput,
    target: &FunctionSpec,
    h: &FunctionSpec,
    l: f64,
    k: usize,
    n_samples: u64,
    seed: u64,
) -> Result<GoodSubspaceReport> {
    let b = out
        .gradients
        .as_ref()
        .ok_or_else(|| JuntaError::Capability("needs analytic gradients".into()))?;
    let eta = out.eta;
    let nmat = b.transpose() * b;
    let diff = &out.gram_estimate - &nmat;
    let e = linalg::eigenspace(&(b * b.transpose()), eta / 2.0, f64::INFINITY)?;
    let rows = &out.w_hat * b.transpose();
    let ehat = if out.m() == 0 {
        Subspace::trivial(out.ambient_dim())
    } else {
        Subspace::row_span(&rows, 1e-10)?
    };
    let excess = e.excess_op(&ehat);
    let geo_rhs = 20.0 / eta.powf(2.5) * nmat.norm() * op_norm(&nmat) * op_norm(&diff).sqrt()
        + 4.0 / eta * diff.norm();
    let geometry = CheckReport::new("good_subspace_geometry", excess, geo_rhs);
    let correlation = if excess < 1.0 - 1e-9 {
        let fit = nearest_subspace_inside(&e, &ehat)?;
        let n = out.ambient_dim();
        let mut r = rng::stream(seed, &[tag("good_subspace_mc")]);
        let mut acc = Running::default();
        for _ in 0..n_samples {
            let x = rng::gaussian_vector(n, &mut r);
            let fsm = target.pt(out.t, x.as_slice())?;
            acc.push(fsm * (h.average(&fit.subspace, x.as_slice())? - h.eval(x.as_slice())));
        }
        let est = acc.estimate();
        let mm = out.num_points() as f64;
        let rhs = (k as f64 * eta).sqrt()
            + 80.0 * l.powi(4) * mm.powf(2.5) / eta.powf(2.5) * op_norm(&diff).sqrt()
            + 16.0 * l / eta * diff.norm();
        Some(
            CheckReport::new(
                "good_subspace_correlation",
                (est.value.abs() - 3.0 * est.stderr).max(0.0),
                rhs,
            )
            .detail("estimate", est.value)
            .detail("stderr", est.stderr),
        )
    } else {
        None
    };
    Ok(GoodSubspaceReport {
        geometry,
        correlation,
    })
}

/// Exact `E[grad Phi grad Phi^T]` by tensor Gauss–Hermite over the span of the
/// relevant directions (at most 3 of them).
pub fn true_gradient_covariance(spec: &FunctionSpec, t: f64, order: usize) -> Result<DMatrix<f64>> {
    let n = spec.dim();
    let dirs = spec.relevant_directions();
    let q = Subspace::span(&dirs, 1e-12)?;
    let k = q.dim();
    if k > 3 {
        return Err(JuntaError::Capability("quadrature covariance needs k <= 3".into()));
    }
    let rule = gaussian::gauss_hermite(order);
    let mut cov = DMatrix::zeros(n, n);
    for (y, w) in gaussian::tensor_points(&rule, k, 2_000_000)? {
        let x = q.basis() * DVector::from_vec(y);
        let g = spec.grad_pt(t, x.as_slice())?;
        cov += w * &g * g.transpose();
    }
    Ok(cov)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub sample_sizes: Vec<usize>,
    /// Mean operator-norm error at each sample size.
    pub errors: Vec<f64>,
    pub slope: f64,
    pub pass: bool,
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// `||(1/M) sum Z_j Z_j^T - E[Z Z^T]||_2` for `Z = grad P_t f(x)`, averaged over
/// `reps` draws per `M`; passes when the log-log slope is within 0.2 of -1/2.
pub fn covariance_concentration(
    spec: &FunctionSpec,
    t: f64,
    sample_sizes: &[usize],
    reps: usize,
    seed: u64,
) -> Result<ConcentrationReport> {
    let truth = true_gradient_covariance(spec, t, 60)?;
    let n = spec.dim();
    let mut errors = Vec::with_capacity(sample_sizes.len());
    for (si, &m) in sample_sizes.iter().enumerate() {
        let mut total = 0.0;
        for rep in 0..reps {
            let mut r = rng::stream(seed, &[tag("covariance"), si as u64, rep as u64]);
            let mut cov = DMatrix::zeros(n, n);
            for _ in 0..m {
                let x = rng::gaussian_vector(n, &mut r);
                let g = spec.grad_pt(t, x.as_slice())?;
                cov += &g * g.transpose();
            }
            cov /= m as f64;
            total += op_norm(&(cov - &truth));
        }
        errors.push(total / reps as f64);
    }
    let xs: Vec<f64> = sample_sizes.iter().map(|&m| m as f64).collect();
    let slope = log_log_slope(&xs, &errors);
    Ok(ConcentrationReport {
        sample_sizes: sample_sizes.to_vec(),
        errors,
        slope,
        pass: (slope + 0.5).abs() <= 0.2,
    })
}
