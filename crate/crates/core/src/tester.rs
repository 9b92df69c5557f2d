//! Correlation search over a class of linear juntas, the tolerant tester built
//! on it, and list decoding of all near-optimal juntas.
//!
//! Pipeline: smooth the target at noise time `kappa^2 / s^2` with
//! `kappa = eps / 4`, run the implicit projection, build a net of `Ind_{R^m}` of
//! the averaged class at radius `eps / 4`, draw `T` Gaussian points, map them to
//! implicit coordinates and take the best empirical correlation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::gaussian::{McEstimate, Running};
use crate::nets::{averaged_class, junta_net, ClassSpec, JuntaNet, NetCaps, NetFunction};
use crate::oracle::QueryOracle;
use crate::projection::{implicit_projection, CoordinateMap, GradientMode, PracticalParams, ProjectionOutput};
use crate::rng::{self, hash_labels, tag};
use crate::smoothing::pt_eval;
use crate::{JuntaError, Result};

fn default_fsm_delta() -> f64 {
    0.05
}

fn default_t_constant() -> f64 {
    2.0
}

/// Everything the correlation search needs besides the target and the class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchParams {
    pub projection: PracticalParams,
    pub mode: GradientMode,
    #[serde(default)]
    pub caps: NetCaps,
    /// Accuracy of each smoothed evaluation; the effective value is
    /// `min(eps / 10, fsm_accuracy)`.
    #[serde(default)]
    pub fsm_accuracy: Option<f64>,
    #[serde(default = "default_fsm_delta")]
    pub fsm_delta: f64,
    /// `T = ceil(C eps^-2 ln(2 / zeta))`.
    #[serde(default = "default_t_constant")]
    pub t_constant: f64,
}

impl SearchParams {
    pub fn new(projection: PracticalParams, mode: GradientMode) -> Self {
        Self {
            projection,
            mode,
            caps: NetCaps::default(),
            fsm_accuracy: None,
            fsm_delta: default_fsm_delta(),
            t_constant: default_t_constant(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElementEstimate {
    pub estimate: f64,
    pub stderr: f64,
}

/// Error sources the final estimate carries besides sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToleranceLedger {
    /// Per-element sampling accuracy at confidence `1 - zeta`.
    pub sampling: f64,
    /// Accuracy of each smoothed evaluation.
    pub smoothing_eval: f64,
    /// Declared bound on the implicit-coordinate error.
    pub coordinates: f64,
    /// Net radius in the class metric.
    pub net: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryLedger {
    pub projection: u64,
    pub coordinates: u64,
    pub smoothing: u64,
    pub total: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub rho_hat: f64,
    /// Element attaining `rho_hat` (lowest index on ties).
    pub best_element: Option<usize>,
    pub estimates: Vec<ElementEstimate>,
    pub t_samples: u64,
    pub zeta: f64,
    pub eps: f64,
    pub kappa: f64,
    pub t_smooth: f64,
    /// Retained implicit rank.
    pub m: usize,
    pub net_size: u64,
    pub net_log: Vec<String>,
    pub tolerance: ToleranceLedger,
    pub queries: QueryLedger,
}

/// The report together with the objects it was computed from.
#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub report: CorrelationReport,
    pub net: JuntaNet,
    pub coordinates: CoordinateMap,
    pub projection: ProjectionOutput,
}

fn validate_eps(eps: f64, s: f64) -> Result<()> {
    if !(eps > 0.0 && eps <= 2.0) {
        return Err(JuntaError::param("eps", "must lie in (0, 2]"));
    }
    if !(s > 0.0) {
        return Err(JuntaError::param("s", "smoothness must be positive"));
    }
    Ok(())
}

/// `T = ceil(C eps^-2 ln(2 / zeta))` with `zeta = 1 / (10 |net|)`.
pub fn sample_count(eps: f64, net_size: usize, c: f64) -> (u64, f64) {
    let zeta = 1.0 / (10.0 * net_size.max(1) as f64);
    ((c / (eps * eps) * (2.0 / zeta).ln()).ceil() as u64, zeta)
}

/// Full correlation search.
pub fn correlation_search(
    f: &QueryOracle,
    s: f64,
    eps: f64,
    cls: &ClassSpec,
    params: &SearchParams,
    seed: u64,
) -> Result<SearchOutcome> {
    validate_eps(eps, s)?;
    cls.validate()?;
    if !(params.fsm_delta > 0.0 && params.fsm_delta < 1.0) || !(params.t_constant > 0.0) {
        return Err(JuntaError::param("fsm_delta", "need fsm_delta in (0, 1) and a positive T constant"));
    }
    let start = f.queries();
    let kappa = eps / 4.0;
    let t_smooth = kappa * kappa / (s * s);

    let mut pp = params.projection.clone();
    pp.seed = hash_labels(&[seed, tag("projection"), params.projection.seed]);
    let projection = implicit_projection(f, &pp, params.mode)?;
    let q_proj = f.queries() - start;

    let coordinates = match params.mode {
        GradientMode::Analytic => CoordinateMap::analytic(&projection)?,
        GradientMode::Estimated => CoordinateMap::estimated(
            &projection,
            f,
            pp.sketch_accuracy,
            pp.sketch_delta,
            hash_labels(&[seed, tag("coordinates")]),
        )?,
    };
    let q_coord = f.queries() - start - q_proj;

    let mut caps = params.caps.clone();
    caps.seed = hash_labels(&[seed, tag("net"), params.caps.seed]);
    let cls_star = averaged_class(cls, &caps)?;
    let net = junta_net(projection.m(), eps / 4.0, &cls_star, &caps)?;
    if net.is_empty() {
        return Err(JuntaError::Size {
            what: "junta net",
            cardinality: 0.0,
            cap: caps.max_elements,
        });
    }
    let (t_samples, zeta) = sample_count(eps, net.len(), params.t_constant);
    let accuracy = params.fsm_accuracy.map_or(eps / 10.0, |a| a.min(eps / 10.0));

    let n = f.dim();
    let mut r = rng::stream(seed, &[tag("search_points")]);
    let mut coords: Vec<DVector<f64>> = Vec::with_capacity(t_samples as usize);
    let mut fsm: Vec<f64> = Vec::with_capacity(t_samples as usize);
    for j in 0..t_samples {
        let z = rng::gaussian_vector(n, &mut r);
        let v = pt_eval(
            f,
            t_smooth,
            z.as_slice(),
            accuracy,
            params.fsm_delta,
            hash_labels(&[seed, tag("fsm"), j]),
        );
        match v {
            Ok(v) => {
                coords.push(coordinates.coords(z.as_slice()));
                fsm.push(v.value);
            }
            Err(e) => {
                let partial = best_of(&net, &coords, &fsm).map(|(_, est)| est.estimate);
                return Err(match partial {
                    Some(p) => e.with_partial(p),
                    None => e,
                });
            }
        }
    }
    let q_smooth = f.queries() - start - q_proj - q_coord;
    let estimates = element_estimates(&net, &coords, &fsm);
    let best = argmax(&estimates);
    let report = CorrelationReport {
        rho_hat: best.map_or(f64::NEG_INFINITY, |i| estimates[i].estimate),
        best_element: best,
        estimates,
        t_samples,
        zeta,
        eps,
        kappa,
        t_smooth,
        m: projection.m(),
        net_size: net.len() as u64,
        net_log: net.log.clone(),
        tolerance: ToleranceLedger {
            sampling: eps,
            smoothing_eval: accuracy,
            coordinates: coordinates.error_bound,
            net: eps / 4.0,
        },
        queries: QueryLedger {
            projection: q_proj,
            coordinates: q_coord,
            smoothing: q_smooth,
            total: f.queries() - start,
        },
    };
    Ok(SearchOutcome {
        report,
        net,
        coordinates,
        projection,
    })
}

pub fn correlation_estimate(
    f: &QueryOracle,
    s: f64,
    eps: f64,
    cls: &ClassSpec,
    params: &SearchParams,
    seed: u64,
) -> Result<CorrelationReport> {
    correlation_search(f, s, eps, cls, params, seed).map(|o| o.report)
}

fn argmax(est: &[ElementEstimate]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, e) in est.iter().enumerate() {
        if best.map_or(true, |b| e.estimate > est[b].estimate) {
            best = Some(i);
        }
    }
    best
}

fn best_of(net: &JuntaNet, coords: &[DVector<f64>], fsm: &[f64]) -> Option<(usize, ElementEstimate)> {
    if coords.len() < 2 {
        return None;
    }
    let est = element_estimates(net, coords, fsm);
    argmax(&est).map(|i| (i, est[i]))
}

/// Empirical `(1/T) sum_j h(y_j) fsm_j` for every element.
pub fn element_estimates(net: &JuntaNet, coords: &[DVector<f64>], fsm: &[f64]) -> Vec<ElementEstimate> {
    let t = coords.len();
    // Project once per frame.
    let projected: Vec<Vec<f64>> = net
        .frames
        .iter()
        .map(|fr| {
            let k = fr.ncols();
            let mut out = Vec::with_capacity(t * k);
            for y in coords {
                out.extend((fr.transpose() * y).iter());
            }
            out
        })
        .collect();
    net.elements
        .iter()
        .map(|&(fi, fr)| {
            let g = &net.functions[fi as usize];
            let p = &projected[fr as usize];
            let k = net.frames[fr as usize].ncols();
            let mut acc = Running::default();
            for j in 0..t {
                let arg = if k == 0 { &[][..] } else { &p[j * k..(j + 1) * k] };
                acc.push(g.eval(arg) * fsm[j]);
            }
            let e = acc.estimate();
            ElementEstimate {
                estimate: e.value,
                stderr: e.stderr,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accept,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestVerdict {
    pub verdict: Verdict,
    pub rho_hat: f64,
    /// `1 - (c_l + c_u)`: midpoint of the correlations `1 - 2 c_l` and `1 - 2 c_u`.
    pub threshold: f64,
    /// Correlation-units gap `c_u - c_l`, also the search accuracy.
    pub eps: f64,
    pub queries: u64,
    pub report: CorrelationReport,
}

/// Accept when the distance to `Ind(cls)` is at most `c_l`, reject when it is at
/// least `c_u`. For `+-1`-valued functions `E[fg] = 1 - 2 Pr[f != g]`.
#[allow(clippy::too_many_arguments)]
pub fn robust_test(
    f: &QueryOracle,
    s: f64,
    c_l: f64,
    c_u: f64,
    cls: &ClassSpec,
    params: &SearchParams,
    seed: u64,
) -> Result<TestVerdict> {
    if !(c_l >= 0.0 && c_l < c_u && c_u < 0.5) {
        return Err(JuntaError::param("c_u", "need 0 <= c_l < c_u < 1/2"));
    }
    let eps = c_u - c_l;
    let report = correlation_estimate(f, s, eps, cls, params, seed)?;
    let threshold = 1.0 - (c_l + c_u);
    Ok(TestVerdict {
        verdict: verdict_for(report.rho_hat, threshold),
        rho_hat: report.rho_hat,
        threshold,
        eps,
        queries: report.queries.total,
        report,
    })
}

pub fn verdict_for(rho_hat: f64, threshold: f64) -> Verdict {
    if rho_hat >= threshold {
        Verdict::Accept
    } else {
        Verdict::Reject
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureMember {
    pub element: usize,
    pub function: NetFunction,
    /// `k x n` rows of the implicit directions the function reads:
    /// `frame^T (W B^T)`, estimated when gradients are.
    pub handle: DMatrix<f64>,
    pub estimate: f64,
    pub stderr: f64,
}

impl StructureMember {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let p = &self.handle * DVector::from_column_slice(x);
        self.function.eval(p.as_slice())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantStructureSet {
    pub members: Vec<StructureMember>,
    pub rho: f64,
    pub eps: f64,
    /// Recorded estimates are at least `rho - 4 eps`.
    pub threshold: f64,
    /// Each member should have true correlation at least `rho - 5 eps`.
    pub soundness_target: f64,
    pub rho_hat: f64,
    pub queries: u64,
}

/// Every net element whose estimate is at least `rho - 4 eps`.
#[allow(clippy::too_many_arguments)]
pub fn learn_all(
    f: &QueryOracle,
    s: f64,
    rho: f64,
    eps: f64,
    cls: &ClassSpec,
    params: &SearchParams,
    seed: u64,
) -> Result<InvariantStructureSet> {
    if !rho.is_finite() {
        return Err(JuntaError::param("rho", "must be finite"));
    }
    let out = correlation_search(f, s, eps, cls, params, seed)?;
    let threshold = rho - 4.0 * eps;
    let members = out
        .report
        .estimates
        .iter()
        .enumerate()
        .filter(|(_, e)| e.estimate >= threshold)
        .map(|(i, e)| StructureMember {
            element: i,
            function: out.net.function(i).clone(),
            handle: out.net.frame(i).transpose() * &out.coordinates.matrix,
            estimate: e.estimate,
            stderr: e.stderr,
        })
        .collect();
    Ok(InvariantStructureSet {
        members,
        rho,
        eps,
        threshold,
        soundness_target: rho - 5.0 * eps,
        rho_hat: out.report.rho_hat,
        queries: out.report.queries.total,
    })
}

/// Monte-Carlo `E[f(x) h(x)]` for a returned member.
pub fn member_correlation(f: &QueryOracle, member: &StructureMember, n_samples: u64, seed: u64) -> Result<McEstimate> {
    let n = f.dim();
    let mut r = rng::stream(seed, &[tag("member_correlation")]);
    let mut acc = Running::default();
    for _ in 0..n_samples {
        let x = rng::gaussian_vector(n, &mut r);
        acc.push(f.query(x.as_slice())? * member.eval(x.as_slice()));
    }
    Ok(acc.estimate())
}
