//! The validation battery: randomized instances of every perturbation
//! inequality and Monte-Carlo identity the pipeline relies on.

use junta_core::averaging::{correlation_subspace_stability_check, self_adjoint_check, tower_check};
use junta_core::gaussian::GaussianRule;
use junta_core::hermite::{hermite_tail_mass, sign_tail_closed_form, tail_plan};
use junta_core::linalg::checks::{self, CheckReport};
use junta_core::linalg::{nearest_psd, op_norm, sym_eigen};
use junta_core::projection::{covariance_concentration, implicit_whitening, truncation_preserves_correlation_check, SubspaceChoice};
use junta_core::rng::{self, hash_labels, tag};
use junta_core::smoothing::{grad_inner_product, smoothness_check};
use junta_core::{FunctionSpec, Matrix, QueryOracle, Subspace, Vector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::config::ValidateOptions;
use crate::report::CheckOutcome;
use crate::HarnessError;

pub const SUITES: [&str; 7] = [
    "appendix-a",
    "appendix-b",
    "averaging",
    "smoothing",
    "hermite",
    "covariance",
    "truncation",
];

/// Expand a selector (`default`, a suite name, or a comma-separated list).
pub fn resolve_suites(selector: &str) -> Result<Vec<&'static str>, HarnessError> {
    let mut out = Vec::new();
    for part in selector.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if part == "default" || part == "all" {
            return Ok(SUITES.to_vec());
        }
        let s = SUITES
            .iter()
            .find(|s| **s == part)
            .ok_or_else(|| HarnessError::Usage(format!("unknown suite `{part}`; known: default, {}", SUITES.join(", "))))?;
        if !out.contains(s) {
            out.push(*s);
        }
    }
    if out.is_empty() {
        return Err(HarnessError::Usage("empty suite selector".into()));
    }
    Ok(out)
}

/// Outcomes and the number of oracle queries spent.
pub struct SuiteResult {
    pub checks: Vec<CheckOutcome>,
    pub queries: u64,
}

pub fn run_suite(suite: &str, opts: &ValidateOptions, seed: u64) -> Result<SuiteResult, HarnessError> {
    let mut q = 0u64;
    let checks = match suite {
        "appendix-a" => vec![
            linear_check(suite, "almost_isometry", opts, seed, almost_isometry_instance)?,
            linear_check(suite, "subspace_distance", opts, seed, subspace_distance_instance)?,
            linear_check(suite, "correlation_subspace_stability", opts, seed, |r, tight| {
                let (rep, used) = css_instance(r, tight, opts.mc_samples)?;
                q += used;
                Ok(vec![rep])
            })?,
            linear_check(suite, "approximate_projection", opts, seed, approximate_projection_instance)?,
            linear_check(suite, "almost_same_eigen", opts, seed, almost_same_eigen_instance)?,
        ],
        "appendix-b" => vec![
            linear_check(suite, "pseudoinverse_stability", opts, seed, pseudoinverse_instance)?,
            linear_check(suite, "davis_kahan", opts, seed, davis_kahan_instance)?,
        ],
        "averaging" => averaging(opts, seed, &mut q)?,
        "smoothing" => smoothing(opts, seed, &mut q)?,
        "hermite" => vec![hermite(opts, &mut q)?],
        "covariance" => vec![covariance(opts, seed)?],
        "truncation" => vec![truncation(opts, seed)?],
        other => return Err(HarnessError::Usage(format!("unknown suite `{other}`"))),
    };
    Ok(SuiteResult { checks, queries: q })
}

fn instance_rng(seed: u64, name: &str, i: usize) -> ChaCha8Rng {
    rng::stream(hash_labels(&[seed, tag(name), i as u64]), &[tag("instance")])
}

/// Runs `opts.instances` random instances; each yields one or more reports,
/// all of which must pass. Then `opts.control_instances` near-tight fixtures
/// (`tight = true`) must pass as stated and fail once the bound is multiplied
/// by `opts.control_factor`.
fn linear_check(
    suite: &str,
    name: &str,
    opts: &ValidateOptions,
    seed: u64,
    mut instance: impl FnMut(&mut ChaCha8Rng, bool) -> Result<Vec<CheckReport>, HarnessError>,
) -> Result<CheckOutcome, HarnessError> {
    let mut out = CheckOutcome::new(suite, name);
    for i in 0..opts.instances {
        let mut r = instance_rng(seed, name, i);
        let reps = instance(&mut r, false)?;
        let slack = reps.iter().map(|c| c.slack).fold(f64::INFINITY, f64::min);
        out.record(reps.iter().all(|c| c.pass), Some(slack));
    }
    for i in 0..opts.control_instances {
        let mut r = instance_rng(seed, &format!("{name}/control"), i);
        let reps = instance(&mut r, true)?;
        let holds = reps.iter().all(|c| c.pass);
        let caught = reps.iter().any(|c| !c.with_bound_scaled(opts.control_factor).pass);
        out.record_control(holds && caught, opts.control_factor);
    }
    Ok(out)
}

fn gaussian(rows: usize, cols: usize, r: &mut ChaCha8Rng) -> Matrix {
    let v = rng::gaussian_vector(rows * cols, r);
    Matrix::from_column_slice(rows, cols, v.as_slice())
}

fn random_symmetric(n: usize, r: &mut ChaCha8Rng) -> Matrix {
    let g = gaussian(n, n, r);
    (&g + g.transpose()) * 0.5
}

fn random_orthonormal(n: usize, k: usize, r: &mut ChaCha8Rng) -> Matrix {
    gaussian(n, k, r).qr().q().columns(0, k).into_owned()
}

fn unit(n: usize, r: &mut ChaCha8Rng) -> Vec<f64> {
    let v = rng::gaussian_vector(n, r);
    (&v / v.norm()).as_slice().to_vec()
}

fn log_uniform(lo: f64, hi: f64, r: &mut ChaCha8Rng) -> f64 {
    (r.random_range(lo.ln()..hi.ln())).exp()
}

fn almost_isometry_instance(r: &mut ChaCha8Rng, _tight: bool) -> Result<Vec<CheckReport>, HarnessError> {
    let n = r.random_range(2..=8);
    let m = r.random_range(3..=14);
    let b = gaussian(n, m, r) / (m as f64).sqrt();
    let nmat = b.transpose() * &b;
    let noise = random_symmetric(m, r) * log_uniform(1e-4, 0.1, r);
    let n_hat = nearest_psd(&(&nmat + noise))?;
    let eta = r.random_range(0.05..0.8) * op_norm(&nmat);
    let w = implicit_whitening(&n_hat, eta)?;
    Ok(vec![checks::check_almost_isometry(&w, &b, &n_hat, eta)?])
}

fn subspace_distance_instance(r: &mut ChaCha8Rng, _tight: bool) -> Result<Vec<CheckReport>, HarnessError> {
    let n = r.random_range(4..=10);
    let kp = r.random_range(2..n);
    let k = r.random_range(1..=kp);
    let ep_basis = random_orthonormal(n, kp, r);
    let inside = &ep_basis * gaussian(kp, k, r);
    let noisy = inside + gaussian(n, k, r) * log_uniform(1e-3, 0.2, r);
    let e = Subspace::span(&noisy, 1e-12)?;
    let ep = Subspace::from_orthonormal(ep_basis)?;
    Ok(vec![checks::check_subspace_distance(&e, &ep)?])
}

/// `f` a tanh junta, `g` a halfspace, `E` spanned by noisy copies of `f`'s
/// directions, `E'` a tilted copy of `E` (plus a spare direction).
///
/// Tight fixtures take `E = span(d)` exactly, `g = sign(<d, x>)` and `E'` the
/// line at angle 0.6..1.2 rad from `d`, so the two sides differ visibly.
fn css_instance(r: &mut ChaCha8Rng, tight: bool, n_samples: u64) -> Result<(CheckReport, u64), HarnessError> {
    let n = r.random_range(3..=6);
    let k = if tight { 1 } else { r.random_range(1..=2usize).min(n - 1) };
    let directions: Vec<Vec<f64>> = (0..k).map(|_| unit(n, r)).collect();
    let gains: Vec<f64> = (0..k).map(|_| r.random_range(0.5..3.0)).collect();
    let fspec = FunctionSpec::SmoothTanhJunta { directions: directions.clone(), gains };
    let c = fspec.lipschitz().expect("tanh juntas are Lipschitz");
    let f = QueryOracle::new(fspec, None)?;
    let d = Matrix::from_fn(n, k, |i, j| directions[j][i]);
    let (g, e, ep) = if tight {
        let g = QueryOracle::new(FunctionSpec::halfspace(directions[0].clone(), 0.0), None)?;
        let dv = d.column(0).into_owned();
        let w = rng::gaussian_vector(n, r);
        let w = &w - &dv * dv.dot(&w);
        let w = &w / w.norm();
        let angle = r.random_range(0.6..1.2f64);
        let v = &dv * angle.cos() + w * angle.sin();
        let e = Subspace::span(&d, 1e-10)?;
        let ep = Subspace::span(&Matrix::from_column_slice(n, 1, v.as_slice()), 1e-10)?;
        (g, e, ep)
    } else {
        let g = QueryOracle::new(FunctionSpec::halfspace(unit(n, r), r.random_range(-0.5..0.5)), None)?;
        let e = Subspace::span(&(&d + gaussian(n, k, r) * 0.1), 1e-10)?;
        let tilt = r.random_range(0.05..0.9);
        let mut cols = e.basis() + gaussian(n, e.dim(), r) * tilt;
        if r.random_bool(0.5) && e.dim() + 1 < n {
            cols = cols.insert_column(e.dim(), 0.0);
            let extra = rng::gaussian_vector(n, r);
            cols.set_column(e.dim(), &extra);
        }
        let ep = Subspace::span(&cols, 1e-10)?;
        (g, e, ep)
    };
    if e.excess_op(&ep) >= 0.999 {
        return Ok((CheckReport::vacuous("correlation_subspace_stability"), 0));
    }
    let seed = r.random::<u64>();
    let rep = correlation_subspace_stability_check(&f, c, &g, &e, &ep, n_samples, seed)?;
    Ok((rep, f.queries() + g.queries()))
}

fn approximate_projection_instance(r: &mut ChaCha8Rng, _tight: bool) -> Result<Vec<CheckReport>, HarnessError> {
    let n = r.random_range(2..=9);
    let k = r.random_range(1..=n);
    let q = random_orthonormal(n, k, r).transpose();
    let x = q + gaussian(k, n, r) * log_uniform(1e-4, 0.3, r);
    Ok(vec![checks::check_approximate_projection(&x)?])
}

fn almost_same_eigen_instance(r: &mut ChaCha8Rng, _tight: bool) -> Result<Vec<CheckReport>, HarnessError> {
    let n = r.random_range(3..=7);
    let lambda = r.random_range(0.5..3.0);
    let delta = lambda * r.random_range(0.02..0.45);
    let inside = r.random_range(1..n);
    let vals: Vec<f64> = (0..n)
        .map(|i| {
            if i < inside {
                lambda + delta * r.random_range(-1.0..1.0)
            } else if r.random_bool(0.5) {
                lambda + delta * r.random_range(1.2..4.0)
            } else {
                (lambda - delta * r.random_range(1.2..4.0f64)).max(0.0)
            }
        })
        .collect();
    let q = random_orthonormal(n, n, r);
    let rm = &q * Matrix::from_diagonal(&Vector::from_vec(vals)) * q.transpose();
    let rm = (&rm + rm.transpose()) * 0.5;
    let w = q.columns(0, inside) * rng::gaussian_vector(inside, r);
    Ok(vec![checks::check_almost_same_eigen(&rm, &w, lambda, delta)?])
}

/// Random low-rank `A` with a small perturbation. Tight fixtures put the
/// spectrum of `A` in `[eta, 2 eta]` and perturb by up to `eta / 4`, where the
/// bound is within a factor of about 100 of the left side.
fn pseudoinverse_instance(r: &mut ChaCha8Rng, tight: bool) -> Result<Vec<CheckReport>, HarnessError> {
    let n = r.random_range(3..=8);
    let eta = r.random_range(0.1..1.0);
    let (a, scale) = if tight {
        let k = r.random_range(1..=2usize);
        let q = random_orthonormal(n, k, r);
        let vals: Vec<f64> = (0..k).map(|_| eta * r.random_range(1.0..2.0)).collect();
        let a = &q * Matrix::from_diagonal(&Vector::from_vec(vals)) * q.transpose();
        (a, eta * r.random_range(0.1..0.25))
    } else {
        let rank = r.random_range(1..=n);
        let g = gaussian(n, rank, r);
        (&g * g.transpose() / rank as f64, eta * eta * log_uniform(1e-6, 1e-1, r))
    };
    let e = random_symmetric(n, r);
    let at = nearest_psd(&(&a + &e * (scale / op_norm(&e))))?;
    Ok(vec![checks::check_pseudoinverse_stability(&a, &at, eta)?])
}

fn davis_kahan_instance(r: &mut ChaCha8Rng, _tight: bool) -> Result<Vec<CheckReport>, HarnessError> {
    let n = r.random_range(3..=8);
    let a = random_symmetric(n, r);
    let b = &a + random_symmetric(n, r) * log_uniform(1e-5, 0.1, r);
    let l = sym_eigen(&a)?.eigenvalues;
    let top = r.random_range(1..n);
    let gap = l[top - 1] - l[top];
    let delta = gap * r.random_range(0.2..0.9);
    let rep = checks::check_davis_kahan(&a, &b, (l[top - 1] - 1e-9, l[0] + 1.0), delta)?;
    Ok(vec![rep.operator, rep.frobenius])
}

fn random_target(n: usize, r: &mut ChaCha8Rng) -> FunctionSpec {
    match r.random_range(0..3) {
        0 => FunctionSpec::halfspace(unit(n, r), r.random_range(-1.0..1.0)),
        1 => FunctionSpec::SmoothTanhJunta {
            directions: vec![unit(n, r), unit(n, r)],
            gains: vec![r.random_range(0.5..3.0), r.random_range(0.5..3.0)],
        },
        _ => FunctionSpec::BooleanJuntaLift {
            directions: vec![unit(n, r), unit(n, r)],
            table: (0..4).map(|_| if r.random_bool(0.5) { 1.0 } else { -1.0 }).collect(),
        },
    }
}

fn averaging(opts: &ValidateOptions, seed: u64, q: &mut u64) -> Result<Vec<CheckOutcome>, HarnessError> {
    let mut sa = CheckOutcome::new("averaging", "self_adjoint");
    let mut tw = CheckOutcome::new("averaging", "tower");
    for i in 0..opts.mc_instances {
        let mut r = instance_rng(seed, "averaging", i);
        let n = r.random_range(2..=6);
        let f = QueryOracle::new(random_target(n, &mut r), None)?;
        let g = QueryOracle::new(random_target(n, &mut r), None)?;
        let kp = r.random_range(1..=n);
        let k = r.random_range(0..=kp);
        let basis = random_orthonormal(n, kp, &mut r);
        let ep = Subspace::from_orthonormal(basis.clone())?;
        let e = Subspace::from_orthonormal(basis.columns(0, k).into_owned())?;
        let s = self_adjoint_check(&f, &g, &ep, opts.mc_samples, r.random())?;
        sa.record(s.pass, None);
        let t = tower_check(&f, &g, &e, &ep, opts.mc_samples, r.random())?;
        tw.record(t.pass, None);
        *q += f.queries() + g.queries();
    }
    Ok(vec![sa, tw])
}

/// Value of `<grad P_t f(0), grad P_t f(0)>` for `f = sign(<u, x>)`.
pub fn sign_gradient_energy(t: f64) -> f64 {
    let e2 = (-2.0 * t).exp();
    2.0 / std::f64::consts::PI * e2 / (1.0 - e2)
}

fn smoothing(opts: &ValidateOptions, seed: u64, q: &mut u64) -> Result<Vec<CheckOutcome>, HarnessError> {
    let mut sm = CheckOutcome::new("smoothing", "smoothness");
    for i in 0..opts.mc_instances.min(10) {
        let mut r = instance_rng(seed, "smoothness", i);
        let n = r.random_range(1..=4);
        let spec = match r.random_range(0..3) {
            0 => FunctionSpec::halfspace(unit(n, &mut r), r.random_range(-1.0..1.0)),
            1 => FunctionSpec::SmoothTanhJunta {
                directions: vec![unit(n, &mut r)],
                gains: vec![r.random_range(0.5..3.0)],
            },
            _ => FunctionSpec::Intersection {
                halfspaces: (0..2)
                    .map(|_| junta_core::oracle::Halfspace {
                        direction: unit(n, &mut r),
                        threshold: r.random_range(-1.0..0.5),
                    })
                    .collect(),
            },
        };
        let s = spec.smoothness();
        let f = QueryOracle::new(spec, None)?;
        let rep = smoothness_check(&f, s, &[0.01, 0.1, 0.5], opts.mc_samples, 4, r.random())?;
        sm.record(rep.pass, Some(rep.rows.iter().map(|r| r.bound - r.estimate.value).fold(f64::INFINITY, f64::min)));
        *q += rep.queries_used;
    }
    let mut gi = CheckOutcome::new("smoothing", "gradient_inner_product");
    let t = std::f64::consts::LN_2;
    let truth = sign_gradient_energy(t);
    for (i, n) in [2usize, 20].into_iter().enumerate() {
        let mut r = instance_rng(seed, "gradient_inner_product", i);
        let f = QueryOracle::new(FunctionSpec::halfspace(unit(n, &mut r), 0.0), None)?;
        let zero = vec![0.0; n];
        let est = grad_inner_product(&f, t, &zero, &zero, 0.05, 0.1, r.random())?;
        let slack = 0.05 - (est.value - truth).abs();
        gi.record(slack >= 0.0, Some(slack));
        *q += est.queries_used;
    }
    Ok(vec![sm, gi])
}

/// Tail of `sign` on `R` beyond degree `1/t`, `t = delta^2`, by quadrature.
fn hermite(opts: &ValidateOptions, q: &mut u64) -> Result<CheckOutcome, HarnessError> {
    let mut out = CheckOutcome::new("hermite", "sign_tail");
    let f = QueryOracle::new(FunctionSpec::axis_halfspace(1, 0, 0.0), None)?;
    for &delta in &opts.hermite_deltas {
        let plan = tail_plan(1.0, delta)?;
        let exp = hermite_tail_mass(&f, plan.degree, &GaussianRule::fine())?;
        let tail = exp.tail();
        let accurate = (tail - sign_tail_closed_form(plan.degree)).abs() <= 1e-6;
        let rep = CheckReport::new("sign_tail", tail, plan.bound);
        out.record(rep.pass && accurate, Some(rep.slack));
        out.record_control(!rep.with_bound_scaled(opts.control_factor).pass, opts.control_factor);
    }
    *q += f.queries();
    Ok(out)
}

fn covariance(opts: &ValidateOptions, seed: u64) -> Result<CheckOutcome, HarnessError> {
    let mut out = CheckOutcome::new("covariance", "concentration_slope");
    let spec = FunctionSpec::SmoothTanhJunta {
        directions: vec![vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 0.6, 0.8, 0.0]],
        gains: vec![2.0, 1.0],
    };
    let rep = covariance_concentration(&spec, 0.2, &opts.covariance_sizes, opts.covariance_reps, seed)?;
    out.record(rep.pass, Some(0.2 - (rep.slope + 0.5).abs()));
    Ok(out)
}

fn truncation(opts: &ValidateOptions, seed: u64) -> Result<CheckOutcome, HarnessError> {
    let mut out = CheckOutcome::new("truncation", "truncation_preserves_correlation");
    for i in 0..opts.mc_instances {
        let mut r = instance_rng(seed, "truncation", i);
        let n = r.random_range(2..=6);
        let kphi = r.random_range(1..=2usize.min(n));
        let phi = FunctionSpec::SmoothTanhJunta {
            directions: (0..kphi).map(|_| unit(n, &mut r)).collect(),
            gains: (0..kphi).map(|_| r.random_range(0.3..3.0)).collect(),
        };
        let h = FunctionSpec::halfspace(unit(n, &mut r), r.random_range(-1.0..1.0));
        let eta = log_uniform(0.01, 0.5, &mut r);
        let m = r.random_range(20..=200);
        let choice = if r.random_bool(0.5) {
            SubspaceChoice::Minimal
        } else {
            SubspaceChoice::Padded(r.random_range(1..=2))
        };
        let rep = truncation_preserves_correlation_check(&phi, 1, eta, m, &h, choice, opts.mc_samples, r.random())?;
        let slack = rep.bound - (rep.difference.value.abs() - 3.0 * rep.difference.stderr);
        out.record(rep.pass, Some(slack));
    }
    Ok(out)
}
