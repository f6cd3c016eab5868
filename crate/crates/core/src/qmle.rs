//! Quasi-maximum likelihood fits of `(σ², θ)` and `(σ², θ, a²)`.
//!
//! With `Ω = s R(κ)`, `κ = a²/s`, the likelihood is maximized in closed form over
//! `s` and by generalized least squares over θ for each fixed κ. What is left
//! is a one-dimensional search, run over the MA coefficient `φ̃ ∈ (-1, 1)`
//! which maps monotonically onto `κ ∈ (-1/4, ∞)`.

use serde::{Deserialize, Serialize};

use crate::data::{diff, returns, TickSeries};
use crate::error::{Error, Result};
use crate::likelihood::MA1Kernel;
use crate::noise_model::{mu, NoiseModel};
use crate::optimize::{box_qp, grid_then_brent};

const LOG_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    Exp,
    Err,
    Null,
}

/// Domain of `a²` in the noisy fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseSpace {
    /// Extended space around zero used under the null of no residual noise;
    /// `a²` may go down to `-s/8`.
    SmallTest,
    /// `a² ∈ [a̲², ā²]` with `a̲² > 0`.
    LargeNoise,
}

/// Boxes for `σ²` (annualized) and `a²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitBounds {
    pub sigma2: (f64, f64),
    pub a2: (f64, f64),
}

impl Default for FitBounds {
    fn default() -> Self {
        FitBounds { sigma2: (1e-6, 10.0), a2: (1e-14, 1e-4) }
    }
}

/// Lower end of `a²/s` in the small-noise test space.
pub const SMALL_TEST_KAPPA_MIN: f64 = -0.125;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Uniform grid points in `φ̃` before refinement.
    pub grid: usize,
    /// Relative tolerance of the Brent refinement.
    pub tol: f64,
    pub max_iter: usize,
    /// Optional starting value for `a²`, added to the grid.
    pub a2_start: Option<f64>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { grid: 33, tol: 1e-11, max_iter: 300, a2_start: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub variant: Variant,
    pub sigma2: f64,
    pub theta: Option<Vec<f64>>,
    pub a2: Option<f64>,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Flags for `σ²`, each θ coordinate, then `a²` when present.
    pub bounds_hit: Vec<bool>,
}

impl FitResult {
    pub fn theta(&self) -> &[f64] {
        self.theta.as_deref().unwrap_or(&[])
    }
}

/// `X̂_{t_i} = Z_{t_i} - φ(Q_i, θ̂)`, constant on `(t_{i-1}, t_i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficientPricePath {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl EfficientPricePath {
    pub fn at(&self, t: f64) -> f64 {
        let idx = self.times.partition_point(|&s| s < t);
        self.values[idx.min(self.values.len() - 1)]
    }

    pub fn realized_variance(&self) -> f64 {
        self.values.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiVHat {
    pub value: f64,
    /// Set when a negative `â²` was replaced by zero.
    pub a2_clamped: bool,
}

struct Profile {
    q: f64,
    theta: Vec<f64>,
}

struct Problem<'a> {
    series: &'a TickSeries,
    model: &'a NoiseModel,
    y: Vec<f64>,
    delta: f64,
    /// Differenced regressors of a linear model.
    design: Option<Vec<Vec<f64>>>,
}

impl<'a> Problem<'a> {
    fn new(series: &'a TickSeries, model: &'a NoiseModel) -> Result<Self> {
        let y = returns(series)?.values;
        if y.len() < 2 {
            return Err(Error::InsufficientData { needed: 3, got: series.prices.len() });
        }
        let delta = series.horizon / y.len() as f64;
        // surface missing covariates before any search
        let zero = model.zero_theta();
        let grad = model.phi_grad_series(series, &zero)?;
        let design = model.is_linear().then(|| grad.iter().map(|c| diff(c)).collect());
        Ok(Problem { series, model, y, delta, design })
    }

    fn n(&self) -> usize {
        self.y.len()
    }

    fn residual(&self, theta: &[f64]) -> Result<Vec<f64>> {
        if let Some(design) = &self.design {
            let mut r = self.y.clone();
            for (col, &t) in design.iter().zip(theta) {
                if t != 0.0 {
                    for (ri, ci) in r.iter_mut().zip(col) {
                        *ri -= t * ci;
                    }
                }
            }
            Ok(r)
        } else {
            let m = mu(self.model, self.series, theta)?;
            Ok(self.y.iter().zip(&m).map(|(y, m)| y - m).collect())
        }
    }

    /// Minimizes `Ỹ(θ)ᵀ R(κ)⁻¹ Ỹ(θ)` over Θ.
    fn profile(&self, kernel: &MA1Kernel, warm: &[f64]) -> Result<Profile> {
        let bounds = self.model.bounds();
        if let Some(design) = &self.design {
            let theta = if design.is_empty() {
                Vec::new()
            } else {
                let mut cols: Vec<&[f64]> = design.iter().map(|c| c.as_slice()).collect();
                cols.push(&self.y);
                let g = kernel.gram(&cols)?;
                let d = design.len();
                let h: Vec<Vec<f64>> = g[..d].iter().map(|row| row[..d].to_vec()).collect();
                let rhs: Vec<f64> = (0..d).map(|k| g[k][d]).collect();
                box_qp(&h, &rhs, bounds)
            };
            let q = kernel.quadform(&self.residual(&theta)?)?;
            return Ok(Profile { q, theta });
        }
        // Gauss-Newton with backtracking for a non-linear φ
        let mut theta = warm.to_vec();
        let mut r = self.residual(&theta)?;
        let mut q = kernel.quadform(&r)?;
        for _ in 0..100 {
            let jac: Vec<Vec<f64>> = self.model.phi_grad_series(self.series, &theta)?.iter().map(|c| diff(c)).collect();
            let mut cols: Vec<&[f64]> = jac.iter().map(|c| c.as_slice()).collect();
            cols.push(&r);
            let g = kernel.gram(&cols)?;
            let d = jac.len();
            let h: Vec<Vec<f64>> = g[..d].iter().map(|row| row[..d].to_vec()).collect();
            let rhs: Vec<f64> = (0..d).map(|k| g[k][d]).collect();
            let shifted: Vec<(f64, f64)> = bounds.iter().zip(&theta).map(|(&(lo, hi), &t)| (lo - t, hi - t)).collect();
            let step = box_qp(&h, &rhs, &shifted);
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..40 {
                let cand: Vec<f64> =
                    theta.iter().zip(&step).zip(bounds).map(|((x, s), &(lo, hi))| (x + t * s).clamp(lo, hi)).collect();
                if let Ok(rc) = self.residual(&cand) {
                    let qc = kernel.quadform(&rc)?;
                    if qc <= q {
                        let small = step.iter().zip(bounds).all(|(s, (lo, hi))| (t * s).abs() <= 1e-13 * (hi - lo));
                        theta = cand;
                        r = rc;
                        let improvement = q - qc;
                        q = qc;
                        accepted = !small && improvement > 1e-15 * q;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        Ok(Profile { q, theta })
    }
}

fn kappa_of_phi(phi: f64) -> f64 {
    phi / ((1.0 - phi) * (1.0 - phi))
}

fn phi_of_kappa(kappa: f64) -> f64 {
    if kappa == 0.0 {
        return 0.0;
    }
    let gamma2 = 0.5 * (1.0 + 2.0 * kappa + (1.0 + 4.0 * kappa).sqrt());
    kappa / gamma2
}

/// Feasible interval for `s` given `κ`, from the `σ²` and `a²` boxes.
fn s_interval(bounds: &FitBounds, delta: f64, kappa: f64, space: Option<NoiseSpace>) -> Option<(f64, f64)> {
    let (mut lo, mut hi) = (bounds.sigma2.0 * delta, bounds.sigma2.1 * delta);
    match space {
        None => {}
        Some(NoiseSpace::SmallTest) => {
            if kappa > 0.0 {
                hi = hi.min(bounds.a2.1 / kappa);
            }
        }
        Some(NoiseSpace::LargeNoise) => {
            if !(kappa > 0.0) {
                return None;
            }
            lo = lo.max(bounds.a2.0 / kappa);
            hi = hi.min(bounds.a2.1 / kappa);
        }
    }
    (lo <= hi).then_some((lo, hi))
}

fn kappa_range(bounds: &FitBounds, delta: f64, space: NoiseSpace) -> (f64, f64) {
    let hi = bounds.a2.1 / (bounds.sigma2.0 * delta);
    match space {
        NoiseSpace::SmallTest => (SMALL_TEST_KAPPA_MIN, hi),
        NoiseSpace::LargeNoise => (bounds.a2.0 / (bounds.sigma2.1 * delta), hi),
    }
}

struct Evaluated {
    loglik: f64,
    s: f64,
    theta: Vec<f64>,
}

fn evaluate(problem: &Problem, bounds: &FitBounds, kappa: f64, space: Option<NoiseSpace>, warm: &[f64]) -> Result<Evaluated> {
    let n = problem.n();
    let (slo, shi) = s_interval(bounds, problem.delta, kappa, space).ok_or(Error::IndefiniteKernel { s: 1.0, a2: kappa })?;
    let kernel = MA1Kernel::new(n, 1.0, kappa)?;
    let prof = problem.profile(&kernel, warm)?;
    let nf = n as f64;
    let s = (prof.q / nf).clamp(slo, shi);
    let loglik = -0.5 * nf * s.ln() - 0.5 * kernel.logdet() - 0.5 * nf * LOG_2PI - prof.q / (2.0 * s);
    Ok(Evaluated { loglik, s, theta: prof.theta })
}

fn near(x: f64, target: f64) -> bool {
    (x - target).abs() <= 1e-9 * target.abs().max(f64::MIN_POSITIVE)
}

fn theta_hits(model: &NoiseModel, theta: &[f64]) -> Vec<bool> {
    theta
        .iter()
        .zip(model.bounds())
        .map(|(&t, &(lo, hi))| (t - lo).abs() <= 1e-9 * (hi - lo) || (hi - t).abs() <= 1e-9 * (hi - lo))
        .collect()
}

fn check_boundary(result: FitResult) -> Result<FitResult> {
    if !result.bounds_hit.is_empty() && result.bounds_hit.iter().all(|&b| b) {
        return Err(Error::BoundarySolution);
    }
    Ok(result)
}

/// Fit assuming the noise is fully explained by `φ`.
pub fn fit_exp(series: &TickSeries, model: &NoiseModel, bounds: &FitBounds) -> Result<FitResult> {
    let problem = Problem::new(series, model)?;
    let warm = model.zero_theta();
    let ev = evaluate(&problem, bounds, 0.0, None, &warm)?;
    let sigma2 = ev.s / problem.delta;
    let mut hits = vec![near(sigma2, bounds.sigma2.0) || near(sigma2, bounds.sigma2.1)];
    hits.extend(theta_hits(model, &ev.theta));
    check_boundary(FitResult {
        variant: Variant::Exp,
        sigma2,
        theta: Some(ev.theta),
        a2: None,
        loglik: ev.loglik,
        iterations: 1,
        converged: true,
        bounds_hit: hits,
    })
}

/// Fit with an additional residual i.i.d. noise of variance `a²`.
pub fn fit_err(series: &TickSeries, model: &NoiseModel, bounds: &FitBounds, space: NoiseSpace) -> Result<FitResult> {
    fit_err_with(series, model, bounds, space, &FitOptions::default())
}

pub fn fit_err_with(
    series: &TickSeries,
    model: &NoiseModel,
    bounds: &FitBounds,
    space: NoiseSpace,
    opts: &FitOptions,
) -> Result<FitResult> {
    let problem = Problem::new(series, model)?;
    let mut res = search(&problem, bounds, space, opts)?;
    res.variant = if model.dim() == 0 { Variant::Null } else { Variant::Err };
    if res.variant == Variant::Null {
        res.theta = None;
        res.bounds_hit = vec![res.bounds_hit[0], res.bounds_hit[res.bounds_hit.len() - 1]];
    }
    check_boundary(res)
}

/// No-information MA(1) fit with `φ ≡ 0`, over the small-noise test space so that `â²` can be zero.
pub fn fit_null(series: &TickSeries, bounds: &FitBounds) -> Result<FitResult> {
    fit_err(series, &NoiseModel::null(), bounds, NoiseSpace::SmallTest)
}

fn search(problem: &Problem, bounds: &FitBounds, space: NoiseSpace, opts: &FitOptions) -> Result<FitResult> {
    let model = problem.model;
    let n = problem.n();
    let delta = problem.delta;
    let (klo, khi) = kappa_range(bounds, delta, space);
    if !(klo < khi) {
        return Err(Error::Config("empty a² range".into()));
    }
    let (plo, phi_hi) = (phi_of_kappa(klo), phi_of_kappa(khi));

    let mut grid: Vec<f64> = (0..opts.grid.max(2)).map(|i| plo + (phi_hi - plo) * i as f64 / (opts.grid.max(2) - 1) as f64).collect();
    let pos_lo = klo.max(1e-6);
    if khi > pos_lo {
        let steps = 24;
        for i in 0..=steps {
            let k = pos_lo * (khi / pos_lo).powf(i as f64 / steps as f64);
            grid.push(phi_of_kappa(k));
        }
    }
    if klo < 0.0 {
        grid.push(0.0);
    }
    // moment seeds from the first-order autocovariance of the returns
    let y = &problem.y;
    let rv: f64 = y.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let acov: f64 = y.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / n as f64;
    let mut seeds = vec![-acov, -0.5 * acov];
    seeds.extend(opts.a2_start);
    for a2 in seeds {
        let s0 = (rv - 2.0 * a2).max(bounds.sigma2.0 * delta);
        let k = (a2 / s0).clamp(klo, khi);
        grid.push(phi_of_kappa(k));
    }
    grid.retain(|p| *p >= plo && *p <= phi_hi);

    let warm = std::cell::RefCell::new(model.zero_theta());
    let mut failures = 0usize;
    let mut objective = |p: f64| -> f64 {
        let k = kappa_of_phi(p);
        let w = warm.borrow().clone();
        match evaluate(problem, bounds, k, Some(space), &w) {
            Ok(ev) => {
                if !model.is_linear() {
                    *warm.borrow_mut() = ev.theta;
                }
                ev.loglik
            }
            Err(_) => {
                failures += 1;
                f64::NEG_INFINITY
            }
        }
    };
    let best = grid_then_brent(&mut objective, &grid, opts.tol, opts.max_iter);
    if !best.fx.is_finite() {
        return Err(Error::NoConvergence { iterations: best.evaluations });
    }
    if !best.converged {
        return Err(Error::NoConvergence { iterations: best.evaluations });
    }
    let w = warm.borrow().clone();
    let mut x = best.x;
    let mut ev = evaluate(problem, bounds, kappa_of_phi(x), Some(space), &w)?;
    if let Some(root) = score_root(problem, bounds, space, &w, x, plo, phi_hi) {
        if let Ok(cand) = evaluate(problem, bounds, kappa_of_phi(root), Some(space), &w) {
            if cand.loglik >= ev.loglik - 1e-12 * ev.loglik.abs() {
                x = root;
                ev = cand;
            }
        }
    }
    let kappa = kappa_of_phi(x);
    let sigma2 = ev.s / delta;
    let a2 = kappa * ev.s;
    let mut hits = vec![near(sigma2, bounds.sigma2.0) || near(sigma2, bounds.sigma2.1)];
    hits.extend(theta_hits(model, &ev.theta));
    let a2_hit = (x - plo).abs() <= 1e-9 || (phi_hi - x).abs() <= 1e-9 || near(a2, bounds.a2.1)
        || (space == NoiseSpace::LargeNoise && near(a2, bounds.a2.0));
    hits.push(a2_hit);
    Ok(FitResult {
        variant: Variant::Err,
        sigma2,
        theta: Some(ev.theta),
        a2: Some(a2),
        loglik: ev.loglik,
        iterations: best.evaluations,
        converged: best.converged,
        bounds_hit: hits,
    })
}

/// Derivative of the profile log-likelihood in `κ`, when `s` is interior.
///
/// By the envelope property only the explicit dependence on `κ` counts:
/// `∂q/∂κ = -uᵀ T u` with `u = R⁻¹Ỹ` and `T = ∂R/∂κ` the second-difference matrix.
fn profile_score(problem: &Problem, bounds: &FitBounds, space: NoiseSpace, warm: &[f64], kappa: f64) -> Option<f64> {
    let n = problem.n();
    let (slo, shi) = s_interval(bounds, problem.delta, kappa, Some(space))?;
    let kernel = MA1Kernel::new(n, 1.0, kappa).ok()?;
    let prof = problem.profile(&kernel, warm).ok()?;
    let s = prof.q / n as f64;
    if !(s > slo && s < shi) {
        return None;
    }
    let u = kernel.solve(&problem.residual(&prof.theta).ok()?).ok()?;
    let mut utu = 0.0;
    for i in 0..n {
        let left = if i > 0 { u[i - 1] } else { 0.0 };
        let right = if i + 1 < n { u[i + 1] } else { 0.0 };
        utu += u[i] * (2.0 * u[i] - left - right);
    }
    Some(0.5 * n as f64 * utu / prof.q - 0.5 * kernel.dlogdet_da2())
}

/// Polishes the Brent optimum by solving the score equation, which is far
/// better conditioned than comparing likelihood values near a flat maximum.
fn score_root(problem: &Problem, bounds: &FitBounds, space: NoiseSpace, warm: &[f64], x: f64, lo: f64, hi: f64) -> Option<f64> {
    let g = |p: f64| profile_score(problem, bounds, space, warm, kappa_of_phi(p));
    let mut h = 1e-7;
    let (mut a, mut b, mut ga, mut gb);
    loop {
        a = (x - h).max(lo);
        b = (x + h).min(hi);
        ga = g(a)?;
        gb = g(b)?;
        if ga > 0.0 && gb < 0.0 {
            break;
        }
        h *= 10.0;
        if h > 1e-3 {
            return None;
        }
    }
    // Illinois variant of regula falsi
    let mut side = 0i8;
    for _ in 0..100 {
        let c = (a * gb - b * ga) / (gb - ga);
        if !(c > a && c < b) || b - a <= 4.0 * f64::EPSILON * b.abs().max(1e-300) {
            break;
        }
        let gc = g(c)?;
        if gc == 0.0 {
            return Some(c);
        }
        if gc > 0.0 {
            a = c;
            ga = gc;
            if side == 1 {
                gb *= 0.5;
            }
            side = 1;
        } else {
            b = c;
            gb = gc;
            if side == -1 {
                ga *= 0.5;
            }
            side = -1;
        }
    }
    Some(if ga.abs() < gb.abs() { a } else { b })
}

/// Estimated efficient price `Z - φ(Q, θ̂)`.
pub fn efficient_price(series: &TickSeries, model: &NoiseModel, theta: &[f64]) -> Result<EfficientPricePath> {
    let phi = model.phi_series(series, theta)?;
    Ok(EfficientPricePath {
        times: series.times.clone(),
        values: series.prices.iter().zip(&phi).map(|(z, p)| z - p).collect(),
    })
}

/// Proportion of the noise variance explained by `φ(Q, θ̂)`.
pub fn pi_v_hat(series: &TickSeries, model: &NoiseModel, fit: &FitResult) -> Result<PiVHat> {
    let a2 = fit.a2.ok_or_else(|| Error::Config("proportion of explained variance needs a fit with a²".into()))?;
    let phi = model.phi_series(series, fit.theta())?;
    let mean_sq = phi.iter().map(|p| p * p).sum::<f64>() / phi.len() as f64;
    let a2_clamped = a2 < 0.0;
    let a2 = a2.max(0.0);
    if mean_sq + a2 <= 0.0 {
        return Err(Error::Undefined);
    }
    Ok(PiVHat { value: mean_sq / (mean_sq + a2), a2_clamped })
}
