//! Estimators of the asymptotic variance of `σ̂²_exp - σ̂²_err`.
//!
//! `v1`, `v2` use bipower products and stay consistent on irregular grids;
//! `v3`, `v4`, `v5` assume regular sampling. `v2` and `v5` truncate returns
//! above a threshold and add a jump term built from one-sided spot variances.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TruncationConfig {
    /// Threshold exponent, in (0, 1/2).
    pub omega: f64,
    /// Threshold multiplier of `σ̂_exp`.
    pub alpha0: f64,
    /// Spot window length; `None` means `⌊N^{1/2}⌋`.
    pub k_spot: Option<usize>,
}

impl Default for TruncationConfig {
    fn default() -> Self {
        TruncationConfig { omega: 0.48, alpha0: 4.0, k_spot: None }
    }
}

impl TruncationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0 && self.omega < 0.5) {
            return Err(Error::Config(format!("truncation exponent must lie in (0, 1/2), got {}", self.omega)));
        }
        if !(self.alpha0 > 0.0) {
            return Err(Error::Config(format!("truncation multiplier must be positive, got {}", self.alpha0)));
        }
        if matches!(self.k_spot, Some(k) if k < 2) {
            return Err(Error::Config("spot window must be at least 2".into()));
        }
        Ok(())
    }

    /// Window length for `n` returns.
    pub fn window(&self, n: usize) -> usize {
        self.k_spot.unwrap_or_else(|| (n as f64).sqrt().floor() as usize)
    }

    fn checked_window(&self, n: usize) -> Result<usize> {
        self.validate()?;
        let k = self.window(n);
        // both one-sided windows around at least one interior index, and kΔ < T/4
        if k < 2 || n <= 2 * k + 2 || 4 * k >= n {
            return Err(Error::WindowTooLarge { window: k, available: n });
        }
        Ok(k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Right,
    Left,
}

/// Continuous and jump parts of a truncated estimator; the estimate is their sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AvarParts {
    pub continuous: f64,
    pub jump: f64,
    pub exceedances: usize,
}

impl AvarParts {
    pub fn total(&self) -> f64 {
        self.continuous + self.jump
    }
}

/// Bipower estimator `(4N/T²) Σ_{i≥2} ΔX̂_i² ΔX̂_{i-1}²`.
pub fn v1(dx: &[f64], horizon: f64) -> f64 {
    let n = dx.len() as f64;
    let bp: f64 = dx.windows(2).map(|w| w[0] * w[0] * w[1] * w[1]).sum();
    4.0 * n / (horizon * horizon) * bp
}

/// Thresholds `ũ_i = α̃ (t_i - t_{i-1})^ω` with `α̃ = α₀ σ̂_exp`.
pub fn thresholds(spacings: &[f64], sigma_exp: f64, cfg: &TruncationConfig) -> Vec<f64> {
    let a = cfg.alpha0 * sigma_exp;
    spacings.iter().map(|&d| a * d.max(0.0).powf(cfg.omega)).collect()
}

fn kept_squares(dx: &[f64], u: &[f64]) -> Vec<f64> {
    dx.iter().zip(u).map(|(&x, &u)| if x.abs() <= u { x * x } else { 0.0 }).collect()
}

/// Prefix sums with a leading zero.
fn prefix(v: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(v.len() + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for x in v {
        acc += x;
        out.push(acc);
    }
    out
}

/// Average of kept squared returns `j = i+1 ..= i+k` (1-based), divided by `Δ`.
fn right_window(cum: &[f64], i: usize, k: usize, delta: f64) -> f64 {
    (cum[i + k] - cum[i]) / (k as f64 * delta)
}

/// One-sided spot estimate of `σ²α` at return index `i` (1-based).
pub fn spot_sigma2alpha(
    dx: &[f64],
    spacings: &[f64],
    horizon: f64,
    i: usize,
    side: Side,
    sigma_exp: f64,
    cfg: &TruncationConfig,
) -> Result<f64> {
    let n = dx.len();
    if spacings.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: spacings.len() });
    }
    let k = cfg.checked_window(n)?;
    let anchor = match side {
        Side::Right => Some(i),
        Side::Left => i.checked_sub(k + 1),
    };
    let anchor = match anchor {
        Some(a) if a + k <= n => a,
        _ => return Err(Error::WindowTooLarge { window: k, available: n }),
    };
    let u = thresholds(spacings, sigma_exp, cfg);
    let cum = prefix(&kept_squares(dx, &u));
    Ok(right_window(&cum, anchor, k, horizon / n as f64))
}

fn truncated_parts(dx: &[f64], u: &[f64], horizon: f64, k: usize, continuous: f64) -> AvarParts {
    let n = dx.len();
    let delta = horizon / n as f64;
    let cum = prefix(&kept_squares(dx, u));
    let mut jump = 0.0;
    let mut exceedances = 0;
    for i in (k + 1)..=(n - k) {
        let x = dx[i - 1];
        if x.abs() > u[i - 1] {
            exceedances += 1;
            let right = right_window(&cum, i, k, delta);
            let left = right_window(&cum, i - k - 1, k, delta);
            jump += x * x * (right + left);
        }
    }
    AvarParts { continuous, jump: 4.0 / horizon * jump, exceedances }
}

/// Truncated bipower estimator with jump correction, for irregular grids.
pub fn v2_parts(dx: &[f64], spacings: &[f64], horizon: f64, sigma_exp: f64, cfg: &TruncationConfig) -> Result<AvarParts> {
    let n = dx.len();
    if spacings.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: spacings.len() });
    }
    let k = cfg.checked_window(n)?;
    let u = thresholds(spacings, sigma_exp, cfg);
    let delta = horizon / n as f64;
    let mut bp = 0.0;
    for i in 1..n {
        if dx[i].abs() <= u[i] && dx[i - 1].abs() <= u[i - 1] {
            bp += dx[i] * dx[i] * dx[i - 1] * dx[i - 1];
        }
    }
    Ok(truncated_parts(dx, &u, horizon, k, 4.0 / horizon * bp / delta))
}

pub fn v2(dx: &[f64], spacings: &[f64], horizon: f64, sigma_exp: f64, cfg: &TruncationConfig) -> Result<f64> {
    Ok(v2_parts(dx, spacings, horizon, sigma_exp, cfg)?.total())
}

/// `4 (σ̂²_exp)²`.
pub fn v3(sigma2_exp: f64) -> f64 {
    4.0 * sigma2_exp * sigma2_exp
}

/// Quarticity estimator `(4n/(3T²)) Σ ΔX̂_i⁴`.
pub fn v4(dx: &[f64], horizon: f64) -> f64 {
    let n = dx.len() as f64;
    4.0 * n / (3.0 * horizon * horizon) * dx.iter().map(|x| x.powi(4)).sum::<f64>()
}

/// Truncated quarticity with jump correction, for regular grids with `Δ = T/n`.
pub fn v5_parts(dx: &[f64], horizon: f64, sigma_exp: f64, cfg: &TruncationConfig) -> Result<AvarParts> {
    let n = dx.len();
    let k = cfg.checked_window(n)?;
    let delta = horizon / n as f64;
    let level = cfg.alpha0 * sigma_exp * delta.powf(cfg.omega);
    let u = vec![level; n];
    let quart: f64 = dx.iter().filter(|x| x.abs() <= level).map(|x| x.powi(4)).sum();
    Ok(truncated_parts(dx, &u, horizon, k, 4.0 / horizon * quart / (3.0 * delta)))
}

pub fn v5(dx: &[f64], horizon: f64, sigma_exp: f64, cfg: &TruncationConfig) -> Result<f64> {
    Ok(v5_parts(dx, horizon, sigma_exp, cfg)?.total())
}
