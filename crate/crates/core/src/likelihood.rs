//! Gaussian quasi-likelihoods of the observed returns.
//!
//! Under the noise model the returns `Ỹ = Y - μ(θ)` are treated as an MA(1)
//! with covariance `Ω`, tridiagonal with diagonal `s + 2a²` and off-diagonal
//! `-a²`, where `s = σ²Δ_N`. All products with `Ω⁻¹` go through an `LDLᵀ`
//! sweep, so nothing here is quadratic in N.


use crate::data::{returns, TickSeries};
use crate::error::{Error, Result};
use crate::noise_model::{mu, NoiseModel};

const LOG_2PI: f64 = 1.837_877_066_409_345_5;
const RESCALE_EVERY: usize = 64;

/// Covariance kernel of an MA(1) of length N.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MA1Kernel {
    n: usize,
    s: f64,
    a2: f64,
    gamma2: f64,
    phi: f64,
}

impl MA1Kernel {
    /// Builds the kernel, rejecting `s <= 0` and `a² <= -s/4` (not positive definite for all N).
    pub fn new(n: usize, s: f64, a2: f64) -> Result<Self> {
        if !(s > 0.0) || !s.is_finite() || !a2.is_finite() || !(a2 > -0.25 * s) {
            return Err(Error::IndefiniteKernel { s, a2 });
        }
        let root = (s * (4.0 * a2 + s)).sqrt();
        let gamma2 = 0.5 * (2.0 * a2 + s + root);
        let phi = a2 / gamma2;
        Ok(MA1Kernel { n, s, a2, gamma2, phi })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn a2(&self) -> f64 {
        self.a2
    }

    /// MA coefficient `φ̃ ∈ (-1, 1)`, with `γ²φ̃ = a²`.
    pub fn phi(&self) -> f64 {
        self.phi
    }

    /// Innovation variance `γ²`, with `γ²(1 - φ̃)² = s`.
    pub fn gamma2(&self) -> f64 {
        self.gamma2
    }

    fn diag(&self) -> f64 {
        self.s + 2.0 * self.a2
    }

    /// Entry `(i, j)` of `Ω⁻¹`, 1-based, from the closed form. O(1) per entry; meant for checks.
    pub fn omega_inv_coeff(&self, i: usize, j: usize) -> f64 {
        let n = self.n as i32;
        let (i, j) = (i as i32, j as i32);
        let p = self.phi;
        if p == 0.0 {
            return if i == j { 1.0 / self.gamma2 } else { 0.0 };
        }
        let d = (i - j).abs();
        let num = p.powi(d) - p.powi(i + j) - p.powi(2 * n - i - j + 2) + p.powi(2 * n - d + 2);
        num / (self.gamma2 * (1.0 - p * p) * (1.0 - p.powi(2 * n + 2)))
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: len });
        }
        Ok(())
    }

    /// `vᵀ Ω⁻¹ v`.
    pub fn quadform(&self, v: &[f64]) -> Result<f64> {
        Ok(self.gram(&[v])?[0][0])
    }

    /// Cross products `c_jᵀ Ω⁻¹ c_k` of the given columns.
    pub fn gram(&self, cols: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        for c in cols {
            self.check_len(c.len())?;
        }
        let m = cols.len();
        let b = self.diag();
        let c = -self.a2;
        let mut out = vec![vec![0.0; m]; m];
        let mut prev = vec![0.0; m];
        let mut w = vec![0.0; m];
        let mut pivot = b;
        for k in 0..self.n {
            if k > 0 {
                let l = c / pivot;
                pivot = b - c * l;
                for j in 0..m {
                    w[j] = cols[j][k] - l * prev[j];
                }
            } else {
                for j in 0..m {
                    w[j] = cols[j][0];
                }
            }
            if !(pivot > 0.0) {
                return Err(Error::IndefiniteKernel { s: self.s, a2: self.a2 });
            }
            let inv = 1.0 / pivot;
            for j in 0..m {
                let wj = w[j] * inv;
                for l in j..m {
                    out[j][l] += wj * w[l];
                }
            }
            prev.copy_from_slice(&w);
        }
        for j in 0..m {
            for l in 0..j {
                out[j][l] = out[l][j];
            }
        }
        Ok(out)
    }

    /// `Ω⁻¹ v` by forward and backward substitution through the `LDLᵀ` factors.
    pub fn solve(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_len(v.len())?;
        let n = self.n;
        let b = self.diag();
        let c = -self.a2;
        let mut pivots = Vec::with_capacity(n);
        let mut w = Vec::with_capacity(n);
        for k in 0..n {
            let (p, wk) = if k == 0 {
                (b, v[0])
            } else {
                let l = c / pivots[k - 1];
                (b - c * l, v[k] - l * w[k - 1])
            };
            if !(p > 0.0) {
                return Err(Error::IndefiniteKernel { s: self.s, a2: self.a2 });
            }
            pivots.push(p);
            w.push(wk);
        }
        let mut x = vec![0.0; n];
        for k in (0..n).rev() {
            let next = if k + 1 < n { c * x[k + 1] } else { 0.0 };
            x[k] = (w[k] - next) / pivots[k];
        }
        Ok(x)
    }

    /// `∂ log det Ω / ∂a²` at fixed `s`, from the closed-form determinant.
    pub fn dlogdet_da2(&self) -> f64 {
        let kappa = self.a2 / self.s;
        let n = self.n as f64;
        let g2 = self.gamma2 / self.s;
        let dg2 = 1.0 + 1.0 / (1.0 + 4.0 * kappa).sqrt();
        let p = self.phi;
        let dp = (g2 - kappa * dg2) / (g2 * g2);
        let m = 2 * self.n + 2;
        let tail = if p == 0.0 { 0.0 } else { -(m as f64) * p.powi(m as i32 - 1) / (1.0 - p.powi(m as i32)) };
        let d = n * dg2 / g2 + (tail + 2.0 * p / (1.0 - p * p)) * dp;
        d / self.s
    }

    /// `log det Ω` from `d_k = (s + 2a²) d_{k-1} - a⁴ d_{k-2}`, carried as `d_k / b^k`
    /// and rescaled periodically so that long series neither underflow nor overflow.
    pub fn logdet(&self) -> f64 {
        let b = self.diag();
        let r = self.a2 * self.a2 / (b * b);
        let (mut e2, mut e1) = (1.0, 1.0); // e_{k-2}, e_{k-1} with e_0 = e_1 = 1
        let mut log_scale = 0.0;
        for k in 2..=self.n {
            let e = e1 - r * e2;
            e2 = e1;
            e1 = e;
            if k % RESCALE_EVERY == 0 {
                log_scale += e1.ln();
                e2 /= e1;
                e1 = 1.0;
            }
        }
        self.n as f64 * b.ln() + log_scale + e1.ln()
    }

    /// `log det Ω` from the closed form `γ^{2N}(1 - φ̃^{2N+2}) / (1 - φ̃²)`.
    pub fn logdet_closed_form(&self) -> f64 {
        let n = self.n as f64;
        let p2 = self.phi * self.phi;
        n * self.gamma2.ln() + (-(p2.powf(n + 1.0))).ln_1p() - (-p2).ln_1p()
    }
}

/// Gaussian log-density of `v` under `N(0, Ω)`.
pub fn ma1_loglik(kernel: &MA1Kernel, v: &[f64]) -> Result<f64> {
    let q = kernel.quadform(v)?;
    let n = kernel.n() as f64;
    Ok(-0.5 * kernel.logdet() - 0.5 * n * LOG_2PI - 0.5 * q)
}

/// Residual returns `Y - μ(θ)`.
pub fn residual_returns(series: &TickSeries, model: &NoiseModel, theta: &[f64]) -> Result<Vec<f64>> {
    let y = returns(series)?.values;
    let m = mu(model, series, theta)?;
    Ok(y.iter().zip(&m).map(|(y, m)| y - m).collect())
}

fn mean_spacing(series: &TickSeries) -> f64 {
    series.horizon / series.n_returns() as f64
}

/// Log-likelihood assuming the noise is fully explained by `φ`.
pub fn loglik_exp(series: &TickSeries, model: &NoiseModel, sigma2: f64, theta: &[f64]) -> Result<f64> {
    if !(sigma2 > 0.0) {
        return Err(Error::OutOfBounds { index: 0, value: sigma2, lo: 0.0, hi: f64::INFINITY });
    }
    let r = residual_returns(series, model, theta)?;
    let n = r.len() as f64;
    let s = sigma2 * mean_spacing(series);
    let rss: f64 = r.iter().map(|x| x * x).sum();
    Ok(-0.5 * n * s.ln() - 0.5 * n * LOG_2PI - rss / (2.0 * s))
}

/// Log-likelihood with an additional residual i.i.d. noise of variance `a²`.
pub fn loglik_err(series: &TickSeries, model: &NoiseModel, sigma2: f64, theta: &[f64], a2: f64) -> Result<f64> {
    let r = residual_returns(series, model, theta)?;
    let kernel = MA1Kernel::new(r.len(), sigma2 * mean_spacing(series), a2)?;
    ma1_loglik(&kernel, &r)
}

/// Both sides of the summation-by-parts identity `Δyᵀ A Δz = yᵀ Ä z`.
///
/// `a` is N×N (row-major, rows indexed 1..N), `y` and `z` have length N+1.
pub fn bypart_transform(a: &[Vec<f64>], y: &[f64], z: &[f64]) -> (f64, f64) {
    let n = a.len();
    assert!(y.len() == n + 1 && z.len() == n + 1, "y and z must have length N+1");
    let at = |i: usize, j: usize| -> f64 {
        // 1-based with zero padding at 0 and N+1
        if i == 0 || j == 0 || i > n || j > n {
            0.0
        } else {
            a[i - 1][j - 1]
        }
    };
    let dy: Vec<f64> = y.windows(2).map(|w| w[1] - w[0]).collect();
    let dz: Vec<f64> = z.windows(2).map(|w| w[1] - w[0]).collect();
    let mut lhs = 0.0;
    for i in 0..n {
        for j in 0..n {
            lhs += dy[i] * a[i][j] * dz[j];
        }
    }
    let mut rhs = 0.0;
    for i in 0..=n {
        for j in 0..=n {
            let add = at(i + 1, j + 1) - at(i, j + 1) + at(i, j) - at(i + 1, j);
            rhs += y[i] * add * z[j];
        }
    }
    (lhs, rhs)
}
