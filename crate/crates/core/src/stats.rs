//! Sample moments and the one-sample Kolmogorov-Smirnov test.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub n: usize,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
}

impl Moments {
    pub fn of(x: &[f64]) -> Moments {
        let n = x.len();
        if n == 0 {
            return Moments { n, mean: f64::NAN, variance: f64::NAN };
        }
        let mean = x.iter().sum::<f64>() / n as f64;
        let variance = if n > 1 { x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
        Moments { n, mean, variance }
    }

    pub fn sd(&self) -> f64 {
        self.variance.sqrt()
    }

    /// Standard error of the mean.
    pub fn stderr(&self) -> f64 {
        (self.variance / self.n as f64).sqrt()
    }
}

/// Bias, standard deviation and root mean squared error of estimates against targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub n: usize,
    pub bias: f64,
    pub sd: f64,
    pub rmse: f64,
}

impl ErrorSummary {
    pub fn of(errors: &[f64]) -> ErrorSummary {
        let m = Moments::of(errors);
        let mse = errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64;
        ErrorSummary { n: m.n, bias: m.mean, sd: m.sd(), rmse: mse.sqrt() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sample Kolmogorov-Smirnov test of `x` against the continuous CDF `cdf`.
pub fn ks_test<F: Fn(f64) -> f64>(x: &[f64], cdf: F) -> KsResult {
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &v) in sorted.iter().enumerate() {
        let f = cdf(v);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    let en = n.sqrt();
    KsResult { statistic: d, p_value: kolmogorov_sf((en + 0.12 + 0.11 / en) * d) }
}

/// `P(K > x)` for the Kolmogorov distribution.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x < 1.18 {
        if x <= 0.0 {
            return 1.0;
        }
        // Jacobi theta form, accurate for small x
        let y = (-std::f64::consts::PI.powi(2) / (8.0 * x * x)).exp();
        let s = y + y.powi(9) + y.powi(25) + y.powi(49);
        1.0 - (2.0 * std::f64::consts::PI).sqrt() / x * s
    } else {
        let y = (-2.0 * x * x).exp();
        let mut s = 0.0;
        let mut sign = 1.0;
        for k in 1..=100 {
            let term = y.powi(k * k);
            s += sign * term;
            sign = -sign;
            if term < 1e-17 {
                break;
            }
        }
        (2.0 * s).clamp(0.0, 1.0)
    }
}

/// Monte Carlo standard error of a proportion.
pub fn proportion_stderr(p: f64, n: usize) -> f64 {
    if n == 0 {
        return f64::NAN;
    }
    (p * (1.0 - p) / n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};
    use statrs::distribution::{ContinuousCDF, Normal};

    #[test]
    fn moments_of_small_sample() {
        let m = Moments::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        assert!((m.variance - 5.0 / 3.0).abs() < 1e-15);
        let e = ErrorSummary::of(&[1.0, -1.0]);
        assert_eq!(e.bias, 0.0);
        assert_eq!(e.rmse, 1.0);
    }

    #[test]
    fn kolmogorov_reference_values() {
        // tabulated critical values of the limiting distribution
        assert!((kolmogorov_sf(1.3581) - 0.05).abs() < 1e-4);
        assert!((kolmogorov_sf(1.6276) - 0.01).abs() < 1e-4);
        assert!((kolmogorov_sf(0.8276) - 0.5).abs() < 1e-3);
        // both branches agree at the switch
        let lo = {
            let x: f64 = 1.18 - 1e-12;
            let y = (-std::f64::consts::PI.powi(2) / (8.0 * x * x)).exp();
            1.0 - (2.0 * std::f64::consts::PI).sqrt() / x * (y + y.powi(9) + y.powi(25))
        };
        assert!((lo - kolmogorov_sf(1.18)).abs() < 1e-9);
    }

    #[test]
    fn ks_accepts_normal_and_rejects_shifted() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..2000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let n = Normal::new(0.0, 1.0).unwrap();
        assert!(ks_test(&x, |v| n.cdf(v)).p_value > 0.01);
        let shifted: Vec<f64> = x.iter().map(|v| v + 0.2).collect();
        assert!(ks_test(&shifted, |v| n.cdf(v)).p_value < 0.01);
    }

    #[test]
    fn ks_statistic_of_single_point() {
        let r = ks_test(&[0.5], |v| v.clamp(0.0, 1.0));
        assert_eq!(r.statistic, 0.5);
    }
}
