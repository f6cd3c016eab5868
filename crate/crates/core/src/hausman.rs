//! Hausman-type tests for residual noise and the volatility selection sequence.

use std::fmt;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::avar::{v1, v2, v3, v4, v5, TruncationConfig};
use crate::data::{returns, TickSeries};
use crate::error::{Error, Result};
use crate::noise_model::NoiseModel;
use crate::qmle::{efficient_price, fit_err, fit_exp, FitBounds, FitResult, NoiseSpace};

/// Relative spread of the sampling intervals above which a grid is not treated as regular.
pub const REGULAR_GRID_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum AvarVariant {
    V1,
    V2,
    V3,
    V4,
    V5,
}

impl AvarVariant {
    pub const ALL: [AvarVariant; 5] = [AvarVariant::V1, AvarVariant::V2, AvarVariant::V3, AvarVariant::V4, AvarVariant::V5];

    pub fn number(self) -> u8 {
        match self {
            AvarVariant::V1 => 1,
            AvarVariant::V2 => 2,
            AvarVariant::V3 => 3,
            AvarVariant::V4 => 4,
            AvarVariant::V5 => 5,
        }
    }

    /// Whether the estimator assumes a regular sampling grid.
    pub fn needs_regular_grid(self) -> bool {
        self.number() >= 3
    }

    /// `V2` on irregular data, `V5` on regular grids; both handle jumps.
    pub fn auto(series: &TickSeries) -> Self {
        if series.spacing_dispersion() <= REGULAR_GRID_TOLERANCE {
            AvarVariant::V5
        } else {
            AvarVariant::V2
        }
    }
}

impl TryFrom<u8> for AvarVariant {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        AvarVariant::ALL
            .get((v as usize).wrapping_sub(1))
            .copied()
            .ok_or_else(|| Error::Config(format!("statistic variant must be 1..5, got {v}")))
    }
}

impl From<AvarVariant> for u8 {
    fn from(v: AvarVariant) -> u8 {
        v.number()
    }
}

impl FromStr for AvarVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().trim_start_matches(['S', 's', 'V', 'v']);
        let v: u8 = t.parse().map_err(|_| Error::Config(format!("unknown statistic `{s}`")))?;
        AvarVariant::try_from(v)
    }
}

impl fmt::Display for AvarVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "S{}", self.number())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub statistic: f64,
    pub avar_variant: AvarVariant,
    pub p_value: f64,
    pub level: f64,
    pub reject: bool,
    pub sigma2_exp: f64,
    pub sigma2_err: f64,
    pub v_hat: f64,
    pub n: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    RvRaw,
    QmleErr,
    QmleExp,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::RvRaw => "rv_raw",
            Provenance::QmleErr => "qmle_err",
            Provenance::QmleExp => "qmle_exp",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceResult {
    /// Selected estimate of `σ²`, annualized.
    pub chosen_estimate: f64,
    pub provenance: Provenance,
    /// Realized variance of the raw prices against `σ̂²_err`.
    pub stage1: TestReport,
    /// Residual-noise test, run only when the first stage rejects.
    pub stage2: Option<TestReport>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TestConfig {
    /// Test level β.
    pub level: f64,
    pub truncation: TruncationConfig,
    /// Compute the variance estimators on raw returns `ΔZ` instead of `ΔX̂`.
    pub raw_returns: bool,
    pub bounds: FitBounds,
}

impl Default for TestConfig {
    fn default() -> Self {
        TestConfig { level: 0.05, truncation: TruncationConfig::default(), raw_returns: false, bounds: FitBounds::default() }
    }
}

/// `c_{1-β}`, the `(1-β)`-quantile of the χ²(1) distribution.
pub fn chi2_critical(level: f64) -> f64 {
    let z = Normal::new(0.0, 1.0).unwrap().inverse_cdf(1.0 - 0.5 * level);
    z * z
}

/// `P(χ²(1) > s)`.
pub fn chi2_sf(s: f64) -> f64 {
    if s <= 0.0 {
        return 1.0;
    }
    ChiSquared::new(1.0).unwrap().sf(s)
}

/// χ²(1) decision: reject iff `S > c_{1-β}`.
pub fn rejects(statistic: f64, level: f64) -> bool {
    statistic > chi2_critical(level)
}

/// `S = N (σ̂²_exp - σ̂²_err)² / V̂` with its χ²(1) decision.
pub fn hausman(sigma2_exp: f64, sigma2_err: f64, n: usize, v_hat: f64, level: f64) -> Result<TestReport> {
    if !(v_hat > 0.0) || !v_hat.is_finite() {
        return Err(Error::DegenerateVariance(v_hat));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!("test level must lie in (0, 1), got {level}")));
    }
    let d = sigma2_exp - sigma2_err;
    let statistic = n as f64 * d * d / v_hat;
    Ok(TestReport {
        statistic,
        avar_variant: AvarVariant::V1,
        p_value: chi2_sf(statistic),
        level,
        reject: rejects(statistic, level),
        sigma2_exp,
        sigma2_err,
        v_hat,
        n,
        warnings: Vec::new(),
    })
}

/// Evaluates the chosen variance estimator on returns `dx` with `σ̂²` as the level estimate.
pub fn avar_estimate(
    variant: AvarVariant,
    dx: &[f64],
    spacings: &[f64],
    horizon: f64,
    sigma2: f64,
    truncation: &TruncationConfig,
) -> Result<f64> {
    let sigma = sigma2.max(0.0).sqrt();
    Ok(match variant {
        AvarVariant::V1 => v1(dx, horizon),
        AvarVariant::V2 => v2(dx, spacings, horizon, sigma, truncation)?,
        AvarVariant::V3 => v3(sigma2),
        AvarVariant::V4 => v4(dx, horizon),
        AvarVariant::V5 => v5(dx, horizon, sigma, truncation)?,
    })
}

fn grid_warning(series: &TickSeries, variant: AvarVariant) -> Option<String> {
    let dispersion = series.spacing_dispersion();
    (variant.needs_regular_grid() && dispersion > REGULAR_GRID_TOLERANCE).then(|| {
        let msg = format!("{variant} assumes a regular grid but sampling intervals vary by {:.1}%", 100.0 * dispersion);
        warn!("{msg}");
        msg
    })
}

/// Residual-noise test from already computed fits.
pub fn test_from_fits(
    series: &TickSeries,
    model: &NoiseModel,
    exp: &FitResult,
    err: &FitResult,
    variant: AvarVariant,
    cfg: &TestConfig,
) -> Result<TestReport> {
    let dx = if cfg.raw_returns {
        returns(series)?.values
    } else {
        let path = efficient_price(series, model, exp.theta())?;
        crate::data::diff(&path.values)
    };
    let v = avar_estimate(variant, &dx, &series.spacings(), series.horizon, exp.sigma2, &cfg.truncation)?;
    let mut report = hausman(exp.sigma2, err.sigma2, dx.len(), v, cfg.level)?;
    report.avar_variant = variant;
    report.warnings.extend(grid_warning(series, variant));
    Ok(report)
}

/// Fits both likelihoods and tests for residual noise with statistic `S_variant`.
pub fn run_test(series: &TickSeries, model: &NoiseModel, variant: AvarVariant, cfg: &TestConfig) -> Result<TestReport> {
    let exp = fit_exp(series, model, &cfg.bounds)?;
    let err = fit_err(series, model, &cfg.bounds, NoiseSpace::SmallTest)?;
    test_from_fits(series, model, &exp, &err, variant, cfg)
}

/// Chooses between raw realized variance, `σ̂²_err` and `σ̂²_exp` by two Hausman tests.
pub fn select_volatility(series: &TickSeries, model: &NoiseModel, variant: AvarVariant, cfg: &TestConfig) -> Result<SequenceResult> {
    let err = fit_err(series, model, &cfg.bounds, NoiseSpace::SmallTest)?;
    let (rv, stage1) = raw_stage(series, &err, variant, cfg)?;
    if !stage1.reject {
        return Ok(SequenceResult { chosen_estimate: rv, provenance: Provenance::RvRaw, stage1, stage2: None });
    }
    let exp = fit_exp(series, model, &cfg.bounds)?;
    finish_sequence(series, model, &exp, &err, stage1, variant, cfg)
}

/// [`select_volatility`] with both fits supplied.
pub fn select_from_fits(
    series: &TickSeries,
    model: &NoiseModel,
    exp: &FitResult,
    err: &FitResult,
    variant: AvarVariant,
    cfg: &TestConfig,
) -> Result<SequenceResult> {
    let (rv, stage1) = raw_stage(series, err, variant, cfg)?;
    if !stage1.reject {
        return Ok(SequenceResult { chosen_estimate: rv, provenance: Provenance::RvRaw, stage1, stage2: None });
    }
    finish_sequence(series, model, exp, err, stage1, variant, cfg)
}

fn raw_stage(series: &TickSeries, err: &FitResult, variant: AvarVariant, cfg: &TestConfig) -> Result<(f64, TestReport)> {
    let raw = returns(series)?.values;
    let rv = raw.iter().map(|x| x * x).sum::<f64>() / series.horizon;
    let v = avar_estimate(variant, &raw, &series.spacings(), series.horizon, rv, &cfg.truncation)?;
    let mut stage1 = hausman(rv, err.sigma2, raw.len(), v, cfg.level)?;
    stage1.avar_variant = variant;
    stage1.warnings.extend(grid_warning(series, variant));
    Ok((rv, stage1))
}

fn finish_sequence(
    series: &TickSeries,
    model: &NoiseModel,
    exp: &FitResult,
    err: &FitResult,
    stage1: TestReport,
    variant: AvarVariant,
    cfg: &TestConfig,
) -> Result<SequenceResult> {
    let stage2 = test_from_fits(series, model, exp, err, variant, cfg)?;
    let (chosen_estimate, provenance) =
        if stage2.reject { (err.sigma2, Provenance::QmleErr) } else { (exp.sigma2, Provenance::QmleExp) };
    Ok(SequenceResult { chosen_estimate, provenance, stage1, stage2: Some(stage2) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn critical_values_and_p_values() {
        assert!((chi2_critical(0.05) - 3.841458820694124).abs() < 1e-12);
        assert!((chi2_critical(0.01) - 6.634896601021214).abs() < 1e-12);
        // erfc(√(s/2)) reference values
        for (s, p) in [(0.5, 0.4795001221869535), (3.841458820694124, 0.05), (10.0, 0.001565402258002549)] {
            assert!((chi2_sf(s) - p).abs() < 1e-12, "{s}");
        }
        assert_eq!(chi2_sf(0.0), 1.0);
    }

    #[test]
    fn decision_rule() {
        let r = hausman(0.1, 0.1, 1000, 0.04, 0.05).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!(!r.reject);
        assert_eq!(r.p_value, 1.0);
        let c = chi2_critical(0.05);
        assert!(!rejects(c, 0.05));
        assert!(!rejects(3.8414, 0.05));
        assert!(rejects(3.8415, 0.05));
        assert!(hausman(2.0, 0.0, 1, 1.0, 0.05).unwrap().reject);
        assert!(matches!(hausman(0.1, 0.1, 10, 0.0, 0.05), Err(Error::DegenerateVariance(_))));
        assert!(hausman(0.1, 0.1, 10, 1.0, 1.5).is_err());
    }

    #[test]
    fn reject_iff_p_below_level() {
        for s in [0.1f64, 2.0, 3.0, 3.9, 5.0, 12.0] {
            let r = hausman(s.sqrt(), 0.0, 1, 1.0, 0.05).unwrap();
            assert_eq!(r.reject, r.p_value < 0.05);
        }
    }

    #[test]
    fn variant_parsing() {
        assert_eq!("S3".parse::<AvarVariant>().unwrap(), AvarVariant::V3);
        assert_eq!("5".parse::<AvarVariant>().unwrap(), AvarVariant::V5);
        assert!("6".parse::<AvarVariant>().is_err());
        assert!(AvarVariant::try_from(0).is_err());
        assert_eq!(AvarVariant::V2.to_string(), "S2");
    }

    #[test]
    fn irregular_grid_warning() {
        let times = vec![0.0, 0.1, 0.35, 0.4, 0.8, 1.0];
        let s = TickSeries::new(times, vec![0.0; 6], Default::default(), 1.0).unwrap();
        assert!(grid_warning(&s, AvarVariant::V4).is_some());
        assert!(grid_warning(&s, AvarVariant::V2).is_none());
        assert_eq!(AvarVariant::auto(&s), AvarVariant::V2);
        let reg = TickSeries::regular(vec![0.0; 6], 1.0).unwrap();
        assert_eq!(AvarVariant::auto(&reg), AvarVariant::V5);
    }
}
