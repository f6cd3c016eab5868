//! Tick containers: observed log-prices on an annualized time axis with the
//! limit-order-book covariates recorded at each trade.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One trading day expressed in years.
pub const ONE_DAY: f64 = 1.0 / 252.0;
/// Seconds in a 9:30-16:00 session.
pub const SESSION_SECONDS: f64 = 23_400.0;

/// Limit-order-book variables aligned with the price observations.
///
/// Every present vector has one entry per observation (N+1 entries).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Covariates {
    /// Trade sign, +1 buyer initiated, -1 seller initiated.
    pub sign: Option<Vec<i8>>,
    pub volume: Option<Vec<f64>>,
    /// Duration since the previous trade, in years.
    pub duration: Option<Vec<f64>>,
    pub spread: Option<Vec<f64>>,
    pub depth: Option<Vec<f64>>,
    pub ofi: Option<Vec<f64>>,
}

/// Covariates at a single tick.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CovariateRow {
    pub sign: Option<f64>,
    pub volume: Option<f64>,
    pub duration: Option<f64>,
    pub spread: Option<f64>,
    pub depth: Option<f64>,
    pub ofi: Option<f64>,
}

impl Covariates {
    pub fn row(&self, i: usize) -> CovariateRow {
        CovariateRow {
            sign: self.sign.as_ref().map(|v| v[i] as f64),
            volume: self.volume.as_ref().map(|v| v[i]),
            duration: self.duration.as_ref().map(|v| v[i]),
            spread: self.spread.as_ref().map(|v| v[i]),
            depth: self.depth.as_ref().map(|v| v[i]),
            ofi: self.ofi.as_ref().map(|v| v[i]),
        }
    }

    /// Keep only the rows whose index is selected by `keep`.
    pub fn select(&self, keep: &[usize]) -> Covariates {
        fn pick<T: Copy>(v: &Option<Vec<T>>, keep: &[usize]) -> Option<Vec<T>> {
            v.as_ref().map(|v| keep.iter().map(|&i| v[i]).collect())
        }
        Covariates {
            sign: pick(&self.sign, keep),
            volume: pick(&self.volume, keep),
            duration: pick(&self.duration, keep),
            spread: pick(&self.spread, keep),
            depth: pick(&self.depth, keep),
            ofi: pick(&self.ofi, keep),
        }
    }
}

/// Observed log-prices `Z_{t_i}`, i = 0..N, at strictly increasing times in `[0, T]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickSeries {
    pub times: Vec<f64>,
    pub prices: Vec<f64>,
    pub covariates: Covariates,
    pub horizon: f64,
}

/// A broken [`TickSeries`] invariant, located at an observation index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    TooFewObservations,
    NonPositiveHorizon,
    LengthMismatch { field: &'static str },
    NonFinite { field: &'static str, index: usize },
    NegativeStartTime,
    TimeAfterHorizon { index: usize },
    NonMonotoneTime { index: usize },
    InvalidTradeSign { index: usize },
    NegativeVolume { index: usize },
    NonPositiveDuration { index: usize },
    NonPositiveSpread { index: usize },
    NegativeDepth { index: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TooFewObservations => write!(f, "TooFewObservations"),
            Violation::NonPositiveHorizon => write!(f, "NonPositiveHorizon"),
            Violation::LengthMismatch { field } => write!(f, "LengthMismatch({field})"),
            Violation::NonFinite { field, index } => write!(f, "NonFinite({field})@{index}"),
            Violation::NegativeStartTime => write!(f, "NegativeStartTime@0"),
            Violation::TimeAfterHorizon { index } => write!(f, "TimeAfterHorizon@{index}"),
            Violation::NonMonotoneTime { index } => write!(f, "NonMonotoneTime@{index}"),
            Violation::InvalidTradeSign { index } => write!(f, "InvalidTradeSign@{index}"),
            Violation::NegativeVolume { index } => write!(f, "NegativeVolume@{index}"),
            Violation::NonPositiveDuration { index } => write!(f, "NonPositiveDuration@{index}"),
            Violation::NonPositiveSpread { index } => write!(f, "NonPositiveSpread@{index}"),
            Violation::NegativeDepth { index } => write!(f, "NegativeDepth@{index}"),
        }
    }
}

impl TickSeries {
    /// Build a series and reject it if any invariant is broken.
    pub fn new(times: Vec<f64>, prices: Vec<f64>, covariates: Covariates, horizon: f64) -> Result<Self> {
        let series = TickSeries { times, prices, covariates, horizon };
        if series.prices.len() < 2 {
            return Err(Error::InsufficientData { needed: 2, got: series.prices.len() });
        }
        let violations = series.validate();
        if violations.is_empty() {
            Ok(series)
        } else {
            let shown: Vec<String> = violations.iter().take(5).map(|v| v.to_string()).collect();
            Err(Error::InvalidSeries(format!(
                "{} violation(s): {}",
                violations.len(),
                shown.join(", ")
            )))
        }
    }

    /// Regularly spaced series with no covariates; handy for tests and sub-sampling.
    pub fn regular(prices: Vec<f64>, horizon: f64) -> Result<Self> {
        let n = prices.len().saturating_sub(1).max(1);
        let times = (0..prices.len()).map(|i| horizon * i as f64 / n as f64).collect();
        Self::new(times, prices, Covariates::default(), horizon)
    }

    /// Number of returns N.
    pub fn n_returns(&self) -> usize {
        self.prices.len().saturating_sub(1)
    }

    /// Every invariant violation, in index order per rule. Empty iff the series is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let len = self.prices.len();
        if len < 2 {
            out.push(Violation::TooFewObservations);
        }
        if !(self.horizon > 0.0) {
            out.push(Violation::NonPositiveHorizon);
        }
        if self.times.len() != len {
            out.push(Violation::LengthMismatch { field: "times" });
            return out;
        }
        for (i, &p) in self.prices.iter().enumerate() {
            if !p.is_finite() {
                out.push(Violation::NonFinite { field: "price", index: i });
            }
        }
        if let Some(&t0) = self.times.first() {
            if t0 < 0.0 {
                out.push(Violation::NegativeStartTime);
            }
        }
        for i in 1..len {
            if !(self.times[i] > self.times[i - 1]) {
                out.push(Violation::NonMonotoneTime { index: i });
            }
        }
        for (i, &t) in self.times.iter().enumerate() {
            if !t.is_finite() {
                out.push(Violation::NonFinite { field: "time", index: i });
            } else if t > self.horizon {
                out.push(Violation::TimeAfterHorizon { index: i });
            }
        }

        let c = &self.covariates;
        if let Some(v) = &c.sign {
            check_len(&mut out, "sign", v.len(), len);
            for (i, &s) in v.iter().enumerate() {
                if s != 1 && s != -1 {
                    out.push(Violation::InvalidTradeSign { index: i });
                }
            }
        }
        let mut real = |field: &'static str, v: &Option<Vec<f64>>, ok: fn(f64) -> bool, bad: fn(usize) -> Violation| {
            if let Some(v) = v {
                check_len(&mut out, field, v.len(), len);
                for (i, &x) in v.iter().enumerate() {
                    if !x.is_finite() {
                        out.push(Violation::NonFinite { field, index: i });
                    } else if !ok(x) {
                        out.push(bad(i));
                    }
                }
            }
        };
        real("volume", &c.volume, |x| x >= 0.0, |i| Violation::NegativeVolume { index: i });
        real("duration", &c.duration, |x| x > 0.0, |i| Violation::NonPositiveDuration { index: i });
        real("spread", &c.spread, |x| x > 0.0, |i| Violation::NonPositiveSpread { index: i });
        real("depth", &c.depth, |x| x >= 0.0, |i| Violation::NegativeDepth { index: i });
        real("ofi", &c.ofi, |_| true, |i| Violation::NonFinite { field: "ofi", index: i });
        out
    }

    /// Fill the duration covariate from the time stamps, `D_i = t_i - t_{i-1}`,
    /// with `D_0` copied from `D_1`.
    pub fn with_durations_from_times(mut self) -> Self {
        let n = self.times.len();
        if n >= 2 {
            let mut d: Vec<f64> = Vec::with_capacity(n);
            d.push(self.times[1] - self.times[0]);
            for i in 1..n {
                d.push(self.times[i] - self.times[i - 1]);
            }
            self.covariates.duration = Some(d);
        }
        self
    }

    /// Observations whose indices are listed in `keep` (must be increasing).
    pub fn subsample(&self, keep: &[usize]) -> Result<TickSeries> {
        TickSeries::new(
            keep.iter().map(|&i| self.times[i]).collect(),
            keep.iter().map(|&i| self.prices[i]).collect(),
            self.covariates.select(keep),
            self.horizon,
        )
    }

    /// Relative dispersion of the spacings, `(max - min) / mean`.
    pub fn spacing_dispersion(&self) -> f64 {
        let spacings: Vec<f64> = self.times.windows(2).map(|w| w[1] - w[0]).collect();
        if spacings.is_empty() {
            return 0.0;
        }
        let mean = spacings.iter().sum::<f64>() / spacings.len() as f64;
        let (lo, hi) = spacings
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &d| (lo.min(d), hi.max(d)));
        (hi - lo) / mean
    }

    /// Spacings `t_i - t_{i-1}`, i = 1..N.
    pub fn spacings(&self) -> Vec<f64> {
        self.times.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

fn check_len(out: &mut Vec<Violation>, field: &'static str, got: usize, want: usize) {
    if got != want {
        out.push(Violation::LengthMismatch { field });
    }
}

/// Observed log-returns `Y_i = Z_{t_i} - Z_{t_{i-1}}` together with `Δ_N = T/N`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    pub values: Vec<f64>,
    pub mean_spacing: f64,
}

impl ReturnSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Cumulate the returns back onto a starting level.
    pub fn reconstruct(&self, initial: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.values.len() + 1);
        let mut level = initial;
        out.push(level);
        for &y in &self.values {
            level += y;
            out.push(level);
        }
        out
    }
}

pub fn returns(series: &TickSeries) -> Result<ReturnSeries> {
    let len = series.prices.len();
    if len < 2 {
        return Err(Error::InsufficientData { needed: 2, got: len });
    }
    let n = len - 1;
    Ok(ReturnSeries {
        values: diff(&series.prices),
        mean_spacing: series.horizon / n as f64,
    })
}

/// First differences.
pub fn diff(x: &[f64]) -> Vec<f64> {
    x.windows(2).map(|w| w[1] - w[0]).collect()
}
