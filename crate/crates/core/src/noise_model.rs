//! Parametric explicative part `φ(Q_i, θ)` of the microstructure noise.
//!
//! Every model except the non-linear signed spread is linear in θ, so it is
//! represented as a list of [`Regressor`]s: `φ(Q, θ) = Σ_k θ_k r_k(Q)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{CovariateRow, TickSeries};
use crate::error::{Error, Result};

/// Lower clamp for durations entering `1/D_i`, in years.
pub const MIN_DURATION: f64 = 1e-9;
/// Default half-width of the box for price-level parameters (Roll-type intercepts).
pub const LEVEL_BOUND: f64 = 1e-2;
/// Default half-width of the box for normalized parameters.
pub const UNIT_BOUND: f64 = 1.0;

/// A single covariate term of a linear explicative part.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regressor {
    /// `I_i`
    Sign,
    /// `I_i V_i`
    SignedVolume,
    /// `I_i / D_i`
    SignedInvDuration,
    /// `I_i S_i / 2`
    SignedHalfSpread,
    /// `I_i S_i`
    SignedSpread,
    /// `I_i QD_i`
    SignedDepth,
    /// `OFI_i`
    Ofi,
}

impl Regressor {
    pub fn covariates(self) -> &'static [&'static str] {
        match self {
            Regressor::Sign => &["I"],
            Regressor::SignedVolume => &["I", "V"],
            Regressor::SignedInvDuration => &["I", "D"],
            Regressor::SignedHalfSpread | Regressor::SignedSpread => &["I", "S"],
            Regressor::SignedDepth => &["I", "QD"],
            Regressor::Ofi => &["OFI"],
        }
    }

    /// Default box for the coefficient of this term.
    pub fn default_bound(self) -> (f64, f64) {
        match self {
            Regressor::Sign => (-LEVEL_BOUND, LEVEL_BOUND),
            _ => (-UNIT_BOUND, UNIT_BOUND),
        }
    }

    fn eval(self, row: &CovariateRow) -> std::result::Result<f64, &'static str> {
        let sign = || row.sign.ok_or("I");
        Ok(match self {
            Regressor::Sign => sign()?,
            Regressor::SignedVolume => sign()? * row.volume.ok_or("V")?,
            Regressor::SignedInvDuration => sign()? / row.duration.ok_or("D")?.max(MIN_DURATION),
            Regressor::SignedHalfSpread => 0.5 * sign()? * row.spread.ok_or("S")?,
            Regressor::SignedSpread => sign()? * row.spread.ok_or("S")?,
            Regressor::SignedDepth => sign()? * row.depth.ok_or("QD")?,
            Regressor::Ofi => row.ofi.ok_or("OFI")?,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Regressor::Sign => "sign",
            Regressor::SignedVolume => "signed-volume",
            Regressor::SignedInvDuration => "signed-inv-duration",
            Regressor::SignedHalfSpread => "signed-half-spread",
            Regressor::SignedSpread => "signed-spread",
            Regressor::SignedDepth => "signed-depth",
            Regressor::Ofi => "ofi",
        }
    }
}

impl FromStr for Regressor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "sign" => Regressor::Sign,
            "signed-volume" => Regressor::SignedVolume,
            "signed-inv-duration" => Regressor::SignedInvDuration,
            "signed-half-spread" => Regressor::SignedHalfSpread,
            "signed-spread" => Regressor::SignedSpread,
            "signed-depth" => Regressor::SignedDepth,
            "ofi" => Regressor::Ofi,
            other => return Err(Error::Config(format!("unknown regressor `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ModelKind {
    Null,
    Roll,
    GlostenHarris,
    SignedTimestamp,
    SignedSpread,
    SignedQuotedDepth,
    OrderFlowImbalance,
    NLSignedSpread,
    General,
    /// User-composed linear combination of regressors.
    Linear(Vec<Regressor>),
}

impl ModelKind {
    /// Regressors of a linear model; `None` for the non-linear spread model.
    pub fn regressors(&self) -> Option<Vec<Regressor>> {
        use Regressor::*;
        Some(match self {
            ModelKind::Null => vec![],
            ModelKind::Roll => vec![Sign],
            ModelKind::GlostenHarris => vec![Sign, SignedVolume],
            ModelKind::SignedTimestamp => vec![SignedInvDuration],
            ModelKind::SignedSpread => vec![SignedHalfSpread],
            ModelKind::SignedQuotedDepth => vec![SignedDepth],
            ModelKind::OrderFlowImbalance => vec![Ofi],
            ModelKind::General => vec![Sign, SignedVolume, SignedInvDuration, SignedSpread, SignedDepth, Ofi],
            ModelKind::Linear(r) => r.clone(),
            ModelKind::NLSignedSpread => return None,
        })
    }

    pub fn dim(&self) -> usize {
        match self.regressors() {
            Some(r) => r.len(),
            None => 1,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::Null => write!(f, "null"),
            ModelKind::Roll => write!(f, "roll"),
            ModelKind::GlostenHarris => write!(f, "glosten-harris"),
            ModelKind::SignedTimestamp => write!(f, "signed-timestamp"),
            ModelKind::SignedSpread => write!(f, "signed-spread"),
            ModelKind::SignedQuotedDepth => write!(f, "signed-quoted-depth"),
            ModelKind::OrderFlowImbalance => write!(f, "order-flow-imbalance"),
            ModelKind::NLSignedSpread => write!(f, "nl-signed-spread"),
            ModelKind::General => write!(f, "general"),
            ModelKind::Linear(r) => {
                let names: Vec<&str> = r.iter().map(|r| r.name()).collect();
                write!(f, "linear:{}", names.join("+"))
            }
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    /// Accepts the catalogue names (`roll`, `signed-spread`, ...) and
    /// `linear:<regressor>+<regressor>+...` for a composed model.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if let Some(rest) = s.strip_prefix("linear:") {
            let terms = rest.split('+').map(Regressor::from_str).collect::<Result<Vec<_>>>()?;
            return Ok(ModelKind::Linear(terms));
        }
        Ok(match s.as_str() {
            "null" => ModelKind::Null,
            "roll" => ModelKind::Roll,
            "glosten-harris" | "gh" => ModelKind::GlostenHarris,
            "signed-timestamp" => ModelKind::SignedTimestamp,
            "signed-spread" | "spread" => ModelKind::SignedSpread,
            "signed-quoted-depth" => ModelKind::SignedQuotedDepth,
            "order-flow-imbalance" | "ofi" => ModelKind::OrderFlowImbalance,
            "nl-signed-spread" => ModelKind::NLSignedSpread,
            "general" => ModelKind::General,
            other => return Err(Error::Config(format!("unknown noise model `{other}`"))),
        })
    }
}

impl TryFrom<String> for ModelKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ModelKind> for String {
    fn from(kind: ModelKind) -> String {
        kind.to_string()
    }
}

/// A noise model together with its compact parameter box Θ.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    kind: ModelKind,
    regressors: Option<Vec<Regressor>>,
    bounds: Vec<(f64, f64)>,
}

impl NoiseModel {
    pub fn new(kind: ModelKind) -> Self {
        let regressors = kind.regressors();
        let bounds = match &regressors {
            Some(r) => r.iter().map(|r| r.default_bound()).collect(),
            None => vec![(-UNIT_BOUND, UNIT_BOUND)],
        };
        NoiseModel { kind, regressors, bounds }
    }

    pub fn null() -> Self {
        Self::new(ModelKind::Null)
    }

    pub fn roll() -> Self {
        Self::new(ModelKind::Roll)
    }

    pub fn signed_spread() -> Self {
        Self::new(ModelKind::SignedSpread)
    }

    pub fn with_bounds(mut self, bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: bounds.len() });
        }
        if let Some((i, _)) = bounds.iter().enumerate().find(|(_, (lo, hi))| !(hi > lo)) {
            return Err(Error::Config(format!("parameter box for coordinate {i} has no volume")));
        }
        self.bounds = bounds;
        Ok(self)
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn is_linear(&self) -> bool {
        self.regressors.is_some()
    }

    pub fn regressors(&self) -> Option<&[Regressor]> {
        self.regressors.as_deref()
    }

    /// Names of the LOB variables the model reads.
    pub fn required_covariates(&self) -> Vec<&'static str> {
        let mut out: Vec<&'static str> = Vec::new();
        let lists: Vec<&'static [&'static str]> = match &self.regressors {
            Some(r) => r.iter().map(|r| r.covariates()).collect(),
            None => vec![&["I", "S"]],
        };
        for list in lists {
            for c in list {
                if !out.contains(c) {
                    out.push(c);
                }
            }
        }
        out
    }

    /// A parameter value with `φ(·, θ) ≡ 0`, when the model has one (all catalogue models do).
    pub fn zero_theta(&self) -> Vec<f64> {
        vec![0.0; self.dim()]
    }

    pub fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: theta.len() });
        }
        for (i, (&t, &(lo, hi))) in theta.iter().zip(&self.bounds).enumerate() {
            let slack = 1e-12 * (hi - lo);
            if !(t >= lo - slack && t <= hi + slack) {
                return Err(Error::OutOfBounds { index: i, value: t, lo, hi });
            }
        }
        Ok(())
    }

    fn missing(&self, covariate: &'static str) -> Error {
        Error::MissingCovariate { model: self.kind.to_string(), covariate }
    }

    /// `φ(Q_i, θ)` at one tick.
    pub fn phi(&self, row: &CovariateRow, theta: &[f64]) -> Result<f64> {
        self.check_theta(theta)?;
        self.phi_unchecked(row, theta)
    }

    fn phi_unchecked(&self, row: &CovariateRow, theta: &[f64]) -> Result<f64> {
        match &self.regressors {
            Some(regs) => {
                let mut acc = 0.0;
                for (r, &t) in regs.iter().zip(theta) {
                    acc += t * r.eval(row).map_err(|c| self.missing(c))?;
                }
                Ok(acc)
            }
            None => {
                let sign = row.sign.ok_or_else(|| self.missing("I"))?;
                let spread = row.spread.ok_or_else(|| self.missing("S"))?;
                let x = spread * theta[0];
                if !(1.0 + x > 0.0) {
                    return Err(Error::OutOfBounds { index: 0, value: theta[0], lo: -1.0 / spread, hi: f64::INFINITY });
                }
                Ok(sign * x / (1.0 + x))
            }
        }
    }

    /// `∂φ(Q_i, θ)/∂θ` at one tick.
    pub fn phi_grad(&self, row: &CovariateRow, theta: &[f64]) -> Result<Vec<f64>> {
        self.check_theta(theta)?;
        let mut out = vec![0.0; self.dim()];
        self.phi_grad_into(row, theta, &mut out)?;
        Ok(out)
    }

    fn phi_grad_into(&self, row: &CovariateRow, theta: &[f64], out: &mut [f64]) -> Result<()> {
        match &self.regressors {
            Some(regs) => {
                for (o, r) in out.iter_mut().zip(regs) {
                    *o = r.eval(row).map_err(|c| self.missing(c))?;
                }
            }
            None => {
                let sign = row.sign.ok_or_else(|| self.missing("I"))?;
                let spread = row.spread.ok_or_else(|| self.missing("S"))?;
                let denom = 1.0 + spread * theta[0];
                if !(denom > 0.0) {
                    return Err(Error::OutOfBounds { index: 0, value: theta[0], lo: -1.0 / spread, hi: f64::INFINITY });
                }
                out[0] = sign * spread / (denom * denom);
            }
        }
        Ok(())
    }

    /// `φ(Q_i, θ)` for i = 0..N.
    pub fn phi_series(&self, series: &TickSeries, theta: &[f64]) -> Result<Vec<f64>> {
        self.check_theta(theta)?;
        let len = series.prices.len();
        if self.dim() == 0 {
            return Ok(vec![0.0; len]);
        }
        (0..len).map(|i| self.phi_unchecked(&series.covariates.row(i), theta)).collect()
    }

    /// Rows of `∂φ(Q_i, θ)/∂θ`, one vector per coordinate (column-major), i = 0..N.
    pub fn phi_grad_series(&self, series: &TickSeries, theta: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.check_theta(theta)?;
        let len = series.prices.len();
        let d = self.dim();
        let mut cols = vec![vec![0.0; len]; d];
        let mut buf = vec![0.0; d];
        for i in 0..len {
            self.phi_grad_into(&series.covariates.row(i), theta, &mut buf)?;
            for (col, &g) in cols.iter_mut().zip(&buf) {
                col[i] = g;
            }
        }
        Ok(cols)
    }
}

impl fmt::Display for NoiseModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.kind.fmt(f)
    }
}

/// Returns of the explicative part, `μ_i(θ) = φ(Q_i, θ) - φ(Q_{i-1}, θ)`, i = 1..N.
pub fn mu(model: &NoiseModel, series: &TickSeries, theta: &[f64]) -> Result<Vec<f64>> {
    Ok(crate::data::diff(&model.phi_series(series, theta)?))
}
