//! Synthetic trading days: a stochastic-volatility efficient price with an
//! intraday U-shape, jumps in price and volatility, random trade times,
//! order book covariates and residual noise.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Covariates, TickSeries, ONE_DAY, SESSION_SECONDS};
use crate::error::{Error, Result};
use crate::noise_model::{ModelKind, NoiseModel};

/// One second of a trading session, in years.
pub const SECOND: f64 = ONE_DAY / SESSION_SECONDS;
/// Smallest simulated spread.
pub const SPREAD_FLOOR: f64 = 1e-9;
/// The CIR variance is floored at this fraction of its long-run mean.
pub const VARIANCE_FLOOR_RATIO: f64 = 1e-6;

/// Deterministic intraday factor `σ_U`, with an optional downward jump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Seasonality {
    pub c: f64,
    pub a: f64,
    pub d: f64,
    pub open_decay: f64,
    pub close_decay: f64,
    /// Relative size of the volatility jump.
    pub jump_ratio: f64,
    /// Draw a jump time uniformly on the day.
    pub vol_jump: bool,
}

impl Default for Seasonality {
    fn default() -> Self {
        Seasonality { c: 0.75, a: 0.25, d: 0.89, open_decay: 10.0, close_decay: 10.0, jump_ratio: 0.5, vol_jump: true }
    }
}

impl Seasonality {
    pub fn flat() -> Self {
        Seasonality { c: 1.0, a: 0.0, d: 0.0, open_decay: 0.0, close_decay: 0.0, jump_ratio: 0.0, vol_jump: false }
    }

    /// Factor before any volatility jump at relative time `u = t/T`.
    pub fn base(&self, u: f64) -> f64 {
        self.c + self.a * (-self.open_decay * u).exp() + self.d * (-self.close_decay * (1.0 - u)).exp()
    }

    /// Factor at relative time `u`, given the relative jump time.
    pub fn level(&self, u: f64, jump_at: Option<f64>) -> f64 {
        let b = self.base(u);
        match jump_at {
            Some(tau) if u >= tau => b - self.jump_ratio * self.base(tau),
            _ => b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Heston {
    pub alpha: f64,
    pub sigma2_bar: f64,
    pub delta: f64,
    /// Correlation between the price and variance Brownian motions.
    pub leverage: f64,
    /// Start from the stationary Gamma law instead of `sigma2_bar`.
    pub stationary_start: bool,
    pub seasonality: Seasonality,
}

impl Default for Heston {
    fn default() -> Self {
        Heston { alpha: 5.0, sigma2_bar: 0.1, delta: 0.4, leverage: -0.75, stationary_start: true, seasonality: Seasonality::default() }
    }
}

impl Heston {
    /// `2ασ̄² > δ²`, under which the CIR variance never reaches zero.
    pub fn feller(&self) -> bool {
        2.0 * self.alpha * self.sigma2_bar > self.delta * self.delta
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Volatility {
    Constant { sigma2: f64 },
    Heston(Heston),
}

impl Volatility {
    /// Long-run variance level.
    pub fn level(&self) -> f64 {
        match self {
            Volatility::Constant { sigma2 } => *sigma2,
            Volatility::Heston(h) => h.sigma2_bar,
        }
    }
}

/// Compound Poisson price jumps with symmetric signs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriceJumps {
    pub enabled: bool,
    /// Absolute jump size; defaults to `sqrt(T σ̄²)`.
    pub size: Option<f64>,
    /// Expected number of jumps over the horizon.
    pub mean_count: f64,
}

impl Default for PriceJumps {
    fn default() -> Self {
        PriceJumps { enabled: false, size: None, mean_count: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum Sampling {
    /// `n` equal spacings over the horizon.
    Regular { n: usize },
    /// Spacings `α(t) · scale · E` with `E` standard exponential.
    Irregular { beta: [f64; 3], scale_seconds: f64 },
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling::Irregular { beta: [-0.84, -0.26, -0.39], scale_seconds: 0.5 }
    }
}

impl Sampling {
    /// Regular grid with the given spacing in seconds.
    pub fn every_seconds(seconds: f64, horizon: f64) -> Sampling {
        Sampling::Regular { n: (horizon / (seconds * SECOND)).round().max(1.0) as usize }
    }
}

/// Multiplier of the expected spacing at relative time `u`; its inverse, the
/// arrival rate, is U-shaped over the day.
pub fn spacing_factor(beta: [f64; 3], u: f64) -> f64 {
    let (e1, e2, e3) = (beta[0].exp(), beta[1].exp(), beta[2].exp());
    let centre = e2 / (e2 + e3);
    1.0 / (e1 + (e2 + e3).powi(2) * (u - centre).powi(2))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Information {
    pub model: ModelKind,
    pub theta: Vec<f64>,
    /// Lag-one autocorrelation of the trade signs.
    pub sign_autocorr: f64,
    pub spread_mean: f64,
    pub spread_var: f64,
    pub spread_corr: f64,
}

impl Default for Information {
    fn default() -> Self {
        Information {
            model: ModelKind::Roll,
            theta: vec![1e-4],
            sign_autocorr: 0.3,
            spread_mean: 1.25e-4,
            spread_var: 1e-10,
            spread_corr: 0.6,
        }
    }
}

impl Information {
    pub fn roll() -> Self {
        Information::default()
    }

    pub fn signed_spread() -> Self {
        Information { model: ModelKind::SignedSpread, theta: vec![0.8], ..Information::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime")]
pub enum Noise {
    H0,
    /// Gaussian white noise with variance `a2`.
    H1 { a2: f64 },
    /// Heteroskedastic noise correlated with the returns and the trade signs.
    H2 { a2: f64 },
}

impl Noise {
    pub fn a2(&self) -> f64 {
        match self {
            Noise::H0 => 0.0,
            Noise::H1 { a2 } | Noise::H2 { a2 } => *a2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Constant,
    SvNoJump,
    SvJump,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "constant" => Ok(Preset::Constant),
            "sv-no-jump" => Ok(Preset::SvNoJump),
            "sv-jump" => Ok(Preset::SvJump),
            other => Err(Error::Config(format!("unknown scenario `{other}`"))),
        }
    }
}

impl std::fmt::Display for Preset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Preset::Constant => "constant",
            Preset::SvNoJump => "sv-no-jump",
            Preset::SvJump => "sv-jump",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub horizon: f64,
    pub seed: u64,
    /// Largest step of the latent path, in seconds.
    pub fine_step_seconds: f64,
    /// Span of the efficient return that drives the H2 noise sign, in seconds.
    /// Observations closer together use the return since the previous one.
    pub noise_return_seconds: f64,
    pub drift: f64,
    pub jumps: PriceJumps,
    pub volatility: Volatility,
    pub sampling: Sampling,
    pub info: Information,
    pub noise: Noise,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig::preset(Preset::SvJump)
    }
}

impl ScenarioConfig {
    pub fn preset(preset: Preset) -> Self {
        let base = ScenarioConfig {
            horizon: ONE_DAY,
            seed: 0,
            fine_step_seconds: 0.1,
            noise_return_seconds: 1.0,
            drift: 0.03,
            jumps: PriceJumps::default(),
            volatility: Volatility::Heston(Heston::default()),
            sampling: Sampling::default(),
            info: Information::default(),
            noise: Noise::H0,
        };
        match preset {
            Preset::Constant => ScenarioConfig { volatility: Volatility::Constant { sigma2: 0.1 }, ..base },
            Preset::SvNoJump => base,
            Preset::SvJump => ScenarioConfig { jumps: PriceJumps { enabled: true, ..PriceJumps::default() }, ..base },
        }
    }

    pub fn with_noise(mut self, noise: Noise) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_sampling(mut self, sampling: Sampling) -> Self {
        self.sampling = sampling;
        self
    }

    pub fn with_info(mut self, info: Information) -> Self {
        self.info = info;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn jump_size(&self) -> f64 {
        self.jumps.size.unwrap_or_else(|| (self.horizon * self.volatility.level()).sqrt())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("scenario: {what}")));
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.horizon) || !positive(self.fine_step_seconds) || !positive(self.noise_return_seconds) || !self.drift.is_finite() {
            return bad("horizon, fine step, noise return span and drift must be finite, the first three positive");
        }
        match self.volatility {
            Volatility::Constant { sigma2 } if !positive(sigma2) => return bad("sigma2 must be positive"),
            Volatility::Heston(h) => {
                if !positive(h.alpha) || !positive(h.sigma2_bar) || !(h.delta.is_finite() && h.delta >= 0.0) {
                    return bad("alpha and sigma2_bar must be positive, delta non-negative");
                }
                if !(h.leverage.abs() <= 1.0) {
                    return bad("leverage must lie in [-1, 1]");
                }
                let s = h.seasonality;
                if !(0.0..1.0).contains(&s.jump_ratio) {
                    return bad("volatility jump ratio must lie in [0, 1)");
                }
                if (0..=100).any(|k| s.base(k as f64 / 100.0) <= 0.0) {
                    return bad("seasonality factor must stay positive");
                }
                if !h.feller() {
                    log::warn!("CIR parameters violate 2ασ̄² > δ²; the variance floor will be hit");
                }
            }
            _ => {}
        }
        if self.jumps.enabled && (!(self.jumps.mean_count >= 0.0) || !self.jump_size().is_finite()) {
            return bad("jump intensity must be non-negative and the size finite");
        }
        match self.sampling {
            Sampling::Regular { n: 0 } => return bad("regular grid needs n >= 1"),
            Sampling::Irregular { beta, scale_seconds } if !positive(scale_seconds) || beta.iter().any(|b| !b.is_finite()) => {
                return bad("irregular sampling needs finite beta and a positive scale")
            }
            _ => {}
        }
        let info = &self.info;
        if !(info.sign_autocorr.abs() < 1.0) || !(info.spread_corr.abs() < 1.0) {
            return bad("autocorrelations must lie in (-1, 1)");
        }
        if !positive(info.spread_mean) || !positive(info.spread_var) {
            return bad("spread mean and variance must be positive");
        }
        if info.theta.len() != info.model.dim() {
            return Err(Error::DimensionMismatch { expected: info.model.dim(), got: info.theta.len() });
        }
        let a2 = self.noise.a2();
        if !(a2.is_finite() && a2 >= 0.0) {
            return bad("noise variance must be non-negative");
        }
        Ok(())
    }
}

/// What the simulator knows and the estimators do not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Efficient log-price at the observation times.
    pub efficient: Vec<f64>,
    pub phi: Vec<f64>,
    pub noise: Vec<f64>,
    /// `∫σ²` over the horizon.
    pub integrated_variance: f64,
    /// `∫σ⁴` over the horizon.
    pub integrated_quarticity: f64,
    pub jump_times: Vec<f64>,
    pub jump_sizes: Vec<f64>,
    pub vol_jump_time: Option<f64>,
    /// Smallest spot variance along the latent grid.
    pub min_spot_variance: f64,
    pub theta: Vec<f64>,
    /// Mean squared residual noise.
    pub realized_a2: f64,
}

impl GroundTruth {
    pub fn jump_variation(&self) -> f64 {
        self.jump_sizes.iter().map(|j| j * j).sum()
    }

    pub fn quadratic_variation(&self) -> f64 {
        self.integrated_variance + self.jump_variation()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub series: TickSeries,
    pub truth: GroundTruth,
}

/// Random stream of replication `rep` of a study seeded with `seed`.
pub fn replication_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ rep)
}

pub fn simulate_scenario(cfg: &ScenarioConfig) -> Result<Simulation> {
    simulate_with(cfg, &mut ChaCha8Rng::seed_from_u64(cfg.seed))
}

pub fn simulate_replication(cfg: &ScenarioConfig, rep: u64) -> Result<Simulation> {
    simulate_with(cfg, &mut replication_rng(cfg.seed, rep))
}

pub fn simulate_with<R: Rng>(cfg: &ScenarioConfig, rng: &mut R) -> Result<Simulation> {
    cfg.validate()?;
    let times = simulate_times(&cfg.sampling, cfg.horizon, rng);
    let latent = simulate_efficient(cfg, &times, rng);
    let n = times.len();
    let mut covariates = simulate_info(&cfg.info, n, rng);
    let mut durations = Vec::with_capacity(n);
    for i in 0..n {
        let d = if i == 0 { times.get(1).map_or(cfg.horizon, |t1| t1 - times[0]) } else { times[i] - times[i - 1] };
        durations.push(d);
    }
    covariates.duration = Some(durations);

    let model = NoiseModel::new(cfg.info.model.clone());
    let phi = (0..n).map(|i| model.phi(&covariates.row(i), &cfg.info.theta)).collect::<Result<Vec<f64>>>()?;
    let signs = covariates.sign.clone().unwrap_or_default();
    let noise = simulate_noise(&cfg.noise, &signs, &latent.recent_return, rng);
    let prices: Vec<f64> = (0..n).map(|i| latent.x[i] + phi[i] + noise[i]).collect();
    let realized_a2 = noise.iter().map(|e| e * e).sum::<f64>() / n as f64;
    let series = TickSeries::new(times, prices, covariates, cfg.horizon)?;
    Ok(Simulation {
        series,
        truth: GroundTruth {
            efficient: latent.x,
            phi,
            noise,
            integrated_variance: latent.integrated_variance,
            integrated_quarticity: latent.integrated_quarticity,
            jump_times: latent.jump_times,
            jump_sizes: latent.jump_sizes,
            vol_jump_time: latent.vol_jump_time,
            min_spot_variance: latent.min_spot_variance,
            theta: cfg.info.theta.clone(),
            realized_a2,
        },
    })
}

/// Observation times in `[0, T]`, starting at 0.
pub fn simulate_times<R: Rng>(sampling: &Sampling, horizon: f64, rng: &mut R) -> Vec<f64> {
    match *sampling {
        Sampling::Regular { n } => (0..=n).map(|i| horizon * i as f64 / n as f64).collect(),
        Sampling::Irregular { beta, scale_seconds } => {
            let scale = scale_seconds * SECOND;
            let mut times = vec![0.0];
            let mut t = 0.0;
            loop {
                let e: f64 = Exp1.sample(rng);
                t += spacing_factor(beta, t / horizon) * scale * e;
                if t > horizon {
                    break;
                }
                times.push(t);
            }
            times
        }
    }
}

/// Trade signs (two-state Markov chain), AR(1) spreads and auxiliary book
/// variables for `n` observations. Durations are left to the caller.
pub fn simulate_info<R: Rng>(info: &Information, n: usize, rng: &mut R) -> Covariates {
    let stay = 0.5 * (1.0 + info.sign_autocorr);
    let mut sign = Vec::with_capacity(n);
    let mut current: i8 = if rng.gen_bool(0.5) { 1 } else { -1 };
    for i in 0..n {
        if i > 0 && !rng.gen_bool(stay) {
            current = -current;
        }
        sign.push(current);
    }

    let sd = info.spread_var.sqrt();
    let innovation = (info.spread_var * (1.0 - info.spread_corr * info.spread_corr)).sqrt();
    let mut spread = Vec::with_capacity(n);
    let mut level = info.spread_mean + sd * normal(rng);
    for i in 0..n {
        if i > 0 {
            level = info.spread_mean + info.spread_corr * (level - info.spread_mean) + innovation * normal(rng);
        }
        spread.push(level.max(SPREAD_FLOOR));
    }

    let volume = (0..n).map(|_| normal(rng).exp()).collect();
    let depth = (0..n).map(|_| normal(rng).exp()).collect();
    let ofi = (0..n).map(|_| normal(rng)).collect();
    Covariates { sign: Some(sign), volume: Some(volume), duration: None, spread: Some(spread), depth: Some(depth), ofi: Some(ofi) }
}

/// Residual noise at each observation. `dx[i]` is the efficient return ending
/// at observation `i`; scenarios pass the move over a fixed recent span, so the
/// noise does not depend on how sparsely the day is sampled.
pub fn simulate_noise<R: Rng>(noise: &Noise, signs: &[i8], dx: &[f64], rng: &mut R) -> Vec<f64> {
    let n = dx.len();
    match *noise {
        Noise::H0 => vec![0.0; n],
        Noise::H1 { a2 } => {
            let a = a2.sqrt();
            (0..n).map(|_| a * normal(rng)).collect()
        }
        Noise::H2 { a2 } => {
            let a = a2.sqrt();
            (0..n)
                .map(|i| {
                    let [n1, n2, n3, n4] = [normal(rng), normal(rng), normal(rng), normal(rng)];
                    let sign_dx = if dx[i] > 0.0 {
                        1.0
                    } else if dx[i] < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                    let sign_trade = signs.get(i).map_or(0.0, |&s| s as f64);
                    (a / 3f64.sqrt() + a2 * n1) * (sign_dx * n2.abs() + sign_trade * n3.abs() + n4)
                })
                .collect()
        }
    }
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

struct Latent {
    x: Vec<f64>,
    /// Efficient return over the recent span ending at each observation.
    recent_return: Vec<f64>,
    integrated_variance: f64,
    integrated_quarticity: f64,
    jump_times: Vec<f64>,
    jump_sizes: Vec<f64>,
    vol_jump_time: Option<f64>,
    min_spot_variance: f64,
}

fn simulate_efficient<R: Rng>(cfg: &ScenarioConfig, times: &[f64], rng: &mut R) -> Latent {
    let horizon = cfg.horizon;
    let b = cfg.drift;
    // integrate up to the horizon even when the last trade falls before it
    let mut nodes = times.to_vec();
    let end = *nodes.last().unwrap();
    if end < horizon {
        nodes.push(horizon);
    }
    let mut x = Vec::with_capacity(nodes.len());
    x.push(0.0);
    let mut recent_return = Vec::with_capacity(nodes.len());
    recent_return.push(0.0);
    let h_max = cfg.fine_step_seconds * SECOND;
    let window = cfg.noise_return_seconds * SECOND;
    let (mut iv, mut iq) = (0.0, 0.0);
    let mut min_var = f64::INFINITY;
    let mut vol_jump_time = None;

    match cfg.volatility {
        Volatility::Constant { sigma2 } => {
            let sd = sigma2.sqrt();
            for w in nodes.windows(2) {
                let dt = w[1] - w[0];
                let head = (dt - window).max(0.0);
                let tail = dt - head;
                let mut level = *x.last().unwrap();
                if head > 0.0 {
                    level += b * head + sd * head.sqrt() * normal(rng);
                }
                let r = b * tail + sd * tail.sqrt() * normal(rng);
                x.push(level + r);
                recent_return.push(r);
            }
            let span = nodes.last().unwrap() - nodes[0];
            iv = sigma2 * span;
            iq = sigma2 * sigma2 * span;
            min_var = sigma2;
        }
        Volatility::Heston(h) => {
            let season = h.seasonality;
            let tau = season.vol_jump.then(|| rng.gen::<f64>());
            vol_jump_time = tau.map(|u| u * horizon);
            let floor = VARIANCE_FLOOR_RATIO * h.sigma2_bar;
            let mut v = if h.stationary_start && h.delta > 0.0 {
                let shape = 2.0 * h.alpha * h.sigma2_bar / (h.delta * h.delta);
                let scale = h.delta * h.delta / (2.0 * h.alpha);
                Gamma::new(shape, scale).expect("validated CIR parameters").sample(rng)
            } else {
                h.sigma2_bar
            };
            v = v.max(floor);
            let ortho = (1.0 - h.leverage * h.leverage).max(0.0).sqrt();
            let mut level = 0.0;
            for w in nodes.windows(2) {
                let dt = w[1] - w[0];
                let tail = dt.min(window);
                let mut start = w[0];
                let mut r = 0.0;
                for (len, recent) in [(dt - tail, false), (tail, true)] {
                    if len <= 0.0 {
                        continue;
                    }
                    let m = (len / h_max).ceil().max(1.0) as usize;
                    let step = len / m as f64;
                    let root = step.sqrt();
                    for k in 0..m {
                        let t = start + k as f64 * step;
                        let su = season.level(t / horizon, tau);
                        let spot = su * su * v;
                        min_var = min_var.min(spot);
                        let z1 = normal(rng);
                        let z2 = normal(rng);
                        let dx = b * step + spot.sqrt() * root * z1;
                        level += dx;
                        if recent {
                            r += dx;
                        }
                        iv += spot * step;
                        iq += spot * spot * step;
                        let next = v + h.alpha * (h.sigma2_bar - v) * step + h.delta * v.sqrt() * root * (h.leverage * z1 + ortho * z2);
                        v = next.max(floor);
                    }
                    start += len;
                }
                x.push(level);
                recent_return.push(r);
            }
        }
    }

    let (mut jump_times, mut jump_sizes) = (Vec::new(), Vec::new());
    if cfg.jumps.enabled && cfg.jumps.mean_count > 0.0 {
        let count = Poisson::new(cfg.jumps.mean_count).expect("positive intensity").sample(rng) as usize;
        let size = cfg.jump_size();
        let mut jumps: Vec<(f64, f64)> = (0..count)
            .map(|_| (rng.gen::<f64>() * horizon, if rng.gen_bool(0.5) { size } else { -size }))
            .collect();
        jumps.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut acc = 0.0;
        let mut next = 0;
        for (i, t) in nodes.iter().enumerate() {
            while next < jumps.len() && jumps[next].0 <= *t {
                acc += jumps[next].1;
                next += 1;
            }
            x[i] += acc;
        }
        jump_times = jumps.iter().map(|j| j.0).collect();
        jump_sizes = jumps.iter().map(|j| j.1).collect();
    }
    x.truncate(times.len());
    recent_return.truncate(times.len());
    Latent {
        x,
        recent_return,
        integrated_variance: iv,
        integrated_quarticity: iq,
        jump_times,
        jump_sizes,
        vol_jump_time,
        min_spot_variance: min_var,
    }
}
