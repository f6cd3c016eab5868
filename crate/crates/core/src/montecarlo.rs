//! Replication studies on simulated days: rejection frequencies of the
//! residual-noise tests and the accuracy of competing volatility estimators.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hausman::{select_from_fits, test_from_fits, AvarVariant, Provenance, TestConfig};
use crate::noise_model::{ModelKind, NoiseModel};
use crate::qmle::{efficient_price, fit_err, fit_exp, fit_null, NoiseSpace};
use crate::simulator::{simulate_replication, Information, Noise, Preset, Sampling, ScenarioConfig, Simulation};
use crate::stats::{proportion_stderr, ErrorSummary};
use crate::TickSeries;

/// Environment variable overriding the worker count.
pub const THREADS_ENV: &str = "LOBNOISE_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Frequency {
    Tick,
    Seconds(u32),
}

impl Frequency {
    pub fn sampling(self, horizon: f64) -> Sampling {
        match self {
            Frequency::Tick => Sampling::default(),
            Frequency::Seconds(s) => Sampling::every_seconds(s as f64, horizon),
        }
    }
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Frequency::Tick => f.write_str("tick"),
            Frequency::Seconds(s) => write!(f, "{s}s"),
        }
    }
}

impl FromStr for Frequency {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "tick" {
            return Ok(Frequency::Tick);
        }
        s.strip_suffix('s')
            .and_then(|n| n.parse::<u32>().ok())
            .filter(|&n| n > 0)
            .map(Frequency::Seconds)
            .ok_or_else(|| Error::Config(format!("unknown frequency `{s}` (use tick or e.g. 15s)")))
    }
}

impl TryFrom<String> for Frequency {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Frequency> for String {
    fn from(f: Frequency) -> String {
        f.to_string()
    }
}

/// Residual noise of a study cell. `Mix` alternates noise-free days (even
/// replications) with white-noise days of variance `a2` (odd replications).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum NoiseSetting {
    H0,
    H1(f64),
    H2(f64),
    Mix(f64),
}

impl NoiseSetting {
    pub fn for_replication(self, rep: u64) -> Noise {
        match self {
            NoiseSetting::H0 => Noise::H0,
            NoiseSetting::H1(a2) => Noise::H1 { a2 },
            NoiseSetting::H2(a2) => Noise::H2 { a2 },
            NoiseSetting::Mix(a2) => {
                if rep.is_multiple_of(2) {
                    Noise::H0
                } else {
                    Noise::H1 { a2 }
                }
            }
        }
    }
}

impl fmt::Display for NoiseSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseSetting::H0 => f.write_str("H0"),
            NoiseSetting::H1(a2) => write!(f, "H1:{a2:e}"),
            NoiseSetting::H2(a2) => write!(f, "H2:{a2:e}"),
            NoiseSetting::Mix(a2) => write!(f, "mix:{a2:e}"),
        }
    }
}

impl FromStr for NoiseSetting {
    type Err = Error;

    /// `H0`, `H1:1e-9`, `H2:1e-8` or `mix:1e-9`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Config(format!("unknown noise setting `{s}` (use H0, H1:<a2>, H2:<a2> or mix:<a2>)"));
        if s.eq_ignore_ascii_case("h0") {
            return Ok(NoiseSetting::H0);
        }
        let (kind, value) = s.split_once(':').ok_or_else(bad)?;
        let a2: f64 = value.trim().parse().map_err(|_| bad())?;
        if !(a2.is_finite() && a2 >= 0.0) {
            return Err(bad());
        }
        match kind.trim().to_ascii_lowercase().as_str() {
            "h1" => Ok(NoiseSetting::H1(a2)),
            "h2" => Ok(NoiseSetting::H2(a2)),
            "mix" => Ok(NoiseSetting::Mix(a2)),
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for NoiseSetting {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<NoiseSetting> for String {
    fn from(n: NoiseSetting) -> String {
        n.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    /// Test-based selection sequence.
    Sequence,
    QmleExp,
    QmleErr,
    /// Noise-only QMLE applied to the estimated efficient price.
    EQmle,
    /// Noise-only QMLE on the observed price.
    Qmle,
    Rv,
}

impl Estimator {
    pub const ALL: [Estimator; 6] =
        [Estimator::Sequence, Estimator::QmleExp, Estimator::QmleErr, Estimator::EQmle, Estimator::Qmle, Estimator::Rv];
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Estimator::Sequence => "sequence",
            Estimator::QmleExp => "qmle-exp",
            Estimator::QmleErr => "qmle-err",
            Estimator::EQmle => "e-qmle",
            Estimator::Qmle => "qmle",
            Estimator::Rv => "rv",
        })
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Estimator::ALL
            .into_iter()
            .find(|e| e.to_string() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown estimator `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyConfig {
    pub scenarios: Vec<Preset>,
    pub noise: Vec<NoiseSetting>,
    pub models: Vec<ModelKind>,
    pub frequencies: Vec<Frequency>,
    pub statistics: Vec<AvarVariant>,
    /// Statistic of the selection sequence in estimator studies.
    pub sequence_statistic: AvarVariant,
    pub estimators: Vec<Estimator>,
    pub replications: usize,
    pub seed: u64,
    pub test: TestConfig,
    /// Worker threads; `None` reads the environment, then uses every core.
    pub threads: Option<usize>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            scenarios: vec![Preset::Constant],
            noise: vec![NoiseSetting::H0],
            models: vec![ModelKind::Roll],
            frequencies: vec![Frequency::Tick],
            statistics: vec![AvarVariant::V1, AvarVariant::V2],
            sequence_statistic: AvarVariant::V1,
            estimators: Estimator::ALL.to_vec(),
            replications: 500,
            seed: 0,
            test: TestConfig::default(),
            threads: None,
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::Config("study needs at least one replication".into()));
        }
        if self.scenarios.is_empty() || self.noise.is_empty() || self.models.is_empty() || self.frequencies.is_empty() {
            return Err(Error::Config("every study axis needs at least one entry".into()));
        }
        if !(self.test.level > 0.0 && self.test.level < 1.0) {
            return Err(Error::Config(format!("test level must lie in (0, 1), got {}", self.test.level)));
        }
        self.test.truncation.validate()?;
        for model in &self.models {
            information_for(model)?;
        }
        Ok(())
    }

    fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &scenario in &self.scenarios {
            for &noise in &self.noise {
                for model in &self.models {
                    for &frequency in &self.frequencies {
                        out.push(Cell { scenario, noise, model: model.clone(), frequency });
                    }
                }
            }
        }
        out
    }
}

/// Simulation parameters of the information process for the supported models.
pub fn information_for(model: &ModelKind) -> Result<Information> {
    Ok(match model {
        ModelKind::Roll => Information::roll(),
        ModelKind::SignedSpread => Information::signed_spread(),
        ModelKind::NLSignedSpread => Information { model: ModelKind::NLSignedSpread, ..Information::signed_spread() },
        ModelKind::Null => Information { model: ModelKind::Null, theta: vec![], ..Information::default() },
        other => return Err(Error::Config(format!("no simulation design for model `{other}`"))),
    })
}

/// One combination of the study axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub scenario: Preset,
    pub noise: NoiseSetting,
    pub model: ModelKind,
    pub frequency: Frequency,
}

impl Cell {
    pub fn scenario_config(&self, seed: u64) -> Result<ScenarioConfig> {
        let base = ScenarioConfig::preset(self.scenario);
        let horizon = base.horizon;
        Ok(base.with_sampling(self.frequency.sampling(horizon)).with_info(information_for(&self.model)?).with_seed(seed))
    }

    pub fn simulate(&self, seed: u64, rep: u64) -> Result<Simulation> {
        let cfg = self.scenario_config(seed)?.with_noise(self.noise.for_replication(rep));
        simulate_replication(&cfg, rep)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}/{}", self.scenario, self.noise, self.model, self.frequency)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionRow {
    pub scenario: String,
    pub noise: String,
    pub model: String,
    pub frequency: String,
    pub statistic: String,
    /// Fraction of successful replications that rejected.
    pub value: f64,
    pub mc_stderr: f64,
    pub n_ok: usize,
    pub n_fail: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorRow {
    pub scenario: String,
    pub noise: String,
    pub model: String,
    pub frequency: String,
    pub estimator: String,
    /// Errors are in units of quadratic variation (`T σ²`).
    pub bias: f64,
    pub sd: f64,
    pub rmse: f64,
    pub n_ok: usize,
    pub n_fail: usize,
}

/// How often the selection sequence picked each estimate, per cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceRow {
    pub scenario: String,
    pub noise: String,
    pub model: String,
    pub frequency: String,
    pub rv_raw: usize,
    pub qmle_err: usize,
    pub qmle_exp: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EstimatorTable {
    pub rows: Vec<EstimatorRow>,
    pub provenance: Vec<ProvenanceRow>,
}

/// Runs `f` on a pool sized from the config, the environment, or the machine.
pub fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let threads = threads
        .or_else(|| std::env::var(THREADS_ENV).ok().and_then(|v| v.parse().ok()))
        .unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn check_failures(cell: &Cell, what: &str, failed: usize, total: usize) -> Result<()> {
    // failures must stay below 1% of the replications
    if failed > 0 && failed * 100 >= total {
        return Err(Error::StudyDegenerate { cell: format!("{cell}/{what}"), failed, total });
    }
    Ok(())
}

/// Fraction of replications in which each statistic rejects, per cell.
pub fn rejection_study(cfg: &StudyConfig) -> Result<Vec<RejectionRow>> {
    cfg.validate()?;
    if cfg.statistics.is_empty() {
        return Err(Error::Config("rejection study needs at least one statistic".into()));
    }
    with_pool(cfg.threads, || {
        let mut rows = Vec::new();
        for cell in cfg.cells() {
            let model = NoiseModel::new(cell.model.clone());
            let outcomes: Vec<Vec<Option<bool>>> = (0..cfg.replications as u64)
                .into_par_iter()
                .map(|rep| rejection_replication(&cell, &model, cfg, rep))
                .collect();
            for (k, stat) in cfg.statistics.iter().enumerate() {
                let decisions: Vec<bool> = outcomes.iter().filter_map(|o| o[k]).collect();
                let n_fail = cfg.replications - decisions.len();
                check_failures(&cell, &stat.to_string(), n_fail, cfg.replications)?;
                let n_ok = decisions.len();
                let value = decisions.iter().filter(|&&r| r).count() as f64 / n_ok as f64;
                rows.push(RejectionRow {
                    scenario: cell.scenario.to_string(),
                    noise: cell.noise.to_string(),
                    model: cell.model.to_string(),
                    frequency: cell.frequency.to_string(),
                    statistic: stat.to_string(),
                    value,
                    mc_stderr: proportion_stderr(value, n_ok),
                    n_ok,
                    n_fail,
                });
            }
        }
        Ok(rows)
    })?
}

fn rejection_replication(cell: &Cell, model: &NoiseModel, cfg: &StudyConfig, rep: u64) -> Vec<Option<bool>> {
    let failed = vec![None; cfg.statistics.len()];
    let sim = match cell.simulate(cfg.seed, rep) {
        Ok(s) => s,
        Err(e) => {
            log::warn!("{cell} replication {rep}: {e}");
            return failed;
        }
    };
    let fits = fit_exp(&sim.series, model, &cfg.test.bounds)
        .and_then(|exp| Ok((exp, fit_err(&sim.series, model, &cfg.test.bounds, NoiseSpace::SmallTest)?)));
    let (exp, err) = match fits {
        Ok(f) => f,
        Err(e) => {
            log::warn!("{cell} replication {rep}: {e}");
            return failed;
        }
    };
    cfg.statistics
        .iter()
        .map(|&stat| match test_from_fits(&sim.series, model, &exp, &err, stat, &cfg.test) {
            Ok(r) => Some(r.reject),
            Err(e) => {
                log::warn!("{cell} replication {rep} {stat}: {e}");
                None
            }
        })
        .collect()
}

/// Estimates of the quadratic variation `T σ̂²` from one simulated day.
#[derive(Debug, Clone, PartialEq)]
pub struct DayEstimates {
    pub truth: f64,
    pub values: Vec<(Estimator, Option<f64>)>,
    pub provenance: Option<Provenance>,
}

/// Every requested estimator on one series; failures become `None`.
pub fn estimate_day(
    series: &TickSeries,
    model: &NoiseModel,
    estimators: &[Estimator],
    sequence_statistic: AvarVariant,
    test: &TestConfig,
) -> (Vec<(Estimator, Option<f64>)>, Option<Provenance>) {
    let t = series.horizon;
    let exp = fit_exp(series, model, &test.bounds);
    let err = fit_err(series, model, &test.bounds, NoiseSpace::SmallTest);
    let mut provenance = None;
    let values = estimators
        .iter()
        .map(|&e| {
            let v: Result<f64> = match e {
                Estimator::QmleExp => exp.clone().map(|f| f.sigma2),
                Estimator::QmleErr => err.clone().map(|f| f.sigma2),
                Estimator::Sequence => match (&exp, &err) {
                    (Ok(a), Ok(b)) => select_from_fits(series, model, a, b, sequence_statistic, test).map(|s| {
                        provenance = Some(s.provenance);
                        s.chosen_estimate
                    }),
                    (Err(x), _) | (_, Err(x)) => Err(x.clone()),
                },
                Estimator::EQmle => exp.clone().and_then(|f| {
                    let path = efficient_price(series, model, f.theta())?;
                    let xhat = TickSeries::new(series.times.clone(), path.values, Default::default(), t)?;
                    Ok(fit_null(&xhat, &test.bounds)?.sigma2)
                }),
                Estimator::Qmle => fit_null(series, &test.bounds).map(|f| f.sigma2),
                Estimator::Rv => {
                    Ok(series.prices.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum::<f64>() / t)
                }
            };
            (e, v.ok().map(|s| s * t))
        })
        .collect();
    (values, provenance)
}

/// Bias, standard deviation and RMSE of each estimator against the simulated quadratic variation.
pub fn estimator_study(cfg: &StudyConfig) -> Result<EstimatorTable> {
    cfg.validate()?;
    if cfg.estimators.is_empty() {
        return Err(Error::Config("estimator study needs at least one estimator".into()));
    }
    with_pool(cfg.threads, || {
        let mut table = EstimatorTable::default();
        for cell in cfg.cells() {
            let model = NoiseModel::new(cell.model.clone());
            let days: Vec<Option<DayEstimates>> = (0..cfg.replications as u64)
                .into_par_iter()
                .map(|rep| match cell.simulate(cfg.seed, rep) {
                    Ok(sim) => {
                        let (values, provenance) =
                            estimate_day(&sim.series, &model, &cfg.estimators, cfg.sequence_statistic, &cfg.test);
                        Some(DayEstimates { truth: sim.truth.quadratic_variation(), values, provenance })
                    }
                    Err(e) => {
                        log::warn!("{cell} replication {rep}: {e}");
                        None
                    }
                })
                .collect();
            for (k, &est) in cfg.estimators.iter().enumerate() {
                let errors: Vec<f64> =
                    days.iter().flatten().filter_map(|d| d.values[k].1.map(|v| v - d.truth)).collect();
                let n_fail = cfg.replications - errors.len();
                check_failures(&cell, &est.to_string(), n_fail, cfg.replications)?;
                let s = ErrorSummary::of(&errors);
                table.rows.push(EstimatorRow {
                    scenario: cell.scenario.to_string(),
                    noise: cell.noise.to_string(),
                    model: cell.model.to_string(),
                    frequency: cell.frequency.to_string(),
                    estimator: est.to_string(),
                    bias: s.bias,
                    sd: s.sd,
                    rmse: s.rmse,
                    n_ok: s.n,
                    n_fail,
                });
            }
            let count = |p: Provenance| days.iter().flatten().filter(|d| d.provenance == Some(p)).count();
            table.provenance.push(ProvenanceRow {
                scenario: cell.scenario.to_string(),
                noise: cell.noise.to_string(),
                model: cell.model.to_string(),
                frequency: cell.frequency.to_string(),
                rv_raw: count(Provenance::RvRaw),
                qmle_err: count(Provenance::QmleErr),
                qmle_exp: count(Provenance::QmleExp),
            });
        }
        Ok(table)
    })?
}

/// Writes rows as CSV with a header.
pub fn write_csv<T: Serialize, W: Write>(rows: &[T], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(noise: NoiseSetting, frequency: Frequency, m: usize) -> StudyConfig {
        StudyConfig {
            noise: vec![noise],
            frequencies: vec![frequency],
            statistics: vec![AvarVariant::V1, AvarVariant::V3],
            replications: m,
            seed: 7,
            threads: Some(1),
            ..StudyConfig::default()
        }
    }

    #[test]
    fn axis_parsing() {
        assert_eq!("15s".parse::<Frequency>().unwrap(), Frequency::Seconds(15));
        assert_eq!("tick".parse::<Frequency>().unwrap(), Frequency::Tick);
        assert!("0s".parse::<Frequency>().is_err());
        assert_eq!("H1:1e-9".parse::<NoiseSetting>().unwrap(), NoiseSetting::H1(1e-9));
        assert_eq!("mix:1e-9".parse::<NoiseSetting>().unwrap(), NoiseSetting::Mix(1e-9));
        assert!("H3:1".parse::<NoiseSetting>().is_err());
        for n in [NoiseSetting::H0, NoiseSetting::H2(1e-8), NoiseSetting::Mix(1e-9)] {
            assert_eq!(n.to_string().parse::<NoiseSetting>().unwrap(), n);
        }
        assert_eq!("e-qmle".parse::<Estimator>().unwrap(), Estimator::EQmle);
    }

    #[test]
    fn mix_is_half_and_half() {
        let m = 7u64;
        let clean = (0..m).filter(|&r| NoiseSetting::Mix(1e-9).for_replication(r) == Noise::H0).count();
        assert_eq!(clean, 4);
    }

    #[test]
    fn single_replication_is_zero_or_one() {
        let rows = rejection_study(&small(NoiseSetting::H0, Frequency::Seconds(30), 1)).unwrap();
        assert_eq!(rows.len(), 2);
        for r in rows {
            assert!(r.value == 0.0 || r.value == 1.0);
            assert_eq!(r.n_ok + r.n_fail, 1);
        }
    }

    #[test]
    fn studies_are_reproducible() {
        let cfg = small(NoiseSetting::H1(1e-7), Frequency::Seconds(30), 24);
        let a = rejection_study(&cfg).unwrap();
        let b = rejection_study(&StudyConfig { threads: Some(2), ..cfg.clone() }).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|r| (0.0..=1.0).contains(&r.value)));
    }

    #[test]
    fn estimator_table_layout() {
        let mut cfg = small(NoiseSetting::Mix(1e-9), Frequency::Seconds(30), 4);
        cfg.scenarios = vec![Preset::SvNoJump];
        let t = estimator_study(&cfg).unwrap();
        assert_eq!(t.rows.len(), Estimator::ALL.len());
        let p = &t.provenance[0];
        assert_eq!(p.rv_raw + p.qmle_err + p.qmle_exp, 4);
        let rv = t.rows.iter().find(|r| r.estimator == "rv").unwrap();
        assert!(rv.rmse >= rv.bias.abs());
        let mut buf = Vec::new();
        write_csv(&t.rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("scenario,noise,model,frequency,estimator,bias,sd,rmse,n_ok,n_fail\n"));
    }

    #[test]
    fn study_config_from_toml() {
        let cfg: StudyConfig = toml::from_str(
            r#"
            scenarios = ["sv-jump"]
            noise = ["H0", "H2:1e-8"]
            models = ["signed-spread"]
            frequencies = ["15s"]
            statistics = [3]
            replications = 10
            [test]
            level = 0.01
            "#,
        )
        .unwrap();
        assert_eq!(cfg.noise[1], NoiseSetting::H2(1e-8));
        assert_eq!(cfg.statistics, vec![AvarVariant::V3]);
        assert_eq!(cfg.test.level, 0.01);
        cfg.validate().unwrap();
        let bad = StudyConfig { models: vec![ModelKind::General], ..cfg };
        assert!(bad.validate().is_err());
    }
}
