use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use lobnoise::hausman::{run_test, select_volatility, AvarVariant, TestConfig, TestReport};
use lobnoise::io::{load_ticks, parse_time_of_day, write_ticks, LoadOptions};
use lobnoise::montecarlo::{self, Cell, Frequency, NoiseSetting, StudyConfig};
use lobnoise::qmle::{fit_err, fit_exp, fit_null, pi_v_hat, FitResult, NoiseSpace};
use lobnoise::simulator::{simulate_replication, Preset, ScenarioConfig};
use lobnoise::{Error, ModelKind, NoiseModel, TickSeries};

const FIT_SCHEMA: &str = "Output CSV: variant,model,n,sigma2,a2,theta,loglik,converged (theta entries separated by ';')";
const TEST_SCHEMA: &str =
    "Output CSV: avar,statistic,p_value,level,reject,sigma2_exp,sigma2_err,v_hat,n";
const SELECT_SCHEMA: &str = "Output CSV: chosen_estimate,provenance,stage1_statistic,stage1_p_value,stage1_reject,\
stage2_statistic,stage2_p_value,stage2_reject (stage-2 fields empty when it did not run)";
const GOF_SCHEMA: &str = "Output CSV: model,pi_v,a2,a2_clamped,theta";
const SIMULATE_SCHEMA: &str = "Output CSV: time,price[,I,V,D,S,QD,OFI] with time in seconds from the open";
const STUDY_SCHEMA: &str = "Output CSV, rejection: scenario,noise,model,frequency,statistic,value,mc_stderr,n_ok,n_fail\n\
Output CSV, estimator: scenario,noise,model,frequency,estimator,bias,sd,rmse,n_ok,n_fail\n\
Estimator studies also write scenario,noise,model,frequency,rv_raw,qmle_err,qmle_exp to --provenance when given.";

#[derive(Parser)]
#[command(name = "lobnoise", version, about = "Volatility estimation and residual-noise tests on tick data")]
#[command(after_help = "Exit codes: 0 success, 1 usage or configuration, 2 data error, 3 numerical failure.")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the volatility by quasi-maximum likelihood.
    #[command(after_help = FIT_SCHEMA)]
    Fit {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value = "exp")]
        variant: FitVariant,
        /// Domain of the residual noise variance for `--variant err`.
        #[arg(long, value_enum, default_value = "large")]
        space: Space,
    },
    /// Hausman test for residual noise.
    #[command(after_help = TEST_SCHEMA)]
    Test {
        #[command(flatten)]
        data: DataArgs,
        /// Variance estimator, 1 to 5, or `auto`.
        #[arg(long, default_value = "auto")]
        stat: String,
        #[arg(long)]
        level: Option<f64>,
    },
    /// Choose between realized variance and the two likelihood estimators.
    #[command(after_help = SELECT_SCHEMA)]
    Select {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value = "auto")]
        stat: String,
        #[arg(long)]
        level: Option<f64>,
    },
    /// Share of the noise variance explained by the model.
    #[command(after_help = GOF_SCHEMA)]
    Gof {
        #[command(flatten)]
        data: DataArgs,
    },
    /// Simulate one day of ticks.
    #[command(after_help = SIMULATE_SCHEMA)]
    Simulate {
        /// Full scenario as TOML; flags below override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "constant")]
        scenario: Preset,
        /// H0, H1:<a2>, H2:<a2> or mix:<a2>.
        #[arg(long)]
        noise: Option<NoiseSetting>,
        #[arg(long)]
        model: Option<ModelKind>,
        /// `tick` or a sampling period such as `15s`.
        #[arg(long)]
        frequency: Option<Frequency>,
        #[arg(long)]
        seed: Option<u64>,
        /// Replication index; each index gives an independent day.
        #[arg(long, default_value_t = 0)]
        rep: u64,
    },
    /// Monte Carlo study over a grid of scenarios.
    #[command(after_help = STUDY_SCHEMA)]
    Study {
        #[arg(value_enum)]
        kind: StudyKind,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        replications: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; defaults to the environment variable LOBNOISE_THREADS, then all cores.
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        provenance: Option<PathBuf>,
    },
}

#[derive(Args)]
struct DataArgs {
    /// Tick CSV with header time,price[,I,V,D,S,QD,OFI].
    data: PathBuf,
    /// Optional TOML with `model`, `theta_bounds` and a `[test]` table.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<ModelKind>,
    /// Prices are levels; take logs.
    #[arg(long)]
    raw_price: bool,
    /// Drop ticks before this time of day (HH:MM[:SS] or seconds).
    #[arg(long)]
    session_start: Option<String>,
    #[arg(long)]
    session_end: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FitVariant {
    Exp,
    Err,
    Null,
}

#[derive(Clone, Copy, ValueEnum)]
enum Space {
    Small,
    Large,
}

#[derive(Clone, Copy, ValueEnum)]
enum StudyKind {
    Rejection,
    Estimator,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    model: Option<ModelKind>,
    theta_bounds: Option<Vec<(f64, f64)>>,
    test: TestConfig,
}

struct Input {
    series: TickSeries,
    model: NoiseModel,
    test: TestConfig,
}

enum Failure {
    Usage(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Core(Error::from(e))
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::OutOfBounds { .. } | Error::DimensionMismatch { .. } => 1,
        Error::InsufficientData { .. }
        | Error::InvalidSeries(_)
        | Error::MissingCovariate { .. }
        | Error::Parse { .. }
        | Error::EmptyFile
        | Error::Io(_)
        | Error::WindowTooLarge { .. } => 2,
        Error::IndefiniteKernel { .. }
        | Error::NoConvergence { .. }
        | Error::BoundarySolution
        | Error::DegenerateVariance(_)
        | Error::Undefined
        | Error::StudyDegenerate { .. } => 3,
    }
}

fn read_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn time_flag(s: &Option<String>) -> Result<Option<f64>, Failure> {
    s.as_deref()
        .map(|v| parse_time_of_day(v).ok_or_else(|| Failure::Usage(format!("bad time of day `{v}`"))))
        .transpose()
}

fn load_input(args: &DataArgs) -> Result<Input, Failure> {
    let cfg: RunConfig = match &args.config {
        Some(p) => read_toml(p)?,
        None => RunConfig::default(),
    };
    let opts = LoadOptions {
        raw_price: args.raw_price,
        session_start: time_flag(&args.session_start)?,
        session_end: time_flag(&args.session_end)?,
        ..Default::default()
    };
    let loaded = load_ticks(&args.data, &opts)?;
    let r = &loaded.report;
    eprintln!(
        "loaded {} ticks from {} rows ({} duplicate timestamps, {} outside session)",
        loaded.series.prices.len(),
        r.rows,
        r.duplicates,
        r.outside_session
    );
    let kind = args.model.clone().or(cfg.model).unwrap_or(ModelKind::Roll);
    let mut model = NoiseModel::new(kind);
    if let Some(b) = cfg.theta_bounds {
        model = model.with_bounds(b)?;
    }
    Ok(Input { series: loaded.series, model, test: cfg.test })
}

fn parse_stat(s: &str, series: &TickSeries) -> Result<AvarVariant, Failure> {
    if s.eq_ignore_ascii_case("auto") {
        Ok(AvarVariant::auto(series))
    } else {
        s.parse().map_err(|_| Failure::Usage(format!("--stat must be 1..5 or auto, got `{s}`")))
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(";")
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

fn csv_out<T: Serialize>(rows: &[T]) -> Result<(), Failure> {
    Ok(montecarlo::write_csv(rows, std::io::stdout().lock())?)
}

#[derive(Serialize)]
struct FitRow {
    variant: &'static str,
    model: String,
    n: usize,
    sigma2: f64,
    a2: String,
    theta: String,
    loglik: f64,
    converged: bool,
}

#[derive(Serialize)]
struct TestRow {
    avar: u8,
    statistic: f64,
    p_value: f64,
    level: f64,
    reject: bool,
    sigma2_exp: f64,
    sigma2_err: f64,
    v_hat: f64,
    n: usize,
}

impl From<&TestReport> for TestRow {
    fn from(r: &TestReport) -> Self {
        TestRow {
            avar: r.avar_variant.number(),
            statistic: r.statistic,
            p_value: r.p_value,
            level: r.level,
            reject: r.reject,
            sigma2_exp: r.sigma2_exp,
            sigma2_err: r.sigma2_err,
            v_hat: r.v_hat,
            n: r.n,
        }
    }
}

#[derive(Serialize)]
struct SelectRow {
    chosen_estimate: f64,
    provenance: String,
    stage1_statistic: f64,
    stage1_p_value: f64,
    stage1_reject: bool,
    stage2_statistic: String,
    stage2_p_value: String,
    stage2_reject: String,
}

#[derive(Serialize)]
struct GofRow {
    model: String,
    pi_v: f64,
    a2: f64,
    a2_clamped: bool,
    theta: String,
}

fn fit(data: &DataArgs, variant: FitVariant, space: Space) -> Result<(), Failure> {
    let input = load_input(data)?;
    let bounds = &input.test.bounds;
    let (name, result): (&str, FitResult) = match variant {
        FitVariant::Exp => ("exp", fit_exp(&input.series, &input.model, bounds)?),
        FitVariant::Err => {
            let space = match space {
                Space::Small => NoiseSpace::SmallTest,
                Space::Large => NoiseSpace::LargeNoise,
            };
            ("err", fit_err(&input.series, &input.model, bounds, space)?)
        }
        FitVariant::Null => ("null", fit_null(&input.series, bounds)?),
    };
    if !result.converged {
        log::warn!("optimizer stopped before convergence");
    }
    let model = match variant {
        FitVariant::Null => "null".to_string(),
        _ => input.model.kind().to_string(),
    };
    eprintln!("sigma2 = {:.6e} (annualized), model {model}", result.sigma2);
    csv_out(&[FitRow {
        variant: name,
        model,
        n: input.series.n_returns(),
        sigma2: result.sigma2,
        a2: opt(result.a2),
        theta: join(result.theta()),
        loglik: result.loglik,
        converged: result.converged,
    }])
}

fn test(data: &DataArgs, stat: &str, level: Option<f64>) -> Result<(), Failure> {
    let mut input = load_input(data)?;
    if let Some(l) = level {
        input.test.level = l;
    }
    let variant = parse_stat(stat, &input.series)?;
    let report = run_test(&input.series, &input.model, variant, &input.test)?;
    for w in &report.warnings {
        log::warn!("{w}");
    }
    eprintln!(
        "S{} = {:.4} p = {:.4}: {} residual noise at level {}",
        variant.number(),
        report.statistic,
        report.p_value,
        if report.reject { "reject no" } else { "no evidence of" },
        report.level
    );
    csv_out(&[TestRow::from(&report)])
}

fn select(data: &DataArgs, stat: &str, level: Option<f64>) -> Result<(), Failure> {
    let mut input = load_input(data)?;
    if let Some(l) = level {
        input.test.level = l;
    }
    let variant = parse_stat(stat, &input.series)?;
    let r = select_volatility(&input.series, &input.model, variant, &input.test)?;
    eprintln!("selected {} sigma2 = {:.6e}", r.provenance, r.chosen_estimate);
    let s2 = r.stage2.as_ref();
    csv_out(&[SelectRow {
        chosen_estimate: r.chosen_estimate,
        provenance: r.provenance.to_string(),
        stage1_statistic: r.stage1.statistic,
        stage1_p_value: r.stage1.p_value,
        stage1_reject: r.stage1.reject,
        stage2_statistic: opt(s2.map(|s| s.statistic)),
        stage2_p_value: opt(s2.map(|s| s.p_value)),
        stage2_reject: s2.map(|s| s.reject.to_string()).unwrap_or_default(),
    }])
}

fn gof(data: &DataArgs) -> Result<(), Failure> {
    let input = load_input(data)?;
    let fit = fit_err(&input.series, &input.model, &input.test.bounds, NoiseSpace::SmallTest)?;
    let pi = pi_v_hat(&input.series, &input.model, &fit)?;
    eprintln!("pi_V = {:.4}{}", pi.value, if pi.a2_clamped { " (negative a2 set to zero)" } else { "" });
    csv_out(&[GofRow {
        model: input.model.kind().to_string(),
        pi_v: pi.value,
        a2: fit.a2.unwrap_or(0.0),
        a2_clamped: pi.a2_clamped,
        theta: join(fit.theta()),
    }])
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    config: &Option<PathBuf>,
    scenario: Preset,
    noise: Option<NoiseSetting>,
    model: Option<ModelKind>,
    frequency: Option<Frequency>,
    seed: Option<u64>,
    rep: u64,
) -> Result<(), Failure> {
    let mut cfg: ScenarioConfig = match config {
        Some(p) => read_toml(p)?,
        None => {
            let cell = Cell {
                scenario,
                noise: NoiseSetting::H0,
                model: ModelKind::Roll,
                frequency: Frequency::Tick,
            };
            cell.scenario_config(0)?
        }
    };
    if let Some(m) = model {
        cfg = cfg.with_info(montecarlo::information_for(&m)?);
    }
    if let Some(f) = frequency {
        let h = cfg.horizon;
        cfg = cfg.with_sampling(f.sampling(h));
    }
    if let Some(n) = noise {
        cfg = cfg.with_noise(n.for_replication(rep));
    }
    if let Some(s) = seed {
        cfg = cfg.with_seed(s);
    }
    cfg.validate()?;
    let sim = simulate_replication(&cfg, rep)?;
    eprintln!(
        "simulated {} ticks: integrated variance {:.6e}, quadratic variation {:.6e}",
        sim.series.prices.len(),
        sim.truth.integrated_variance,
        sim.truth.quadratic_variation()
    );
    write_ticks(&sim.series, std::io::stdout().lock())?;
    Ok(())
}

fn study(
    kind: StudyKind,
    config: &Option<PathBuf>,
    replications: Option<usize>,
    seed: Option<u64>,
    threads: Option<usize>,
    provenance: &Option<PathBuf>,
) -> Result<(), Failure> {
    let mut cfg: StudyConfig = match config {
        Some(p) => read_toml(p)?,
        None => StudyConfig::default(),
    };
    if let Some(m) = replications {
        cfg.replications = m;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if threads.is_some() {
        cfg.threads = threads;
    }
    cfg.validate()?;
    match kind {
        StudyKind::Rejection => {
            let rows = montecarlo::rejection_study(&cfg)?;
            for r in &rows {
                eprintln!("{} {} {} {} S{}: {:.3}", r.scenario, r.noise, r.model, r.frequency, r.statistic, r.value);
            }
            csv_out(&rows)
        }
        StudyKind::Estimator => {
            let table = montecarlo::estimator_study(&cfg)?;
            for r in &table.rows {
                eprintln!("{} {} {} {} {}: rmse {:.3e}", r.scenario, r.noise, r.model, r.frequency, r.estimator, r.rmse);
            }
            if let Some(p) = provenance {
                montecarlo::write_csv(&table.provenance, std::fs::File::create(p)?)?;
            }
            csv_out(&table.rows)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Fit { data, variant, space } => fit(data, *variant, *space),
        Command::Test { data, stat, level } => test(data, stat, *level),
        Command::Select { data, stat, level } => select(data, stat, *level),
        Command::Gof { data } => gof(data),
        Command::Simulate { config, scenario, noise, model, frequency, seed, rep } => {
            simulate(config, *scenario, *noise, model.clone(), *frequency, *seed, *rep)
        }
        Command::Study { kind, config, replications, seed, threads, provenance } => {
            study(*kind, config, *replications, *seed, *threads, provenance)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = run(cli);
    let _ = std::io::stdout().flush();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
