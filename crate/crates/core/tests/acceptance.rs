//! Acceptance suite: every criterion prints one PASS/FAIL line. Set
//! ACCEPTANCE_STRICT to make the process exit non-zero when any criterion fails.

use std::time::Instant;

use lobnoise::data::diff;
use lobnoise::hausman::AvarVariant;
use lobnoise::likelihood::bypart_transform;
use lobnoise::montecarlo::{
    estimator_study, rejection_study, Estimator, EstimatorRow, Frequency, NoiseSetting, RejectionRow, StudyConfig,
};
use lobnoise::qmle::{efficient_price, fit_err, fit_exp, pi_v_hat, FitBounds, NoiseSpace};
use lobnoise::simulator::{simulate_replication, Information, Noise, Preset, Sampling, ScenarioConfig};
use lobnoise::stats::{ks_test, Moments};
use lobnoise::{loglik_err, loglik_exp, Covariates, MA1Kernel, ModelKind, NoiseModel, TickSeries};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn study(scenario: Preset, noise: NoiseSetting, model: ModelKind, frequency: Frequency, stats: &[AvarVariant], m: usize) -> StudyConfig {
    StudyConfig {
        scenarios: vec![scenario],
        noise: vec![noise],
        models: vec![model],
        frequencies: vec![frequency],
        statistics: stats.to_vec(),
        replications: m,
        seed: 20_240_601,
        ..StudyConfig::default()
    }
}

fn fraction(rows: &[RejectionRow], stat: &str) -> f64 {
    rows.iter().find(|r| r.statistic == stat).map(|r| r.value).unwrap_or(f64::NAN)
}

fn c1_size() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for model in [ModelKind::Roll, ModelKind::SignedSpread] {
        let cfg = study(Preset::Constant, NoiseSetting::H0, model.clone(), Frequency::Tick, &[AvarVariant::V1], 500);
        match rejection_study(&cfg) {
            Ok(rows) => {
                let f = fraction(&rows, "S1");
                pass &= (f - 0.05).abs() <= 0.03;
                parts.push(format!("{model} S1={f:.3}"));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("{model}: {e}"));
            }
        }
    }
    check(pass, format!("{} (target 0.05 ± 0.03, M=500)", parts.join(", ")))
}

fn c2_power() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    let tick = study(Preset::Constant, NoiseSetting::H1(1e-9), ModelKind::Roll, Frequency::Tick, &[AvarVariant::V1, AvarVariant::V2], 200);
    match rejection_study(&tick) {
        Ok(rows) => {
            for s in ["S1", "S2"] {
                let f = fraction(&rows, s);
                pass &= f >= 0.97;
                parts.push(format!("tick 1e-9 {s}={f:.3}"));
            }
        }
        Err(e) => {
            pass = false;
            parts.push(e.to_string());
        }
    }
    let sparse = study(Preset::Constant, NoiseSetting::H1(1e-7), ModelKind::Roll, Frequency::Seconds(30), &[AvarVariant::V3], 200);
    match rejection_study(&sparse) {
        Ok(rows) => {
            let f = fraction(&rows, "S3");
            pass &= f >= 0.90;
            parts.push(format!("30s 1e-7 S3={f:.3}"));
        }
        Err(e) => {
            pass = false;
            parts.push(e.to_string());
        }
    }
    check(pass, format!("{} (targets >= 0.97 / >= 0.90)", parts.join(", ")))
}

fn c3_h2() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (model, target) in [(ModelKind::Roll, 0.43), (ModelKind::SignedSpread, 0.40)] {
        let cfg = study(Preset::Constant, NoiseSetting::H2(1e-8), model.clone(), Frequency::Seconds(15), &[AvarVariant::V3], 500);
        match rejection_study(&cfg) {
            Ok(rows) => {
                let f = fraction(&rows, "S3");
                pass &= (f - target).abs() <= 0.10;
                parts.push(format!("{model} S3={f:.3} (target {target} ± 0.10)"));
            }
            Err(e) => {
                pass = false;
                parts.push(e.to_string());
            }
        }
    }
    check(pass, parts.join(", "))
}

fn c4_estimators() -> Outcome {
    let run = |noise: NoiseSetting| -> lobnoise::Result<Vec<EstimatorRow>> {
        let cfg = StudyConfig {
            estimators: vec![Estimator::Sequence, Estimator::QmleExp, Estimator::QmleErr],
            sequence_statistic: AvarVariant::V1,
            ..study(Preset::SvNoJump, noise, ModelKind::Roll, Frequency::Seconds(1), &[AvarVariant::V1], 500)
        };
        Ok(estimator_study(&cfg)?.rows)
    };
    let pick = |rows: &[EstimatorRow], e: &str| rows.iter().find(|r| r.estimator == e).cloned().unwrap();
    let clean = match run(NoiseSetting::H0) {
        Ok(r) => r,
        Err(e) => return check(false, e.to_string()),
    };
    let mix = match run(NoiseSetting::Mix(1e-9)) {
        Ok(r) => r,
        Err(e) => return check(false, e.to_string()),
    };
    let ratio = pick(&clean, "qmle-err").sd / pick(&clean, "qmle-exp").sd;
    let best = pick(&mix, "qmle-exp").rmse.min(pick(&mix, "qmle-err").rmse);
    let seq = pick(&mix, "sequence").rmse;
    check(
        (1.5..=2.0).contains(&ratio) && seq <= 1.15 * best,
        format!("sd ratio err/exp={ratio:.3} (target [1.5, 2.0]); mix RMSE sequence={seq:.3e} vs best={best:.3e} (target <= 1.15x)"),
    )
}

fn dense_omega(n: usize, s: f64, a2: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            s + 2.0 * a2
        } else if i.abs_diff(j) == 1 {
            -a2
        } else {
            0.0
        }
    })
}

fn random_series(rng: &mut ChaCha8Rng, n: usize) -> TickSeries {
    let t = 1.0 / 252.0;
    let prices: Vec<f64> = (0..=n).map(|_| rng.gen_range(-1e-3..1e-3)).collect();
    let sign: Vec<i8> = (0..=n).map(|_| if rng.gen_bool(0.5) { 1 } else { -1 }).collect();
    let spread: Vec<f64> = (0..=n).map(|_| rng.gen_range(5e-5..2e-4)).collect();
    let times = (0..=n).map(|i| t * i as f64 / n as f64).collect();
    TickSeries::new(times, prices, Covariates { sign: Some(sign), spread: Some(spread), ..Default::default() }, t).unwrap()
}

fn c5_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut e_coeff, mut e_quad, mut e_logdet, mut e_null, mut e_part, mut e_exp) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for n in 1..=60usize {
        for _ in 0..50 {
            let s = rng.gen_range(1e-3..10.0);
            let a2 = rng.gen_range(-0.249..5.0) * s;
            let k = MA1Kernel::new(n, s, a2).unwrap();
            let omega = dense_omega(n, s, a2);
            let inv = omega.clone().try_inverse().unwrap();
            let scale = inv.amax();
            for i in 0..n {
                for j in 0..n {
                    e_coeff = e_coeff.max((k.omega_inv_coeff(i + 1, j + 1) - inv[(i, j)]).abs() / scale);
                }
            }
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let dv = nalgebra::DVector::from_vec(v.clone());
            let dense_q = dv.dot(&(&inv * &dv));
            e_quad = e_quad.max((k.quadform(&v).unwrap() - dense_q).abs() / dense_q.abs().max(1e-300));
            let dense_ld = omega.cholesky().unwrap().l().diagonal().iter().map(|d| 2.0 * d.ln()).sum::<f64>();
            e_logdet = e_logdet.max((k.logdet() - dense_ld).abs() / dense_ld.abs().max(1.0));
        }
        let series = random_series(&mut rng, n.max(2));
        for model in [NoiseModel::roll(), NoiseModel::signed_spread()] {
            let theta = [rng.gen_range(-1e-4..1e-4)];
            let sigma2 = rng.gen_range(0.01..1.0);
            let a = loglik_exp(&series, &model, sigma2, &theta).unwrap();
            let b = loglik_err(&series, &model, sigma2, &theta, 0.0).unwrap();
            e_null = e_null.max((a - b).abs() / a.abs().max(1.0));
            let fit = fit_exp(&series, &model, &FitBounds::default()).unwrap();
            let path = efficient_price(&series, &model, fit.theta()).unwrap();
            let direct = diff(&path.values).iter().map(|x| x * x).sum::<f64>() / series.horizon;
            e_exp = e_exp.max((fit.sigma2 - direct).abs() / direct.abs());
        }
        let a: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let y: Vec<f64> = (0..=n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let z: Vec<f64> = (0..=n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (l, r) = bypart_transform(&a, &y, &z);
        e_part = e_part.max((l - r).abs() / l.abs().max(1.0));
    }
    let pass = e_coeff <= 1e-8 && e_quad <= 1e-9 && e_logdet <= 1e-9 && e_null <= 1e-12 && e_part <= 1e-12 && e_exp <= 1e-10;
    check(
        pass,
        format!(
            "max rel errors: omega^ij {e_coeff:.1e} (<=1e-8), quadform {e_quad:.1e} (<=1e-9), logdet {e_logdet:.1e} (<=1e-9), l_err(a2=0) vs l_exp {e_null:.1e} (<=1e-12), by-parts {e_part:.1e} (<=1e-12), sigma2_exp vs RV(Xhat)/T {e_exp:.1e} (<=1e-10)"
        ),
    )
}

fn c6_clt() -> Outcome {
    let m = 1000u64;
    let n = 23_400usize;
    let model = NoiseModel::roll();
    let bounds = FitBounds::default();
    let base = ScenarioConfig::preset(Preset::Constant).with_sampling(Sampling::Regular { n }).with_seed(66);

    // (a) realized variance of the estimated price, no residual noise
    let z: Vec<Option<f64>> = (0..m)
        .into_par_iter()
        .map(|rep| {
            let sim = simulate_replication(&base, rep).ok()?;
            let fit = fit_exp(&sim.series, &model, &bounds).ok()?;
            let t = sim.series.horizon;
            let iv = sim.truth.integrated_variance / t;
            let q = sim.truth.integrated_quarticity;
            Some((n as f64).sqrt() * (fit.sigma2 - iv) / (2.0 * q / t).sqrt())
        })
        .collect();
    let z: Vec<f64> = z.into_iter().flatten().collect();
    let normal = Normal::new(0.0, 1.0).unwrap();
    let ks = ks_test(&z, |v| normal.cdf(v));

    // (b) large residual noise
    let a2 = 1e-6;
    let noisy = base.clone().with_noise(Noise::H1 { a2 }).with_seed(67);
    let draws: Vec<Option<(f64, f64, f64)>> = (0..m)
        .into_par_iter()
        .map(|rep| {
            let sim = simulate_replication(&noisy, rep).ok()?;
            let fit = fit_err(&sim.series, &model, &bounds, NoiseSpace::LargeNoise).ok()?;
            let t = sim.series.horizon;
            let sbar2 = sim.truth.integrated_variance / t;
            let nf = n as f64;
            let q = sim.truth.integrated_quarticity;
            let sbar = sbar2.sqrt();
            let a0 = a2.sqrt();
            let theory = 5.0 * a0 * q / (t.powf(1.5) * sbar) + 3.0 * a0 * sbar.powi(3) / t.sqrt();
            Some((nf.powf(0.25) * (fit.sigma2 - sbar2), nf.sqrt() * (fit.a2? - a2), theory))
        })
        .collect();
    let draws: Vec<(f64, f64, f64)> = draws.into_iter().flatten().collect();
    let sig: Vec<f64> = draws.iter().map(|d| d.0).collect();
    let noise: Vec<f64> = draws.iter().map(|d| d.1).collect();
    let theory = draws.iter().map(|d| d.2).sum::<f64>() / draws.len() as f64;
    let r_sigma = Moments::of(&sig).variance / theory;
    let r_a2 = Moments::of(&noise).variance / (2.0 * a2 * a2);
    let complete = z.len() == m as usize && draws.len() == m as usize;
    check(
        complete && ks.p_value > 0.01 && (r_sigma - 1.0).abs() <= 0.2 && (r_a2 - 1.0).abs() <= 0.2,
        format!(
            "(a) KS p={:.3} over {} reps (target > 0.01); (b) var ratio sigma2_err {r_sigma:.3}, a2_err {r_a2:.3} over {} reps (target 1 ± 0.2)",
            ks.p_value,
            z.len(),
            draws.len()
        ),
    )
}

fn c7_pi_v() -> Outcome {
    let days = 200u64;
    let bounds = FitBounds::default();
    let run = |info: Information, noise: Noise, model: NoiseModel, seed: u64| -> Vec<f64> {
        let cfg = ScenarioConfig::preset(Preset::Constant).with_info(info).with_noise(noise).with_seed(seed);
        let out: Vec<Option<f64>> = (0..days)
            .into_par_iter()
            .map(|rep| {
                let sim = simulate_replication(&cfg, rep).ok()?;
                let fit = fit_err(&sim.series, &model, &bounds, NoiseSpace::SmallTest).ok()?;
                Some(pi_v_hat(&sim.series, &model, &fit).ok()?.value)
            })
            .collect();
        out.into_iter().flatten().collect()
    };
    let spread = run(Information::signed_spread(), Noise::H0, NoiseModel::signed_spread(), 71);
    let share = spread.iter().filter(|&&p| p > 0.98).count() as f64 / days as f64;
    let mut roll = run(Information::roll(), Noise::H1 { a2: 1e-9 }, NoiseModel::roll(), 72);
    roll.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = if roll.is_empty() { f64::NAN } else { roll[roll.len() / 2] };
    let target = 10.0 / 11.0;
    check(
        share >= 0.90 && (median - target).abs() <= 0.03 && roll.len() == days as usize,
        format!("signed spread: pi_V > 0.98 on {:.1}% of days (target >= 90%); Roll median {median:.4} (target {target:.4} ± 0.03)", 100.0 * share),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 7] = [
        ("1 size of S1 under H0, tick data", c1_size),
        ("2 power under H1", c2_power),
        ("3 rejection under H2 at 15s", c3_h2),
        ("4 estimator comparison", c4_estimators),
        ("5 oracle equivalence", c5_oracles),
        ("6 CLT shape", c6_clt),
        ("7 explained noise variance", c7_pi_v),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.starts_with(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let out = run();
        let tag = if out.pass { "PASS" } else { "FAIL" };
        println!("{tag} criterion {name}: {} [{:.0}s]", out.detail, start.elapsed().as_secs_f64());
        if !out.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        if std::env::var_os("ACCEPTANCE_STRICT").is_some() {
            std::process::exit(1);
        }
    }
}
