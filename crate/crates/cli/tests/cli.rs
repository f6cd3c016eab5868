use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn lobnoise(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lobnoise")).args(args).env("LOBNOISE_THREADS", "1").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn simulate_to(dir: &TempDir, name: &str, args: &[&str]) -> String {
    let mut all = vec!["simulate"];
    all.extend_from_slice(args);
    let out = lobnoise(&all);
    assert!(out.status.success(), "{}", stderr(&out));
    let path = dir.path().join(name);
    std::fs::write(&path, &out.stdout).unwrap();
    path.to_str().unwrap().to_string()
}

/// Single data row of a one-row CSV, keyed by header.
fn record(csv: &str) -> Vec<(String, String)> {
    let mut lines = csv.lines();
    let header = lines.next().unwrap().split(',');
    let row = lines.next().unwrap().split(',');
    header.map(String::from).zip(row.map(String::from)).collect()
}

fn field(rec: &[(String, String)], key: &str) -> String {
    rec.iter().find(|(k, _)| k == key).unwrap_or_else(|| panic!("no column {key}")).1.clone()
}

#[test]
fn simulate_is_deterministic() {
    let a = lobnoise(&["simulate", "--seed", "4", "--frequency", "30s"]);
    let b = lobnoise(&["simulate", "--seed", "4", "--frequency", "30s"]);
    let c = lobnoise(&["simulate", "--seed", "5", "--frequency", "30s"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
    assert!(stdout(&a).starts_with("time,price,I,"));
}

#[test]
fn test_subcommand_prints_report() {
    let dir = TempDir::new().unwrap();
    let data = simulate_to(&dir, "ss.csv", &["--model", "signed-spread", "--seed", "3"]);
    let out = lobnoise(&["test", "--stat", "1", "--level", "0.05", &data, "--model", "signed-spread"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let rec = record(&stdout(&out));
    assert_eq!(field(&rec, "avar"), "1");
    assert_eq!(field(&rec, "level"), "0.05");
    let p: f64 = field(&rec, "p_value").parse().unwrap();
    assert!((0.0..=1.0).contains(&p));
}

#[test]
fn gof_on_signed_spread_data_is_near_one() {
    let dir = TempDir::new().unwrap();
    let data = simulate_to(&dir, "ss.csv", &["--model", "signed-spread", "--seed", "3"]);
    let out = lobnoise(&["gof", &data, "--model", "signed-spread"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let rec = record(&stdout(&out));
    let pi: f64 = field(&rec, "pi_v").parse().unwrap();
    assert!(pi > 0.98, "{pi}");
    let theta: f64 = field(&rec, "theta").parse().unwrap();
    assert!((theta - 0.8).abs() < 0.05, "{theta}");
}

#[test]
fn fit_variants_and_selection() {
    let dir = TempDir::new().unwrap();
    let data = simulate_to(&dir, "roll.csv", &["--noise", "H1:1e-7", "--frequency", "5s", "--seed", "9"]);
    for variant in ["exp", "err", "null"] {
        let out = lobnoise(&["fit", &data, "--variant", variant]);
        assert!(out.status.success(), "{}", stderr(&out));
        let rec = record(&stdout(&out));
        assert_eq!(field(&rec, "variant"), variant);
        assert_eq!(field(&rec, "a2").is_empty(), variant == "exp");
    }
    let out = lobnoise(&["fit", &data, "--variant", "err"]);
    let sigma2: f64 = field(&record(&stdout(&out)), "sigma2").parse().unwrap();
    assert!((sigma2 - 0.1).abs() < 0.03, "{sigma2}");

    let out = lobnoise(&["select", &data, "--stat", "3"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let rec = record(&stdout(&out));
    assert_eq!(field(&rec, "provenance"), "qmle_err");
}

#[test]
fn config_file_sets_model_and_level() {
    let dir = TempDir::new().unwrap();
    let data = simulate_to(&dir, "roll.csv", &["--frequency", "30s", "--seed", "2"]);
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "model = \"roll\"\n[test]\nlevel = 0.1\n").unwrap();
    let out = lobnoise(&["test", &data, "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(field(&record(&stdout(&out)), "level"), "0.1");
}

#[test]
fn duplicates_are_reported() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("dup.csv");
    let mut csv = String::from("time,price\n");
    for i in 0..200 {
        csv.push_str(&format!("{},{}\n", i * 60, (i as f64 * 0.37).sin() * 1e-3));
    }
    csv.push_str("11940,0.0\n");
    std::fs::write(&path, csv).unwrap();
    let out = lobnoise(&["fit", path.to_str().unwrap(), "--variant", "null"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stderr(&out).contains("1 duplicate"), "{}", stderr(&out));
    assert_eq!(field(&record(&stdout(&out)), "n"), "199");
}

#[test]
fn exit_codes() {
    assert_eq!(lobnoise(&["bogus"]).status.code(), Some(1));
    assert_eq!(lobnoise(&["--help"]).status.code(), Some(0));
    assert_eq!(lobnoise(&["fit", "/nonexistent/file.csv"]).status.code(), Some(2));

    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "time,price\n0,1\n1,oops\n").unwrap();
    let out = lobnoise(&["fit", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line 3"));

    let ok = dir.path().join("ok.csv");
    std::fs::write(&ok, "time,price\n0,1\n1,1.1\n2,1.0\n").unwrap();
    assert_eq!(lobnoise(&["test", ok.to_str().unwrap(), "--stat", "7"]).status.code(), Some(1));
    // roll needs the trade sign column
    assert_eq!(lobnoise(&["fit", ok.to_str().unwrap(), "--model", "roll"]).status.code(), Some(2));
}

fn study_config(dir: &Path) -> String {
    let path = dir.join("study.toml");
    std::fs::write(
        &path,
        "scenarios = [\"constant\"]\nnoise = [\"H0\", \"H1:1e-7\"]\nmodels = [\"roll\"]\n\
         frequencies = [\"30s\"]\nstatistics = [1, 3]\nestimators = [\"qmle-exp\", \"qmle-err\", \"sequence\"]\n\
         replications = 6\nseed = 11\n",
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn rejection_study_layout() {
    let dir = TempDir::new().unwrap();
    let cfg = study_config(dir.path());
    let out = lobnoise(&["study", "rejection", "--config", &cfg]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "scenario,noise,model,frequency,statistic,value,mc_stderr,n_ok,n_fail");
    assert_eq!(lines.count(), 4);
    let again = lobnoise(&["study", "rejection", "--config", &cfg, "--threads", "2"]);
    assert_eq!(out.stdout, again.stdout);
}

#[test]
fn estimator_study_writes_provenance() {
    let dir = TempDir::new().unwrap();
    let cfg = study_config(dir.path());
    let prov = dir.path().join("prov.csv");
    let out = lobnoise(&["study", "estimator", "--config", &cfg, "--provenance", prov.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).starts_with("scenario,noise,model,frequency,estimator,bias,sd,rmse,n_ok,n_fail"));
    let prov = std::fs::read_to_string(prov).unwrap();
    assert!(prov.starts_with("scenario,noise,model,frequency,rv_raw,qmle_err,qmle_exp"));
    assert_eq!(prov.lines().count(), 3);
}
