//! End-to-end harness behavior: reproducibility, report consistency and
//! configuration loading.

use std::fs;
use std::path::Path;

use sdl_core::harness::{
    run_synthetic, write_report, CovarianceSpec, ExperimentConfig, LambdaMode, PrecisionMode,
    TestKind,
};

fn small_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::standard(200, 120, 10, 0.3);
    cfg.alpha = vec![0.01, 0.05, 0.1];
    cfg.replicates = 6;
    cfg.seed = 77;
    cfg
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn reports_are_identical_across_worker_counts() {
    for precision in [PrecisionMode::Exact, PrecisionMode::Estimated] {
        let mut cfg = small_config();
        cfg.covariance = CovarianceSpec::Circulant { band: 3, off: 0.1 };
        cfg.precision = precision;
        let one = tempfile::tempdir().unwrap();
        let four = tempfile::tempdir().unwrap();
        write_report(&run_synthetic(&cfg, 1).unwrap(), one.path()).unwrap();
        write_report(&run_synthetic(&cfg, 4).unwrap(), four.path()).unwrap();
        for name in [
            "report.csv",
            "replicates.csv",
            "zscores.csv",
            "histogram.csv",
            "config.json",
        ] {
            assert_eq!(
                read(one.path(), name),
                read(four.path(), name),
                "{name} differs"
            );
        }
    }
}

#[test]
fn aggregates_recompute_from_replicate_rows() {
    let cfg = small_config();
    let dir = tempfile::tempdir().unwrap();
    write_report(&run_synthetic(&cfg, 2).unwrap(), dir.path()).unwrap();

    let mut rows = csv::Reader::from_path(dir.path().join("replicates.csv")).unwrap();
    let headers = rows.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let (alpha_c, t1_c, pw_c) = (col("alpha"), col("type_i"), col("power"));
    let records: Vec<csv::StringRecord> = rows.records().map(Result::unwrap).collect();

    let mut report = csv::Reader::from_path(dir.path().join("report.csv")).unwrap();
    let rh = report.headers().unwrap().clone();
    let rcol = |name: &str| rh.iter().position(|h| h == name).unwrap();
    for agg in report.records().map(Result::unwrap) {
        let alpha: f64 = agg[rcol("alpha")].parse().unwrap();
        let picked: Vec<&csv::StringRecord> = records
            .iter()
            .filter(|r| r[alpha_c].parse::<f64>().ok() == Some(alpha))
            .collect();
        assert_eq!(picked.len(), cfg.replicates);
        for (value_c, mean_name, std_name) in [
            (t1_c, "type_i_mean", "type_i_std"),
            (pw_c, "power_mean", "power_std"),
        ] {
            let v: Vec<f64> = picked.iter().map(|r| r[value_c].parse().unwrap()).collect();
            let m = v.iter().sum::<f64>() / v.len() as f64;
            let s = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt();
            let got_m: f64 = agg[rcol(mean_name)].parse().unwrap();
            let got_s: f64 = agg[rcol(std_name)].parse().unwrap();
            assert!((got_m - m).abs() <= 1e-12, "{mean_name} at {alpha}");
            assert!((got_s - s).abs() <= 1e-12, "{std_name} at {alpha}");
        }
    }
}

#[test]
fn zscores_and_histogram_agree() {
    let cfg = small_config();
    let dir = tempfile::tempdir().unwrap();
    write_report(&run_synthetic(&cfg, 2).unwrap(), dir.path()).unwrap();
    let z_rows = csv::Reader::from_path(dir.path().join("zscores.csv"))
        .unwrap()
        .records()
        .count();
    assert_eq!(z_rows, cfg.replicates * cfg.p);

    let mut hist = csv::Reader::from_path(dir.path().join("histogram.csv")).unwrap();
    let (mut nulls, mut actives) = (0usize, 0usize);
    for rec in hist.records().map(Result::unwrap) {
        nulls += rec[2].parse::<usize>().unwrap();
        actives += rec[3].parse::<usize>().unwrap();
    }
    assert_eq!(actives, cfg.replicates * cfg.s0);
    assert_eq!(nulls + actives, z_rows);
}

#[test]
fn config_echo_lists_replicate_seeds() {
    let cfg = small_config();
    let dir = tempfile::tempdir().unwrap();
    write_report(&run_synthetic(&cfg, 1).unwrap(), dir.path()).unwrap();
    let echo: serde_json::Value = serde_json::from_str(&read(dir.path(), "config.json")).unwrap();
    let seeds: Vec<u64> = echo["replicate_seeds"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap())
        .collect();
    assert_eq!(seeds, (77..83).collect::<Vec<u64>>());
    assert_eq!(echo["config"]["p"], 200);
}

#[test]
fn toml_config_round_trip() {
    let text = r#"
        p = 300
        n = 150
        s0 = 12
        mu = 0.25
        alpha = [0.05, 0.1]
        replicates = 3
        seed = 5
        precision = "estimated"
        test = "sdl"

        [covariance]
        kind = "circulant"
        band = 4
        off = 0.1

        [lambda]
        mode = "calibrated"
        kappa = "true_epsilon"
    "#;
    let cfg = ExperimentConfig::from_toml_str(text).unwrap();
    assert_eq!(
        (cfg.p, cfg.n, cfg.s0, cfg.replicates, cfg.seed),
        (300, 150, 12, 3, 5)
    );
    assert_eq!(
        cfg.covariance,
        CovarianceSpec::Circulant { band: 4, off: 0.1 }
    );
    assert_eq!(cfg.precision, PrecisionMode::Estimated);
    assert_eq!(cfg.test, TestKind::Sdl);
    assert_eq!(cfg.sigma, 1.0);
    let serialized = toml::to_string(&cfg).unwrap();
    assert_eq!(ExperimentConfig::from_toml_str(&serialized).unwrap(), cfg);
}

#[test]
fn bad_configs_are_config_errors() {
    for text in [
        "p = 10\nn = 5\ns0 = 20\nmu = 0.1",
        "p = 10\nn = 5\ns0 = 2\nmu = 0.1\nalpha = [1.5]",
        "p = 10\nn = 5\ns0 = 2\nmu = 0.1\nbogus = 1",
        "p = 10\nn = 5\ns0 = 2\nmu = 0.1\nreplicates = 0",
    ] {
        let err = ExperimentConfig::from_toml_str(text).unwrap_err();
        assert!(err.is_config(), "{text}: {err}");
    }
}

#[test]
fn fixed_lambda_and_covariance_free_runs() {
    let mut cfg = small_config();
    cfg.lambda = LambdaMode::Fixed { value: 0.1 };
    let report = run_synthetic(&cfg, 2).unwrap();
    assert_eq!(report.failed(), 0);
    for rec in &report.replicates {
        assert_eq!(rec.outcome.as_ref().unwrap().lambda, 0.1);
    }

    let mut cfg = small_config();
    cfg.test = TestKind::Covfree;
    cfg.lambda = LambdaMode::Recommended;
    let report = run_synthetic(&cfg, 2).unwrap();
    assert_eq!(report.failed(), 0);
    for agg in &report.aggregates {
        let t1 = agg.type_i_mean.unwrap();
        assert!((0.0..=1.0).contains(&t1));
    }
}
