use kmac::harness::{
    run_coeff_curve, run_loglog_rate, run_power_curve, run_qq_null, CoeffCurveConfig,
    Configuration, ExperimentTable, LogLogConfig, PowerConfig, QqConfig, RateCase, Scale,
};
use kmac::oracles::SettingName;

fn config_of<T: serde::de::DeserializeOwned>(table: &ExperimentTable) -> T {
    serde_json::from_value(table.metadata["config"].clone()).unwrap()
}

#[test]
fn coefficient_curves() {
    let mut lin = CoeffCurveConfig::new(SettingName::Linear, Scale::Desk, 31);
    lin.grid = vec![0.0];
    lin.reps = 5;
    let t = run_coeff_curve(&lin).unwrap();
    for (name, v) in t
        .columns
        .iter()
        .zip(&t.rows[0])
        .filter(|(c, _)| c.starts_with("mean_"))
    {
        assert!(v.abs() <= 0.05, "{name} = {v}");
    }
    let rerun = run_coeff_curve(&config_of::<CoeffCurveConfig>(&t)).unwrap();
    assert_eq!(rerun, t);

    let mut sin = CoeffCurveConfig::new(SettingName::Sinusoidal, Scale::Desk, 32);
    sin.grid = vec![0.0, 2.5];
    sin.reps = 5;
    sin.configs = vec!["standard/distance:alpha=1/knn:k=1"
        .parse::<Configuration>()
        .unwrap()];
    sin.include_dcor = false;
    let col = "mean_standard/distance:alpha=1/knn:k=1";
    let t = run_coeff_curve(&sin).unwrap();
    let m = t.column(col).unwrap();
    assert!(m[0] - m[1] >= 0.5, "{m:?}");

    sin.grid = vec![0.0];
    sin.reps = 2;
    let mut means = vec![m[0]];
    for n in [8000, 20000] {
        sin.n = n;
        means.push(run_coeff_curve(&sin).unwrap().column(col).unwrap()[0]);
    }
    assert!(means.windows(2).all(|w| w[0] < w[1]), "{means:?}");
    assert!(means[2] >= 0.85, "{means:?}");
}

#[test]
fn doubling_replicates_narrows_slope_intervals() {
    let mut cfg = LogLogConfig::new(Scale::Desk, 1);
    cfg.cases = [
        "null-ii/linear/distance:alpha=1/knn:k=1",
        "null-ii/linear/distance:alpha=1/knn:k=20",
        "null-i/standard/gaussian:sigma=1/knn:k=1",
    ]
    .iter()
    .map(|c| c.parse::<RateCase>().unwrap())
    .collect();
    let width = |t: &ExperimentTable| -> f64 {
        (0..3)
            .map(|i| {
                t.summary_value(&format!("ci_high_{i}")).unwrap()
                    - t.summary_value(&format!("ci_low_{i}")).unwrap()
            })
            .sum()
    };
    let small = run_loglog_rate(&cfg).unwrap();
    cfg.reps *= 2;
    let large = run_loglog_rate(&cfg).unwrap();
    let factor = width(&small) / width(&large);
    assert!((1.2..=1.8).contains(&factor), "{factor}");
    assert_eq!(
        run_loglog_rate(&config_of::<LogLogConfig>(&large)).unwrap(),
        large
    );
}

#[test]
fn null_z_values_are_centered() {
    let q = QqConfig::new(
        SettingName::NullSettingII,
        "standard/gaussian:sigma=1/mst".parse().unwrap(),
        Scale::Desk,
        33,
    );
    let t = run_qq_null(&q).unwrap();
    assert_eq!(t.rows.len(), 500);
    assert!(t.summary_value("mean_z").unwrap().abs() <= 0.15);
    assert!(t.summary_value("ks_distance").unwrap() <= 0.08);
    let z = t.column("z").unwrap();
    assert!(z.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(run_qq_null(&config_of::<QqConfig>(&t)).unwrap(), t);
}

#[test]
fn maximum_noise_is_near_null() {
    let mut p = PowerConfig::new(SettingName::Sinusoidal, Scale::Desk, 34);
    p.lambdas = vec![0.0, 1.0];
    p.b = 199;
    let t = run_power_curve(&p).unwrap();
    let (low, high) = (&t.rows[0], &t.rows[1]);
    for (j, name) in t.columns.iter().enumerate().skip(1) {
        assert!((0.0..=0.15).contains(&high[j]), "{name}: {}", high[j]);
        assert!(high[j] <= low[j] + 0.1, "{name}");
    }
    assert_eq!(run_power_curve(&config_of::<PowerConfig>(&t)).unwrap(), t);
}
