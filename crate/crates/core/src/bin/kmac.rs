use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use kmac::data::load_csv;
use kmac::harness::{
    run_coeff_curve, run_loglog_rate, run_power_curve, run_qq_null, simulate_to_dir, write_table,
    CoeffCurveConfig, Configuration, ExperimentTable, LogLogConfig, OutputFormat, PowerConfig,
    PowerTest, QqConfig, RateCase, Scale,
};
use kmac::inference::{
    asymptotic_test, dcov_test, estimate_and_scale, hsic_test, permutation_test, RankGrids,
    TestReport,
};
use kmac::oracles::{Design, SettingName, SettingSpec};
use kmac::ranks::GridSpec;
use kmac::{EstimatorKind, GraphSpec, KernelSpec, KmacError};

#[derive(Parser)]
#[command(
    name = "kmac",
    version,
    about = "Kernel measures of association and independence tests"
)]
struct Cli {
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Machine-readable output on stdout.
    #[arg(long, global = true)]
    json: bool,
    /// Overnight experiment sizes (1000 replicates) instead of desk-scale defaults.
    #[arg(long, global = true)]
    full_scale: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Estimator {
    #[arg(long, default_value = "distance:alpha=1")]
    kernel: KernelSpec,
    #[arg(long, default_value = "knn:k=1")]
    graph: GraphSpec,
    #[arg(long, default_value = "standard")]
    estimator: EstimatorKind,
    /// Target grid for the `x` ranks.
    #[arg(long)]
    grid_x: Option<GridSpec>,
    /// Target grid for the `y` ranks.
    #[arg(long)]
    grid_y: Option<GridSpec>,
}

#[derive(Args)]
struct Inputs {
    #[arg(long)]
    x: PathBuf,
    #[arg(long)]
    y: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Asymptotic,
    Perm,
    Dcov,
    Hsic,
}

#[derive(Clone, Copy, ValueEnum)]
enum DesignArg {
    Power,
    Coefficient,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the association between the columns of two CSV files.
    Compute {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        est: Estimator,
    },
    /// Test independence.
    Test {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        est: Estimator,
        #[arg(long, value_enum, default_value = "asymptotic")]
        method: Method,
        /// Permutations.
        #[arg(long = "B", default_value_t = 1000)]
        b: usize,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
    /// Draw a simulation setting and write x.csv and y.csv.
    Simulate {
        #[arg(long)]
        setting: SettingName,
        #[arg(long, default_value_t = 0.0)]
        lambda: f64,
        #[arg(long, default_value_t = 300)]
        n: usize,
        #[arg(long, value_enum, default_value = "power")]
        design: DesignArg,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Standardized statistics under a null setting against normal quantiles.
    QqNull {
        #[arg(long, default_value = "null-ii")]
        setting: SettingName,
        #[arg(long, default_value = "standard/gaussian:sigma=1/mst")]
        config: Configuration,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Log-log decay of the numerator's spread with the sample size.
    Loglog {
        /// `setting/estimator/kernel/graph`; repeatable.
        #[arg(long = "case")]
        cases: Vec<RateCase>,
        /// Sample sizes, comma separated.
        #[arg(long, value_delimiter = ',')]
        n_grid: Vec<usize>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rejection rates over a noise grid.
    Power {
        #[arg(long, default_value = "sinusoidal")]
        setting: SettingName,
        /// `estimator/kernel/graph`, `dcor` or `hsic`; repeatable.
        #[arg(long = "test")]
        tests: Vec<PowerTest>,
        #[arg(long, value_delimiter = ',')]
        lambdas: Vec<f64>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long = "B")]
        b: Option<usize>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean estimates over a noise or correlation grid.
    CoeffCurve {
        #[arg(long, default_value = "sinusoidal")]
        setting: SettingName,
        /// `estimator/kernel/graph`; repeatable.
        #[arg(long = "config")]
        configs: Vec<Configuration>,
        #[arg(long, value_delimiter = ',')]
        grid: Vec<f64>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        no_dcor: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_degenerate_data() { 3 } else { 2 })
        }
    }
}

fn run(cli: Cli) -> kmac::Result<()> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| KmacError::InvalidParameter(e.to_string()))?;
    }
    let scale = if cli.full_scale {
        Scale::Full
    } else {
        Scale::Desk
    };
    let format = if cli.json {
        OutputFormat::Json
    } else {
        OutputFormat::Csv
    };
    match cli.command {
        Command::Compute { inputs, est } => {
            warn_kernel(&est.kernel);
            let (x, y) = load(&inputs)?;
            let grids = grids(&est, &x, &y)?;
            let (e, s) = estimate_and_scale(
                est.estimator,
                &x,
                &y,
                &est.kernel,
                &est.graph,
                grids.as_ref(),
            )?;
            if cli.json {
                println!(
                    "{}",
                    json!({ "estimate": e, "s2": s.s2, "graph_stats": [s.g1, s.g2, s.g3] })
                );
            } else {
                println!("estimate\t{}", e.value);
                println!("numerator\t{}", e.numerator);
                println!("denominator\t{}", e.denominator);
                println!("s2\t{}", s.s2);
            }
        }
        Command::Test {
            inputs,
            est,
            method,
            b,
            alpha,
        } => {
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(KmacError::InvalidParameter(format!(
                    "alpha must lie in (0, 1), got {alpha}"
                )));
            }
            let (x, y) = load(&inputs)?;
            let report: TestReport = match method {
                Method::Asymptotic | Method::Perm => {
                    warn_kernel(&est.kernel);
                    let grids = grids(&est, &x, &y)?;
                    if matches!(method, Method::Asymptotic) {
                        asymptotic_test(
                            est.estimator,
                            &x,
                            &y,
                            &est.kernel,
                            &est.graph,
                            grids.as_ref(),
                        )?
                    } else {
                        permutation_test(
                            est.estimator,
                            &x,
                            &y,
                            &est.kernel,
                            &est.graph,
                            grids.as_ref(),
                            b,
                            cli.seed,
                        )?
                    }
                }
                Method::Dcov => dcov_test(&x, &y, b, cli.seed)?,
                Method::Hsic => {
                    warn_kernel(&est.kernel);
                    hsic_test(&x, &y, &est.kernel, b, cli.seed)?
                }
            };
            let reject = report.rejects(alpha);
            if cli.json {
                println!(
                    "{}",
                    json!({ "report": report, "alpha": alpha, "reject": reject })
                );
            } else {
                println!("statistic\t{}", report.statistic);
                if let Some(z) = report.z {
                    println!("z\t{z}");
                }
                println!("p_value\t{}", report.p_value);
                println!("estimate\t{}", report.estimator_value);
                println!("reject\t{reject}");
            }
        }
        Command::Simulate {
            setting,
            lambda,
            n,
            design,
            out,
        } => {
            let mut spec = SettingSpec::new(setting, lambda, n, cli.seed);
            if let DesignArg::Coefficient = design {
                spec.design = Design::Coefficient;
            }
            let (px, py) = simulate_to_dir(&spec, &out)?;
            if cli.json {
                println!("{}", json!({ "spec": spec, "x": px, "y": py }));
            } else {
                println!("{}\n{}", px.display(), py.display());
            }
        }
        Command::QqNull {
            setting,
            config,
            n,
            reps,
            out,
        } => {
            warn_kernel(&config.kernel);
            let mut cfg = QqConfig::new(setting, config, scale, cli.seed);
            cfg.n = n.unwrap_or(cfg.n);
            cfg.reps = reps.unwrap_or(cfg.reps);
            emit(&run_qq_null(&cfg)?, out, format)?;
        }
        Command::Loglog {
            cases,
            n_grid,
            reps,
            out,
        } => {
            let mut cfg = LogLogConfig::new(scale, cli.seed);
            if !cases.is_empty() {
                cfg.cases = cases;
            }
            if !n_grid.is_empty() {
                cfg.n_grid = n_grid;
            }
            cfg.reps = reps.unwrap_or(cfg.reps);
            emit(&run_loglog_rate(&cfg)?, out, format)?;
        }
        Command::Power {
            setting,
            tests,
            lambdas,
            n,
            b,
            reps,
            alpha,
            out,
        } => {
            let mut cfg = PowerConfig::new(setting, scale, cli.seed);
            if !tests.is_empty() {
                cfg.tests = tests;
            }
            if !lambdas.is_empty() {
                cfg.lambdas = lambdas;
            }
            cfg.n = n.unwrap_or(cfg.n);
            cfg.b = b.unwrap_or(cfg.b);
            cfg.reps = reps.unwrap_or(cfg.reps);
            cfg.alpha = alpha;
            emit(&run_power_curve(&cfg)?, out, format)?;
        }
        Command::CoeffCurve {
            setting,
            configs,
            grid,
            n,
            reps,
            no_dcor,
            out,
        } => {
            let mut cfg = CoeffCurveConfig::new(setting, scale, cli.seed);
            if !configs.is_empty() {
                cfg.configs = configs;
            }
            if !grid.is_empty() {
                cfg.grid = grid;
            }
            cfg.n = n.unwrap_or(cfg.n);
            cfg.reps = reps.unwrap_or(cfg.reps);
            cfg.include_dcor = !no_dcor;
            emit(&run_coeff_curve(&cfg)?, out, format)?;
        }
    }
    Ok(())
}

fn load(inputs: &Inputs) -> kmac::Result<(kmac::DataMatrix, kmac::DataMatrix)> {
    Ok((load_csv(&inputs.x)?, load_csv(&inputs.y)?))
}

fn grids(
    est: &Estimator,
    x: &kmac::DataMatrix,
    y: &kmac::DataMatrix,
) -> kmac::Result<Option<RankGrids>> {
    if est.estimator != EstimatorKind::Rank {
        return Ok(None);
    }
    let gx = est
        .grid_x
        .unwrap_or_else(|| GridSpec::default_for(x.ncols()));
    let gy = est
        .grid_y
        .unwrap_or_else(|| GridSpec::default_for(y.ncols()));
    RankGrids::from_specs(gx, gy, x, y).map(Some)
}

fn warn_kernel(kernel: &KernelSpec) {
    if !kernel.is_characteristic() {
        eprintln!("warning: {kernel} is not characteristic; a zero population value does not imply independence");
    }
}

fn emit(table: &ExperimentTable, out: Option<PathBuf>, format: OutputFormat) -> kmac::Result<()> {
    match out {
        Some(path) => write_table(table, path, format),
        None => {
            match format {
                OutputFormat::Csv => print!("{}", table.to_csv_string()),
                OutputFormat::Json => {
                    println!("{}", serde_json::to_string_pretty(&table.to_json())?)
                }
            }
            Ok(())
        }
    }
}
