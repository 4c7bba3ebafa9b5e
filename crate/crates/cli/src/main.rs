//! `sdltest`: simulation, theory and real-data front end for sdl-core.
//!
//! Exit codes: 0 on success, 1 for configuration or input errors, 2 for
//! numerical failures (including a run where every replicate failed).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use sdl_core::covest;
use sdl_core::harness::{
    self, emit_power_curve, report, run_realdata, run_synthetic, write_realdata_report,
    write_report, CovarianceSpec, ExperimentConfig, LambdaMode, PrecisionMode, RealDataConfig,
    TestKind,
};
use sdl_core::model::{DesignSampler, SignalSpec};
use sdl_core::theory;
use sdl_core::{Result, SdlError};

#[derive(Parser, Debug)]
#[command(
    name = "sdltest",
    version,
    about = "Debiased-Lasso hypothesis testing for Gaussian designs"
)]
struct Cli {
    /// Base seed; overrides the seed of a config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for replicates (default: available cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory; tables go to stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a synthetic experiment from a TOML config or from flags.
    Simulate(SimulateArgs),
    /// Asymptotic power curve (α, G(α, μ₀/τ*)) on an α grid.
    Theory(TheoryArgs),
    /// Evaluate a power upper bound.
    Bound {
        #[command(subcommand)]
        kind: BoundKind,
    },
    /// Thresholded covariance estimate of a design.
    Covest(CovestArgs),
    /// Subsampling pipeline on a real data set.
    Realdata(RealdataArgs),
    /// Print the bundled published reference results.
    Reference,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CovKind {
    Identity,
    Circulant,
}

#[derive(Args, Debug)]
struct DesignArgs {
    #[arg(long, value_enum, default_value = "identity")]
    covariance: CovKind,
    /// Half-bandwidth of the circulant covariance.
    #[arg(long, default_value_t = 5)]
    band: usize,
    /// Off-diagonal value inside the band.
    #[arg(long, default_value_t = 0.1)]
    off: f64,
    /// Dense p×p covariance CSV; overrides --covariance.
    #[arg(long)]
    cov_file: Option<PathBuf>,
}

impl DesignArgs {
    fn spec(&self) -> CovarianceSpec {
        match (&self.cov_file, self.covariance) {
            (Some(path), _) => CovarianceSpec::Dense { path: path.clone() },
            (None, CovKind::Identity) => CovarianceSpec::Identity,
            (None, CovKind::Circulant) => CovarianceSpec::Circulant {
                band: self.band,
                off: self.off,
            },
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PrecisionArg {
    Exact,
    Estimated,
    Identity,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TestArg {
    Sdl,
    Covfree,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// TOML experiment config; the remaining flags are ignored when given.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    p: usize,
    #[arg(long, default_value_t = 600)]
    n: usize,
    #[arg(long, default_value_t = 25)]
    s0: usize,
    #[arg(long, default_value_t = 0.1)]
    mu: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, value_delimiter = ',', default_value = "0.05")]
    alpha: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    replicates: usize,
    /// Fixed λ instead of calibration.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, value_enum, default_value = "exact")]
    precision: PrecisionArg,
    #[arg(long, value_enum, default_value = "sdl")]
    test: TestArg,
    #[command(flatten)]
    design: DesignArgs,
}

#[derive(Args, Debug)]
struct TheoryArgs {
    /// Sparsity levels s₀/p.
    #[arg(long, value_delimiter = ',', default_value = "0.025,0.05,0.1")]
    epsilon: Vec<f64>,
    /// Aspect ratio n/p.
    #[arg(long, default_value_t = 0.6)]
    delta: f64,
    /// Signal magnitude in noise units, μ√n/σ; the default is μ = 0.1 at n = 600.
    #[arg(long, default_value_t = 2.449_489_742_783_178)]
    mu0: f64,
    /// Number of equispaced α values in [0, 1].
    #[arg(long, default_value_t = 101)]
    points: usize,
}

#[derive(Subcommand, Debug)]
enum BoundKind {
    /// Standard-design bound G(α, μ(√(n−s₀+1)+ξ)/σ) + exp(−ξ²/8), minimized over ξ.
    Corollary {
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long)]
        mu: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        s0: usize,
        /// Evaluate at this ξ instead of minimizing.
        #[arg(long)]
        xi: Option<f64>,
    },
    /// General-covariance minimax bound, minimized over ℓ.
    Minimax {
        #[command(flatten)]
        common: BoundCommon,
        /// Evaluate at this ℓ instead of minimizing.
        #[arg(long)]
        ell: Option<f64>,
    },
    /// Power of the test that knows the rest of the support, on a sampled design.
    Oracle {
        #[command(flatten)]
        common: BoundCommon,
    },
}

#[derive(Args, Debug)]
struct BoundCommon {
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long)]
    mu: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long)]
    p: usize,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    s0: usize,
    /// Tested coordinate.
    #[arg(long, default_value_t = 0)]
    index: usize,
    /// Rest of the support; defaults to the first s₀−1 other coordinates.
    #[arg(long, value_delimiter = ',')]
    support: Option<Vec<usize>>,
    #[command(flatten)]
    design: DesignArgs,
}

impl BoundCommon {
    fn support(&self) -> Vec<usize> {
        self.support.clone().unwrap_or_else(|| {
            (0..self.p)
                .filter(|&j| j != self.index)
                .take(self.s0.saturating_sub(1))
                .collect()
        })
    }
}

#[derive(Args, Debug)]
struct CovestArgs {
    /// Headerless n×p design CSV; a design is sampled when absent.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    p: usize,
    #[arg(long, default_value_t = 600)]
    n: usize,
    #[command(flatten)]
    design: DesignArgs,
}

#[derive(Args, Debug)]
struct RealdataArgs {
    /// TOML real-data config.
    #[arg(long, conflicts_with = "data")]
    config: Option<PathBuf>,
    /// Data file (CSV, `?` marks missing values).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Use the UCI communities-and-crime column layout.
    #[arg(long, requires = "data")]
    communities: bool,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    subsample_n: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    alpha: Option<Vec<f64>>,
    /// Fixed λ instead of calibration.
    #[arg(long)]
    lambda: Option<f64>,
}

fn workers(cli: &Cli) -> usize {
    cli.workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn emit(out: Option<&Path>, name: &str, text: &str) -> Result<()> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join(name), text)?;
            eprintln!("wrote {}", dir.join(name).display());
        }
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn simulate(cli: &Cli, args: &SimulateArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => {
            let mut cfg = ExperimentConfig::standard(args.p, args.n, args.s0, args.mu);
            cfg.sigma = args.sigma;
            cfg.alpha = args.alpha.clone();
            cfg.replicates = args.replicates;
            cfg.covariance = args.design.spec();
            cfg.precision = match args.precision {
                PrecisionArg::Exact => PrecisionMode::Exact,
                PrecisionArg::Estimated => PrecisionMode::Estimated,
                PrecisionArg::Identity => PrecisionMode::Identity,
            };
            cfg.test = match args.test {
                TestArg::Sdl => TestKind::Sdl,
                TestArg::Covfree => TestKind::Covfree,
            };
            if let Some(value) = args.lambda {
                cfg.lambda = LambdaMode::Fixed { value };
            }
            cfg
        }
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let result = run_synthetic(&cfg, workers(cli))?;
    match &cli.out {
        Some(dir) => {
            write_report(&result, dir)?;
            eprintln!("wrote report files to {}", dir.display());
        }
        None => emit(None, "report.csv", &report::report_csv(&result.aggregates)?)?,
    }
    for rec in &result.replicates {
        if let Err(e) = &rec.outcome {
            eprintln!(
                "replicate {} (seed {}) failed: {e}",
                rec.replicate, rec.seed
            );
        }
    }
    if result.failed() == result.replicates.len() {
        return Err(SdlError::AllReplicatesFailed(result.replicates.len()));
    }
    Ok(())
}

fn theory_curves(cli: &Cli, args: &TheoryArgs) -> Result<()> {
    if args.points < 2 {
        return Err(SdlError::InvalidInput("--points must be >= 2".into()));
    }
    let grid: Vec<f64> = (0..args.points)
        .map(|k| k as f64 / (args.points - 1) as f64)
        .collect();
    let mut text = String::from("epsilon,delta,mu0,tau_star,alpha,power,degenerate\n");
    for &eps in &args.epsilon {
        let tau = theory::tau_star(eps, args.delta)?;
        for pt in emit_power_curve(eps, args.delta, args.mu0, &grid)? {
            text.push_str(&format!(
                "{eps},{},{},{tau},{},{},{}\n",
                args.delta, args.mu0, pt.alpha, pt.power, pt.degenerate
            ));
        }
    }
    emit(cli.out.as_deref(), "theory.csv", &text)
}

fn bound(cli: &Cli, kind: &BoundKind) -> Result<()> {
    match kind {
        BoundKind::Corollary {
            alpha,
            mu,
            sigma,
            n,
            s0,
            xi,
        } => {
            let (value, xi) = match xi {
                Some(xi) => (
                    theory::corollary1_bound(*alpha, *mu, *sigma, *n, *s0, *xi)?,
                    *xi,
                ),
                None => theory::corollary1_bound_best(*alpha, *mu, *sigma, *n, *s0, 2001)?,
            };
            println!("bound,xi\n{value},{xi}");
        }
        BoundKind::Minimax { common: c, ell } => {
            let cov = DesignSampler::new(c.design.spec().resolve()?, c.p)?;
            let s = c.support();
            let (value, ell) = match ell {
                Some(ell) => (
                    theory::minimax_upper_bound(
                        c.alpha,
                        c.mu,
                        c.sigma,
                        cov.covariance(),
                        c.index,
                        &s,
                        c.s0,
                        c.n,
                        *ell,
                    )?,
                    *ell,
                ),
                None => theory::minimax_upper_bound_best(
                    c.alpha,
                    c.mu,
                    c.sigma,
                    cov.covariance(),
                    c.index,
                    &s,
                    c.s0,
                    c.n,
                )?,
            };
            println!("bound,ell\n{value},{ell}");
        }
        BoundKind::Oracle { common: c } => {
            let sampler = DesignSampler::new(c.design.spec().resolve()?, c.p)?;
            let signal = SignalSpec {
                p: c.p,
                s0: 0,
                mu: 0.0,
            };
            let x = sampler
                .sample(&signal, c.n, c.sigma, cli.seed.unwrap_or(0))?
                .x;
            let value = theory::oracle_power(&x, c.index, &c.support(), c.mu, c.sigma, c.alpha)?;
            println!("oracle_power\n{value}");
        }
    }
    Ok(())
}

fn covest_cmd(cli: &Cli, args: &CovestArgs) -> Result<()> {
    let x = match &args.data {
        Some(path) => harness::config::read_matrix_csv(path)?,
        None => {
            let sampler = DesignSampler::new(args.design.spec().resolve()?, args.p)?;
            let signal = SignalSpec {
                p: args.p,
                s0: 0,
                mu: 0.0,
            };
            sampler
                .sample(&signal, args.n, 1.0, cli.seed.unwrap_or(0))?
                .x
        }
    };
    let est = covest::estimate_covariance(&x)?;
    let (_, ridge) = covest::invert_with_ridge(&est.sigma_hat)?;
    println!("sigma1,sigma2,threshold,kept_fraction,ridge");
    println!(
        "{},{},{},{},{ridge}",
        est.sigma1, est.sigma2, est.threshold, est.kept_fraction
    );
    if let Some(dir) = &cli.out {
        fs::create_dir_all(dir)?;
        fs::write(
            dir.join("sigma_hat.csv"),
            covest::matrix_to_csv(&est.sigma_hat),
        )?;
        eprintln!("wrote {}", dir.join("sigma_hat.csv").display());
    }
    Ok(())
}

fn realdata_cmd(cli: &Cli, args: &RealdataArgs) -> Result<()> {
    let mut cfg = match (&args.config, &args.data) {
        (Some(path), _) => RealDataConfig::from_file(path)?,
        (None, Some(data)) if args.communities => RealDataConfig::communities(data),
        (None, Some(data)) => RealDataConfig::new(data),
        (None, None) => return Err(SdlError::Config("realdata needs --config or --data".into())),
    };
    if let Some(r) = args.replicates {
        cfg.replicates = r;
    }
    if let Some(n) = args.subsample_n {
        cfg.subsample_n = n;
    }
    if let Some(alpha) = &args.alpha {
        cfg.alpha = alpha.clone();
    }
    if args.lambda.is_some() {
        cfg.lambda = args.lambda;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let result = run_realdata(&cfg, workers(cli))?;
    eprintln!(
        "{} rows, {} predictors ({} dropped), {} active",
        result.n_total,
        result.p,
        result.dropped_columns.len(),
        result.n_active
    );
    match &cli.out {
        Some(dir) => {
            write_realdata_report(&result, dir)?;
            eprintln!("wrote report files to {}", dir.display());
        }
        None => emit(None, "report.csv", &report::report_csv(&result.aggregates)?)?,
    }
    if result.replicates.iter().all(|r| r.outcome.is_err()) {
        return Err(SdlError::AllReplicatesFailed(result.replicates.len()));
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(args) => simulate(cli, args),
        Command::Theory(args) => theory_curves(cli, args),
        Command::Bound { kind } => bound(cli, kind),
        Command::Covest(args) => covest_cmd(cli, args),
        Command::Realdata(args) => realdata_cmd(cli, args),
        Command::Reference => emit(
            cli.out.as_deref(),
            "reference_results.csv",
            harness::REFERENCE_RESULTS_CSV,
        ),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 1 } else { 2 })
        }
    }
}
