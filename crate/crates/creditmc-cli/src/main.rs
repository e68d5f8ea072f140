//! Command-line driver for the creditmc estimators.
//!
//! Exit codes: 0 on success, 1 on I/O failure, 2 on configuration or domain
//! errors, 3 when an iterative procedure fails to converge.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use creditmc::error::Error;
use creditmc::harness::{build_levels, run_experiment, run_quantile, ExperimentConfig};
use creditmc::report::{
    quantiles_to_csv, quantiles_to_json, reports_to_csv, reports_to_json, write_quantiles,
    write_reports, OutputFormat,
};

#[derive(Parser)]
#[command(
    name = "creditmc",
    version,
    about = "Rare-event tail probability, VaR, and CVaR estimation for copula credit portfolios"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Estimate the tail probability P(L > gamma)
    Estimate(RunArgs),
    /// Estimate value-at-risk and conditional value-at-risk at level alpha
    Quantile(RunArgs),
    /// Build an adaptive splitting schedule and write it to a file
    Levels(LevelArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON config file; explicit flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Default model: gaussian, t, or clayton
    #[arg(long)]
    model: Option<String>,
    /// Estimator: cmc, is1, is2, ce, ds-ff, or ds-fe
    #[arg(long)]
    method: Option<String>,
    /// Confidence level in (0, 1)
    #[arg(long)]
    alpha: Option<f64>,
    /// Loss threshold; omitted means "estimate the alpha-VaR first"
    #[arg(long, allow_negative_numbers = true)]
    gamma: Option<f64>,
    /// Draws per run (roots per run for ds-ff; ignored by ds-fe)
    #[arg(long)]
    n: Option<usize>,
    /// Number of independent replications
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Benchmark portfolio size (multiple of 100, at most 1000)
    #[arg(long)]
    d: Option<usize>,
    /// Degrees of freedom for the t model
    #[arg(long)]
    dof: Option<f64>,
    /// Clayton dependence parameter
    #[arg(long)]
    eta: Option<f64>,
    /// Splitting factor
    #[arg(long)]
    split: Option<usize>,
    /// Number of uniform time levels for the splitting methods
    #[arg(long)]
    levels: Option<usize>,
    /// Pilot sample size for the cross-entropy fit
    #[arg(long = "pilot-n")]
    pilot_n: Option<usize>,
    /// Portfolio CSV file (columns k,c,x,a1..am or k,c,p,a1..am)
    #[arg(long)]
    portfolio: Option<PathBuf>,
    /// Level schedule file for the splitting methods
    #[arg(long)]
    schedule: Option<PathBuf>,
    /// Output file; omitted means stdout
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format: csv or json
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args)]
struct LevelArgs {
    /// JSON config file; explicit flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Default model: gaussian, t, or clayton
    #[arg(long)]
    model: Option<String>,
    /// Confidence level used when gamma must be estimated
    #[arg(long)]
    alpha: Option<f64>,
    /// Loss threshold the schedule should target
    #[arg(long, allow_negative_numbers = true)]
    gamma: Option<f64>,
    /// Draws per run for the threshold-estimation pass
    #[arg(long)]
    n: Option<usize>,
    /// Runs for the threshold-estimation pass
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Benchmark portfolio size (multiple of 100, at most 1000)
    #[arg(long)]
    d: Option<usize>,
    /// Degrees of freedom for the t model
    #[arg(long)]
    dof: Option<f64>,
    /// Clayton dependence parameter
    #[arg(long)]
    eta: Option<f64>,
    /// Pilot path count (also the split factor recorded in the schedule)
    #[arg(long)]
    split: Option<usize>,
    /// Target per-level survival probability
    #[arg(long)]
    rho: Option<f64>,
    /// Tolerance on the per-level survival probability
    #[arg(long = "eps-p")]
    eps_p: Option<f64>,
    /// Stop once the next level is this close to the horizon
    #[arg(long = "eps-t")]
    eps_t: Option<f64>,
    /// Portfolio CSV file
    #[arg(long)]
    portfolio: Option<PathBuf>,
    /// Schedule file to write
    #[arg(long)]
    out: PathBuf,
}

fn base_config(path: &Option<PathBuf>) -> Result<ExperimentConfig, Error> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn run_config(args: &RunArgs) -> Result<ExperimentConfig, Error> {
    let mut cfg = base_config(&args.config)?;
    if let Some(v) = &args.model {
        cfg.model = v.parse()?;
    }
    if let Some(v) = &args.method {
        cfg.method = v.parse()?;
    }
    if let Some(v) = args.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = args.gamma {
        cfg.gamma = Some(v);
    }
    if let Some(v) = args.n {
        cfg.n = v;
    }
    if let Some(v) = args.runs {
        cfg.runs = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.d {
        cfg.d = v;
    }
    if let Some(v) = args.dof {
        cfg.dof = v;
    }
    if let Some(v) = args.eta {
        cfg.eta = v;
    }
    if let Some(v) = args.split {
        cfg.split = v;
    }
    if let Some(v) = args.levels {
        cfg.levels = v;
    }
    if let Some(v) = args.pilot_n {
        cfg.pilot_n = v;
    }
    if let Some(v) = &args.portfolio {
        cfg.portfolio = Some(v.to_string_lossy().into_owned());
    }
    if let Some(v) = &args.schedule {
        cfg.schedule = Some(v.to_string_lossy().into_owned());
    }
    if let Some(v) = &args.out {
        cfg.out = Some(v.to_string_lossy().into_owned());
    }
    if let Some(v) = &args.format {
        cfg.format = v.clone();
    }
    Ok(cfg)
}

fn level_config(args: &LevelArgs) -> Result<ExperimentConfig, Error> {
    let mut cfg = base_config(&args.config)?;
    if let Some(v) = &args.model {
        cfg.model = v.parse()?;
    }
    if let Some(v) = args.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = args.gamma {
        cfg.gamma = Some(v);
    }
    if let Some(v) = args.n {
        cfg.n = v;
    }
    if let Some(v) = args.runs {
        cfg.runs = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.d {
        cfg.d = v;
    }
    if let Some(v) = args.dof {
        cfg.dof = v;
    }
    if let Some(v) = args.eta {
        cfg.eta = v;
    }
    if let Some(v) = args.split {
        cfg.split = v;
    }
    if let Some(v) = args.rho {
        cfg.rho = v;
    }
    if let Some(v) = args.eps_p {
        cfg.eps_p = v;
    }
    if let Some(v) = args.eps_t {
        cfg.eps_t = v;
    }
    if let Some(v) = &args.portfolio {
        cfg.portfolio = Some(v.to_string_lossy().into_owned());
    }
    Ok(cfg)
}

fn output_format(cfg: &ExperimentConfig) -> Result<OutputFormat, Error> {
    cfg.format.parse()
}

fn run(cmd: &Cmd) -> Result<(), Error> {
    match cmd {
        Cmd::Estimate(args) => {
            let cfg = run_config(args)?;
            let format = output_format(&cfg)?;
            let (record, _) = run_experiment(&cfg)?;
            match &cfg.out {
                Some(path) => write_reports(&[record], format, std::path::Path::new(path))?,
                None => {
                    let text = match format {
                        OutputFormat::Csv => reports_to_csv(&[record]),
                        OutputFormat::Json => reports_to_json(&[record])?,
                    };
                    print!("{text}");
                }
            }
            Ok(())
        }
        Cmd::Quantile(args) => {
            let cfg = run_config(args)?;
            let format = output_format(&cfg)?;
            let record = run_quantile(&cfg)?;
            match &cfg.out {
                Some(path) => write_quantiles(&[record], format, std::path::Path::new(path))?,
                None => {
                    let text = match format {
                        OutputFormat::Csv => quantiles_to_csv(&[record]),
                        OutputFormat::Json => quantiles_to_json(&[record])?,
                    };
                    print!("{text}");
                }
            }
            Ok(())
        }
        Cmd::Levels(args) => {
            let cfg = level_config(args)?;
            let sched = build_levels(&cfg)?;
            sched.save(&args.out)?;
            println!("wrote {} levels to {}", sched.levels(), args.out.display());
            Ok(())
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Parameter(_)
        | Error::Domain(_)
        | Error::Config(_)
        | Error::Unsupported(_)
        | Error::InfeasibleThreshold(_)
        | Error::Parse(_) => 2,
        Error::Convergence(_)
        | Error::OptimizerStalled { .. }
        | Error::Schedule(_)
        | Error::AlphaInfeasible(_)
        | Error::DegenerateFit(_)
        | Error::Bracket { .. } => 3,
        Error::Io(_) => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
