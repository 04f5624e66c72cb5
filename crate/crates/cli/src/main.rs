//! Command-line driver: experiments, record simulation, and the regression suite.

mod config;
mod error;
mod experiments;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;

use qsmooth::regress::SuiteOptions;

use config::{Experiment, ExperimentConfig, HardyParams, MagnetometerAction, MagnetometerParams, WeakmeasParams};
use error::{CliError, CliResult};
use experiments::{Check, Ctx, Outcome};

#[derive(Parser, Debug)]
#[command(name = "qsmooth", version, about = "Time-symmetric filtering and smoothing experiments")]
struct Cli {
    /// Seed for every random stream (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; falls back to QSMOOTH_THREADS.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Grid smoother for a classical signal under Poisson counting.
    Classical {
        #[arg(long)]
        config: PathBuf,
    },
    /// Hybrid classical-quantum smoother.
    Hybrid {
        #[arg(long)]
        config: PathBuf,
    },
    /// Atomic magnetometer pipeline.
    Magnetometer {
        #[arg(value_enum)]
        action: MagnetometerAction,
        /// Magnetometer model JSON; the benchmark defaults when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory with record.csv/record.json to estimate from.
        #[arg(long)]
        record: Option<PathBuf>,
    },
    /// Hardy's paradox tables and probabilities.
    Hardy {
        #[command(subcommand)]
        command: HardyCommand,
    },
    /// Weak-measurement tomography of the smoothing quasiprobability.
    Weakmeas {
        #[command(subcommand)]
        command: WeakmeasCommand,
    },
    /// Runs the acceptance checks and writes regress.json.
    Regress {
        /// Adds this amount to one entry of f2 before the golden comparison.
        #[arg(long)]
        fault_f2: Option<f64>,
        /// Comma-separated criterion ids; all when absent.
        #[arg(long, value_delimiter = ',')]
        only: Vec<u32>,
    },
    /// Runs an experiment described by a config file.
    Run {
        config: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
enum HardyCommand {
    Report {
        /// CC, CD, DC or DD; all four when absent.
        #[arg(long)]
        outcome: Option<String>,
    },
}

#[derive(Subcommand, Debug)]
enum WeakmeasCommand {
    Demo {
        #[arg(long = "N", default_value_t = 4)]
        n: usize,
        #[arg(long, default_value_t = 0.05)]
        eps: f64,
        #[arg(long, default_value_t = 1_000_000)]
        shots: u64,
        /// hardy:<outcome> or random.
        #[arg(long, default_value = "hardy:DD")]
        pair: String,
    },
}

#[derive(Serialize)]
struct RunReport<'a> {
    experiment: &'a str,
    seed: u64,
    version: &'a str,
    wall_seconds: f64,
    config: serde_json::Value,
    files: &'a [String],
    checks: &'a [Check],
    all_passed: bool,
}

fn init_threads(flag: Option<usize>) -> CliResult<()> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var("QSMOOTH_THREADS") {
            Ok(v) => Some(
                v.trim()
                    .parse()
                    .map_err(|_| CliError::Schema(format!("QSMOOTH_THREADS must be a positive integer, got '{v}'")))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(CliError::Schema("thread count must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Schema(e.to_string()))?;
    }
    Ok(())
}

/// Experiment name, echoed config, and the runner.
type Job = (String, serde_json::Value, Box<dyn FnOnce(&Ctx) -> CliResult<Outcome>>);

fn job_for(experiment: Experiment, params: serde_json::Value) -> CliResult<Job> {
    let p = "parameters";
    Ok(match experiment {
        Experiment::ClassicalSmoother => {
            let c: config::ClassicalParams = config::parse_value(params.clone(), p)?;
            ("classical-smoother".into(), params, Box::new(move |ctx| experiments::classical(&c, ctx)))
        }
        Experiment::HybridSmoother => {
            let c: config::HybridParams = config::parse_value(params.clone(), p)?;
            ("hybrid-smoother".into(), params, Box::new(move |ctx| experiments::hybrid(&c, ctx)))
        }
        Experiment::Magnetometer => {
            let c: MagnetometerParams = config::parse_value(params.clone(), p)?;
            ("magnetometer".into(), params, Box::new(move |ctx| experiments::magnetometer(&c, ctx)))
        }
        Experiment::Hardy => {
            let c: HardyParams = config::parse_value(params.clone(), p)?;
            ("hardy".into(), params, Box::new(move |ctx| experiments::hardy(&c, ctx)))
        }
        Experiment::Weakmeas => {
            let c: WeakmeasParams = config::parse_value(params.clone(), p)?;
            ("weakmeas".into(), params, Box::new(move |ctx| experiments::weakmeas(&c, ctx)))
        }
    })
}

fn to_value(v: &impl Serialize) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}

fn read_value(path: &Path) -> CliResult<serde_json::Value> {
    config::read_config(path)
}

fn execute(cli: Cli) -> CliResult<()> {
    init_threads(cli.threads)?;
    let mut seed = cli.seed;
    let mut out = cli.out;
    let (name, echo, job): Job = match cli.command {
        Command::Classical { config } => job_for(Experiment::ClassicalSmoother, read_value(&config)?)?,
        Command::Hybrid { config } => job_for(Experiment::HybridSmoother, read_value(&config)?)?,
        Command::Magnetometer { action, config, record } => {
            let model = match config {
                Some(p) => config::read_config(&p)?,
                None => qsmooth::magnetometer::MagnetometerConfig::benchmark_default(),
            };
            job_for(Experiment::Magnetometer, to_value(&MagnetometerParams { action, model, record }))?
        }
        Command::Hardy {
            command: HardyCommand::Report { outcome },
        } => job_for(Experiment::Hardy, to_value(&HardyParams { outcome }))?,
        Command::Weakmeas {
            command: WeakmeasCommand::Demo { n, eps, shots, pair },
        } => job_for(Experiment::Weakmeas, to_value(&WeakmeasParams { n, eps, shots, pair }))?,
        Command::Regress { fault_f2, only } => {
            let opts = SuiteOptions {
                hardy_f2_perturbation: fault_f2.unwrap_or(0.0),
            };
            let echo = serde_json::json!({ "fault_f2": fault_f2, "only": only });
            ("regress".to_string(), echo, Box::new(move |ctx: &Ctx| experiments::regress(&opts, &only, ctx)) as Box<_>)
        }
        Command::Run { config } => {
            let exp: ExperimentConfig = config::read_config(&config)?;
            seed = seed.or(exp.seed);
            out = out.or(exp.output);
            job_for(exp.experiment, exp.parameters)?
        }
    };
    let ctx = Ctx {
        out: out.unwrap_or_else(|| PathBuf::from("qsmooth-out")),
        seed: seed.unwrap_or(0),
    };
    std::fs::create_dir_all(&ctx.out).map_err(|e| CliError::io(&ctx.out, e))?;
    let start = Instant::now();
    let outcome = job(&ctx)?;
    let all_passed = outcome.checks.iter().all(|c| c.passed);
    let report = RunReport {
        experiment: &name,
        seed: ctx.seed,
        version: env!("CARGO_PKG_VERSION"),
        wall_seconds: start.elapsed().as_secs_f64(),
        config: echo,
        files: &outcome.files,
        checks: &outcome.checks,
        all_passed,
    };
    let path = ctx.out.join("run.json");
    let f = std::fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
    serde_json::to_writer_pretty(f, &report)?;
    for c in outcome.checks.iter().filter(|c| !c.passed) {
        log::error!("check failed: {}: {}", c.name, c.detail);
    }
    if all_passed {
        Ok(())
    } else {
        let n = outcome.checks.iter().filter(|c| !c.passed).count();
        Err(CliError::Assertion(format!("{n} check(s) failed, see {}", path.display())))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
