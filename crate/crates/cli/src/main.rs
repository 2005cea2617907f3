//! `pitchfork`: experiment runner. Every command writes CSV tables and a
//! `<command>.json` sidecar into the output directory.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use config::{CoverChoice, CriterionChoice, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] pitchfork::Error),
    #[error("{0}")]
    Check(String),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config(_) | CliError::Core(pitchfork::Error::Config(_)) => "config",
            CliError::Io(_) => "io",
            CliError::Core(_) => "numerics",
            CliError::Check(_) => "check_failed",
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_)
            | CliError::Config(_)
            | CliError::Core(pitchfork::Error::Config(_)) => 2,
            _ => 1,
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "pitchfork",
    version,
    about = "Periodic orbits near pitchfork bifurcations of a slow manifold"
)]
struct Cli {
    /// TOML run configuration (see config/schema.toml).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Builtin model name.
    #[arg(long, global = true)]
    model: Option<String>,
    /// TOML model description; overrides --model.
    #[arg(long, global = true)]
    model_file: Option<PathBuf>,
    #[arg(long, global = true)]
    eps: Option<f64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check the model assumptions on a grid in u.
    Validate {
        #[arg(long, default_value_t = 2048)]
        grid: usize,
    },
    /// Sample one trajectory of the extended system.
    Integrate,
    /// Count and classify symmetric periodic orbits (at --eps or over eps_grid).
    Census,
    /// Fit UPOS-small ≈ a ln²ε⁻¹ + b.
    Fit {
        /// census_summary.csv files; repeatable.
        #[arg(long)]
        input: Vec<PathBuf>,
    },
    /// Solve the truncated fixed-point equations.
    Predict,
    /// Newton-continue analytic seeds to true orbits.
    Continue,
    /// Stable-solution census over random ε.
    Sweep {
        #[arg(long, value_enum)]
        criterion: Option<CriterionArg>,
        #[arg(long)]
        n_values: Option<usize>,
    },
    /// Compare truncated blowup integrations with the connection formulae.
    VerifyPainleve,
    /// Stable-interval and image-cover analysis.
    Cover {
        #[arg(long, value_enum)]
        mode: Option<CoverArg>,
    },
    /// Model constants e1..e4 with their extrapolation tables.
    Constants,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CriterionArg {
    Window,
    Trace,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CoverArg {
    Part2,
    Part3,
    Part4,
}

fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(m) = &cli.model {
        cfg.model = m.clone();
        cfg.model_file = None;
    }
    if let Some(p) = &cli.model_file {
        cfg.model_file = Some(p.clone());
    }
    if let Some(e) = cli.eps {
        cfg.eps = Some(e);
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    match &cli.command {
        Command::Fit { input } if !input.is_empty() => cfg.fit.inputs = input.clone(),
        Command::Sweep {
            criterion,
            n_values,
        } => {
            if let Some(c) = criterion {
                cfg.sweep.criterion = match c {
                    CriterionArg::Window => CriterionChoice::Window,
                    CriterionArg::Trace => CriterionChoice::Trace,
                };
            }
            if let Some(n) = n_values {
                cfg.sweep.n_values = *n;
            }
        }
        Command::Cover { mode: Some(m) } => {
            cfg.cover.mode = match m {
                CoverArg::Part2 => CoverChoice::Part2,
                CoverArg::Part3 => CoverChoice::Part3,
                CoverArg::Part4 => CoverChoice::Part4,
            };
        }
        _ => {}
    }
    Ok(cfg)
}

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("PITCHFORK_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        CliError::Config(format!("PITCHFORK_THREADS='{v}' is not a positive integer"))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    let cfg = resolve(&cli)?;
    match cli.command {
        Command::Validate { grid } => commands::validate(&cfg, grid),
        Command::Integrate => commands::integrate(&cfg),
        Command::Census => commands::census(&cfg),
        Command::Fit { .. } => commands::fit(&cfg),
        Command::Predict => commands::predict(&cfg),
        Command::Continue => commands::continuation(&cfg),
        Command::Sweep { .. } => commands::sweep(&cfg),
        Command::VerifyPainleve => commands::verify_painleve(&cfg),
        Command::Cover { .. } => commands::cover(&cfg),
        Command::Constants => commands::constants_cmd(&cfg),
    }
}

fn report(err: &CliError) -> ExitCode {
    let doc = json!({ "error": { "kind": err.kind(), "message": err.to_string() } });
    eprintln!("{doc}");
    ExitCode::from(err.exit_code())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            return report(&CliError::Usage(e.render().to_string()));
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(&e),
    }
}
