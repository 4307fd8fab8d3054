use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sexratio_cli::{parse_models, parse_scenarios, CliError, RunConfig, StackMode, ValidationMode};
use sexratio_core::synth::WorldSpec;

/// Bayesian estimation and scenario projection of the sex ratio at birth.
#[derive(Debug, Parser)]
#[command(name = "sexratio", version)]
struct Cli {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run seed; every random step derives its stream from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for chains and per-country work.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Run directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit models in pipeline order and persist chains and diagnostics.
    Fit(FitArgs),
    /// Write scenario projections of the SRB to 2100.
    Project(ProjectArgs),
    /// Write missing female births per scenario.
    Births(BirthsArgs),
    /// Run an out-of-sample validation exercise.
    Validate(ValidateArgs),
    /// Generate a synthetic world bundle.
    Synth(SynthArgs),
    /// Write convergence tables for the stored fits.
    Diagnose,
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Comma-separated models, e.g. `m1,m2`.
    #[arg(long)]
    models: Option<String>,
    #[arg(long, value_enum)]
    stack: Option<StackMode>,
}

#[derive(Debug, Args)]
struct ProjectArgs {
    /// Comma-separated scenarios, e.g. `S1,S2,S3`.
    #[arg(long)]
    scenarios: Option<String>,
    /// Posterior draws per country.
    #[arg(long)]
    draws: Option<usize>,
}

#[derive(Debug, Args)]
struct BirthsArgs {
    /// Comma-separated scenarios; should match the projection's.
    #[arg(long)]
    scenarios: Option<String>,
    /// Posterior draws per country; should match the projection's.
    #[arg(long)]
    draws: Option<usize>,
    /// First year of the accounting window.
    #[arg(long)]
    t1: Option<i32>,
    /// Last year of the accounting window.
    #[arg(long)]
    t2: Option<i32>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long, value_enum)]
    mode: Option<ValidationMode>,
    /// `m1` or `m2`.
    #[arg(long)]
    model: Option<String>,
    /// First held-out year for `--mode recent`.
    #[arg(long)]
    cutoff: Option<i32>,
    /// Held-out fraction for `--mode random`.
    #[arg(long)]
    fraction: Option<f64>,
    /// Repetitions for `--mode random`.
    #[arg(long)]
    reps: Option<usize>,
    /// Random one-per-country test sets drawn to score the predictions.
    #[arg(long)]
    permutations: Option<usize>,
    /// Draws used for the prediction from 1970.
    #[arg(long)]
    draws: Option<usize>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// JSON world specification, replacing the config's `synth` section.
    #[arg(long)]
    spec: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.threads {
        cfg.threads = Some(t);
    }
    if let Some(o) = cli.out {
        cfg.out = o;
    }
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    match cli.command {
        Command::Fit(a) => {
            if let Some(m) = a.models {
                cfg.models = parse_models(&m)?;
            }
            if let Some(s) = a.stack {
                cfg.stack = s;
            }
            sexratio_cli::fit(&cfg)
        }
        Command::Project(a) => {
            if let Some(s) = a.scenarios {
                cfg.scenarios = parse_scenarios(&s)?;
            }
            if let Some(d) = a.draws {
                cfg.draws = d;
            }
            sexratio_cli::project(&cfg)
        }
        Command::Births(a) => {
            if let Some(s) = a.scenarios {
                cfg.scenarios = parse_scenarios(&s)?;
            }
            if let Some(d) = a.draws {
                cfg.draws = d;
            }
            if let Some(t) = a.t1 {
                cfg.births_window.t1 = t;
            }
            if let Some(t) = a.t2 {
                cfg.births_window.t2 = t;
            }
            sexratio_cli::births(&cfg)
        }
        Command::Validate(a) => {
            let v = &mut cfg.validation;
            if let Some(m) = a.mode {
                v.mode = m;
            }
            if let Some(m) = a.model {
                v.model = m.parse().map_err(CliError::Config)?;
            }
            if a.cutoff.is_some() {
                v.cutoff = a.cutoff;
            }
            if let Some(f) = a.fraction {
                v.fraction = f;
            }
            if let Some(r) = a.reps {
                v.reps = r;
            }
            if let Some(p) = a.permutations {
                v.permutations = p;
            }
            if let Some(d) = a.draws {
                cfg.draws = d;
            }
            sexratio_cli::validate(&cfg)
        }
        Command::Synth(a) => {
            if let Some(path) = a.spec {
                let text = std::fs::read_to_string(&path).map_err(|e| CliError::Io {
                    path: path.clone(),
                    source: e,
                })?;
                cfg.synth = serde_json::from_str::<WorldSpec>(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            }
            sexratio_cli::synth(&cfg)
        }
        Command::Diagnose => sexratio_cli::diagnose(&cfg),
    }
}
