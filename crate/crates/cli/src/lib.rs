//! Command-line front end of `dirform`.
//!
//! Each invocation resolves an [`ExperimentConfig`], runs one subcommand and
//! emits a JSON report embedding the resolved config, its hash, the seed and
//! the build version. Reports carry no timestamps, so identical inputs give
//! byte-identical output on any worker count.

pub mod commands;
pub mod config;
pub mod error;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

pub use config::ExperimentConfig;
pub use error::CliError;

pub const VERSION: &str = env!("DIRFORM_VERSION");

#[derive(Debug, Parser)]
#[command(name = "dirform", version = VERSION, about = "Dirichlet forms on Wiener space: experiments and checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub options: Options,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Haar orthonormality, coefficient roundtrip and path covariance.
    Basis,
    /// Closed-form versus brute-force eigen-sum sweep over dyadic points.
    Lemma,
    /// Convergence verdicts and partial sums along the worst chain.
    Closability,
    /// Monte Carlo Dirichlet energy of `f` and `g`.
    Energy,
    /// Generator at the start path and the integration-by-parts check.
    Generator,
    /// Run the Galerkin ensemble to the horizon.
    Simulate,
    /// Local first and second moments against their analytic limits.
    Moments,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Basis => "basis",
            Command::Lemma => "lemma",
            Command::Closability => "closability",
            Command::Energy => "energy",
            Command::Generator => "generator",
            Command::Simulate => "simulate",
            Command::Moments => "moments",
        }
    }
}

/// Flags override the config file. Lists are comma separated.
#[derive(Debug, Clone, Default, Args)]
pub struct Options {
    /// TOML config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for the JSON report and CSV tables; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker cap. Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Overrides `SEED` and the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub dimension: Option<usize>,
    #[arg(long, global = true)]
    pub lambda: Option<String>,
    #[arg(long, global = true)]
    pub lambda_scale: Option<f64>,
    #[arg(long, global = true)]
    pub weight: Option<String>,
    #[arg(long, global = true)]
    pub drift_sign: Option<String>,
    #[arg(long, global = true)]
    pub grid_level: Option<u32>,
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    #[arg(long, global = true)]
    pub max_level: Option<u32>,
    #[arg(long, global = true)]
    pub probe_depth: Option<u32>,
    #[arg(long, global = true)]
    pub truncation_level: Option<u32>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub f: Option<String>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub f_times: Option<Vec<String>>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub g: Option<String>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub g_times: Option<Vec<String>>,
    #[arg(long, global = true)]
    pub truncation: Option<usize>,
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    #[arg(long, global = true)]
    pub horizon: Option<f64>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub ladder: Option<Vec<f64>>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub indices: Option<Vec<u64>>,
    #[arg(long, global = true, allow_hyphen_values = true, value_delimiter = ',')]
    pub start: Option<Vec<f64>>,
    #[arg(long, global = true)]
    pub eval_coordinate: Option<usize>,
    #[arg(long, global = true)]
    pub eval_time: Option<String>,
    /// Skip the CSV tables.
    #[arg(long, global = true)]
    pub no_csv: bool,
}

/// Defaults, then the config file, then `seed_env`, then the flags.
pub fn resolve_config(options: &Options, seed_env: Option<&str>) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &options.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(text) = seed_env {
        cfg.seed = text
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("SEED={text:?} is not an unsigned integer")))?;
    }
    macro_rules! set {
        ($($field:ident),*) => {
            $(if let Some(v) = &options.$field {
                cfg.$field = v.clone();
            })*
        };
    }
    set!(seed, dimension, lambda, lambda_scale, weight, drift_sign, grid_level, samples);
    set!(max_level, probe_depth, truncation_level, f, f_times, g, g_times, truncation, dt);
    set!(indices, start);
    if options.horizon.is_some() {
        cfg.horizon = options.horizon;
    }
    if options.ladder.is_some() {
        cfg.ladder = options.ladder.clone();
    }
    if options.eval_coordinate.is_some() {
        cfg.eval_coordinate = options.eval_coordinate;
    }
    if options.eval_time.is_some() {
        cfg.eval_time = options.eval_time.clone();
    }
    if options.no_csv {
        cfg.csv = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Serialize)]
pub struct Report<'a> {
    pub command: &'static str,
    pub version: &'static str,
    pub config_hash: String,
    pub seed: u64,
    /// Whether every check of the command passed.
    pub passed: bool,
    pub config: &'a ExperimentConfig,
    pub result: serde_json::Value,
}

/// Runs `command` on a resolved config and renders the JSON report.
pub fn execute(command: Command, cfg: &ExperimentConfig) -> Result<(String, Vec<commands::Table>), CliError> {
    let outcome = match command {
        Command::Basis => commands::basis(cfg),
        Command::Lemma => commands::lemma(cfg),
        Command::Closability => commands::closability(cfg),
        Command::Energy => commands::energy(cfg),
        Command::Generator => commands::generator(cfg),
        Command::Simulate => commands::simulate(cfg),
        Command::Moments => commands::moments(cfg),
    }?;
    let report = Report {
        command: command.name(),
        version: VERSION,
        config_hash: cfg.hash(),
        seed: cfg.seed,
        passed: outcome.passed,
        config: cfg,
        result: outcome.result,
    };
    let mut json = serde_json::to_string_pretty(&report).expect("reports serialize");
    json.push('\n');
    let tables = if cfg.csv { outcome.tables } else { Vec::new() };
    Ok((json, tables))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let seed_env = std::env::var("SEED").ok();
    let cfg = resolve_config(&cli.options, seed_env.as_deref())?;
    let work = || execute(cli.command, &cfg);
    let (json, tables) = match cli.options.threads {
        Some(0) => return Err(CliError::Config("--threads must be positive".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(format!("cannot start {n} workers: {e}")))?
            .install(work)?,
        None => work()?,
    };
    match &cli.options.out {
        None => print!("{json}"),
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
                path: dir.display().to_string(),
                source,
            })?;
            let report = dir.join(format!("{}.json", cli.command.name()));
            write(&report, json.as_bytes())?;
            eprintln!("wrote {}", report.display());
            for t in &tables {
                let path = dir.join(t.name);
                write(&path, &t.bytes)?;
                eprintln!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit status: 0 on success, 2 on configuration errors, 3 on
/// numerical failure (overflow or rejection), 1 on I/O errors.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("dirform").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn flags_override_environment_and_defaults() {
        let cli = parse(&["moments", "--weight", "trig", "--start", "-1,2", "--ladder", "1e-3,2e-3,4e-3"]);
        let cfg = resolve_config(&cli.options, Some("11")).unwrap();
        assert_eq!(cfg.seed, 11);
        assert_eq!(cfg.weight, "trig");
        assert_eq!(cfg.start, vec![-1.0, 2.0]);
        let cli = parse(&["moments", "--seed", "3"]);
        assert_eq!(resolve_config(&cli.options, Some("11")).unwrap().seed, 3);
    }

    #[test]
    fn bad_seed_variable_is_a_config_error() {
        let cli = parse(&["lemma"]);
        let err = resolve_config(&cli.options, Some("abc")).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn rejections_exit_with_three() {
        let err = CliError::from(dirform::Error::Rejected("x".into()));
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn closability_of_power_one_and_a_half_diverges() {
        let cli = parse(&["closability", "--lambda", "power:1.5"]);
        let cfg = resolve_config(&cli.options, None).unwrap();
        let (json, _) = execute(cli.command, &cfg).unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["result"]["verdict"], "diverges");
        assert_eq!(v["passed"], true);
    }
}
