//! Command-line driver: configuration resolution and the run pipelines.

pub mod config;
pub mod run;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser};
use toml::Table;

use config::{merge, parse_assignment, parse_table, preset, ConfigError, RunConfig, Subcommand};
use run::{default_out_dir, execute, write_error, Invocation, RunError, EXIT_OK};

#[derive(Debug, Parser)]
#[command(name = "iqa", version, about = "Inhomogeneous quantum annealing simulator")]
pub struct Cli {
    /// Worker threads (default: one per core).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Subcommand)]
pub enum Command {
    /// Mean-field dynamics of the p-spin model.
    Meanfield(RunArgs),
    /// State-vector dynamics of a small instance.
    Exact(RunArgs),
    /// Sector-resolved spectrum and level crossings.
    Spectrum(RunArgs),
    /// Static saddle-point solution of the p-spin model.
    Saddle(RunArgs),
    /// Statistics over random instances.
    #[command(subcommand)]
    Ensemble(EnsembleCommand),
}

#[derive(Debug, clap::Subcommand)]
pub enum EnsembleCommand {
    /// Fraction of instances with a ground-level crossing, per N.
    Fraction(RunArgs),
    /// Final energy of both protocols against total time.
    Compare(RunArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Named preset applied before the file and flags.
    #[arg(long)]
    pub preset: Option<String>,
    /// Override a single key, e.g. `--set path.dt=0.05`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    pub set: Vec<String>,
    /// Output directory (`output.dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `model.n`
    #[arg(long)]
    pub n: Option<usize>,
    /// `model.p`
    #[arg(long)]
    pub p: Option<u32>,
    /// `model.seed`, or `ensemble.base_seed` for ensemble runs.
    #[arg(long)]
    pub seed: Option<u64>,
    /// `path.T`
    #[arg(long = "T", allow_hyphen_values = true)]
    pub total_time: Option<f64>,
    /// `path.dt`
    #[arg(long, allow_hyphen_values = true)]
    pub dt: Option<f64>,
    /// `profile.kind`
    #[arg(long)]
    pub profile: Option<String>,
    /// `saddle.s`
    #[arg(long, allow_hyphen_values = true)]
    pub s: Option<f64>,
    /// `saddle.tau`
    #[arg(long, allow_hyphen_values = true)]
    pub tau: Option<f64>,
    /// `saddle.beta`
    #[arg(long, allow_hyphen_values = true)]
    pub beta: Option<f64>,
    /// `ensemble.realizations`
    #[arg(long)]
    pub realizations: Option<u64>,
}

impl Command {
    fn split(&self) -> (Subcommand, &RunArgs) {
        match self {
            Command::Meanfield(a) => (Subcommand::Meanfield, a),
            Command::Exact(a) => (Subcommand::Exact, a),
            Command::Spectrum(a) => (Subcommand::Spectrum, a),
            Command::Saddle(a) => (Subcommand::Saddle, a),
            Command::Ensemble(EnsembleCommand::Fraction(a)) => (Subcommand::EnsembleFraction, a),
            Command::Ensemble(EnsembleCommand::Compare(a)) => (Subcommand::EnsembleCompare, a),
        }
    }
}

fn flag_table(sub: Subcommand, args: &RunArgs) -> Result<Table, ConfigError> {
    let ensemble = matches!(sub, Subcommand::EnsembleFraction | Subcommand::EnsembleCompare);
    let mut pairs: Vec<String> = Vec::new();
    if let Some(v) = args.n {
        pairs.push(format!("model.n={v}"));
    }
    if let Some(v) = args.p {
        pairs.push(format!("model.p={v}"));
    }
    if let Some(v) = args.seed {
        pairs.push(if ensemble { format!("ensemble.base_seed={v}") } else { format!("model.seed={v}") });
    }
    // floats go through Debug so integral values keep a decimal point
    if let Some(v) = args.total_time {
        pairs.push(format!("path.T={v:?}"));
    }
    if let Some(v) = args.dt {
        pairs.push(format!("path.dt={v:?}"));
    }
    if let Some(v) = &args.profile {
        pairs.push(format!("profile.kind=\"{v}\""));
    }
    if let Some(v) = args.s {
        pairs.push(format!("saddle.s={v:?}"));
    }
    if let Some(v) = args.tau {
        pairs.push(format!("saddle.tau={v:?}"));
    }
    if let Some(v) = args.beta {
        pairs.push(format!("saddle.beta={v:?}"));
    }
    if let Some(v) = args.realizations {
        pairs.push(format!("ensemble.realizations={v}"));
    }
    let mut table = Table::new();
    for pair in pairs.iter().chain(&args.set) {
        merge(&mut table, parse_assignment(pair)?);
    }
    if let Some(out) = &args.out {
        let mut section = Table::new();
        section.insert("dir".into(), toml::Value::String(out.display().to_string()));
        merge(&mut table, Table::from_iter([("output".to_string(), toml::Value::Table(section))]));
    }
    Ok(table)
}

/// Merges preset, file and flags into a validated configuration.
pub fn resolve(sub: Subcommand, args: &RunArgs) -> Result<RunConfig, ConfigError> {
    let mut table = Table::new();
    if let Some(name) = &args.preset {
        let p = preset(name)?;
        if p.subcommand != sub {
            return Err(ConfigError::Invalid {
                key: "preset".into(),
                msg: format!("preset '{name}' belongs to `{}`, not `{}`", p.subcommand.as_str(), sub.as_str()),
            });
        }
        table = parse_table(p.body)?;
    }
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Read { path: path.display().to_string(), msg: e.to_string() })?;
        merge(&mut table, parse_table(&text)?);
    }
    merge(&mut table, flag_table(sub, args)?);
    let cfg = RunConfig::from_table(table)?;
    cfg.validate(sub)?;
    Ok(cfg)
}

/// Resolves and runs one subcommand; returns the process exit code.
pub fn run_cli(cli: Cli) -> i32 {
    let threads = cli.threads.unwrap_or(0);
    if threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            log::warn!("could not size the worker pool: {e}");
        }
    }
    let (sub, args) = cli.command.split();
    let cfg = match resolve(sub, args) {
        Ok(cfg) => cfg,
        Err(e) => return fail(None, &RunError::Config(e)),
    };
    let out_dir = default_out_dir(sub, args.preset.as_deref(), &cfg);
    let inv = Invocation {
        subcommand: sub,
        preset: args.preset.clone(),
        config: cfg,
        out_dir: out_dir.clone(),
        threads: rayon::current_num_threads(),
    };
    match execute(&inv) {
        Ok(outcome) => {
            let text = serde_json::to_string_pretty(&outcome.summary).expect("summary serializes");
            // a closed pipe on stdout is not a failure of the run
            let _ = writeln!(std::io::stdout(), "{text}");
            eprintln!("outputs written to {}", outcome.out_dir.display());
            EXIT_OK
        }
        Err(e) => fail(Some(&out_dir), &e),
    }
}

fn fail(out_dir: Option<&std::path::Path>, err: &RunError) -> i32 {
    if let Some(dir) = out_dir {
        write_error(dir, err);
    }
    eprintln!("{}", serde_json::to_string(&err.to_json()).expect("error serializes"));
    err.exit_code()
}

/// Entry point used by the binary.
pub fn main_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run_cli(cli),
        Err(e) => {
            let code = if e.use_stderr() { run::EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            code
        }
    }
}
