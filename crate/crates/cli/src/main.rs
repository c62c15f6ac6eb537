//! `stokes-ocp`: solves, references and convergence studies from the shell.

mod commands;
mod config;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::CliError;
use crate::config::{ConfigError, RunConfig};

#[derive(Parser)]
#[command(name = "stokes-ocp", version, about = "State-constrained Stokes optimal control solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Forward solve; trajectory norms, divergence and manufactured errors.
    SolveState(Overrides),
    /// One optimal control solve with KKT report and solution dumps.
    SolveOcp(Overrides),
    /// Error and EOC table over the given h and k lists.
    Convergence(Overrides),
    /// Fine-grid reference control for an example, written to --ref.
    Reference(Overrides),
}

#[derive(Args)]
struct Overrides {
    /// Flat `key = value` file; flags below take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    example: Option<String>,
    /// Comma list of mesh sizes, e.g. `1/8,1/16` or `2^-3`.
    #[arg(long)]
    h: Option<String>,
    /// Comma list of time steps.
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    beta: Option<String>,
    #[arg(long)]
    qbound_upper: Option<String>,
    #[arg(long)]
    qbound_lower: Option<String>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long = "ref")]
    reference: Option<String>,
    #[arg(long)]
    workers: Option<String>,
    #[arg(long)]
    tol_feas: Option<String>,
    #[arg(long)]
    tol_comp: Option<String>,
    #[arg(long)]
    tol_stationarity: Option<String>,
    #[arg(long)]
    tol_minres: Option<String>,
    #[arg(long)]
    max_outer: Option<String>,
    /// Any other key, as `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Overrides {
    fn resolve(self) -> Result<RunConfig, ConfigError> {
        let mut pairs = match &self.config {
            Some(p) => config::read_file(p)?,
            None => BTreeMap::new(),
        };
        for kv in &self.set {
            let (k, v) = kv.split_once('=').ok_or_else(|| ConfigError::Syntax {
                path: "--set".into(),
                line: 1,
            })?;
            pairs.insert(k.trim().replace('-', "_"), v.trim().to_string());
        }
        let flags = [
            ("example", self.example),
            ("h", self.h),
            ("k", self.k),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("qbound_upper", self.qbound_upper),
            ("qbound_lower", self.qbound_lower),
            ("out", self.out),
            ("ref", self.reference),
            ("workers", self.workers),
            ("tol_feas", self.tol_feas),
            ("tol_comp", self.tol_comp),
            ("tol_stationarity", self.tol_stationarity),
            ("tol_minres", self.tol_minres),
            ("max_outer", self.max_outer),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                pairs.insert(k.to_string(), v);
            }
        }
        RunConfig::from_pairs(&pairs)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (over, run): (Overrides, fn(&RunConfig) -> Result<(), CliError>) = match cli.command {
        Command::SolveState(o) => (o, commands::solve_state),
        Command::SolveOcp(o) => (o, commands::solve_ocp),
        Command::Convergence(o) => (o, commands::convergence),
        Command::Reference(o) => (o, commands::reference),
    };
    let result = over.resolve().map_err(CliError::from).and_then(|cfg| run(&cfg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
