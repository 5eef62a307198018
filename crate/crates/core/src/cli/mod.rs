//! Batch front end: `nlhomog <cell|residual|oracle-q|converge|zakai|validate>`.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::error::{Error, Result};
use crate::report::Summary;

pub mod commands;
pub mod config;

pub use config::RunConfig;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_ACCEPTANCE: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "nlhomog",
    version,
    about = "Homogenization of nonlocal SPDEs: cell problems, Monte-Carlo oracles, weak convergence and filtering"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides `seed` from the config.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory (default: `out` from the config, else `nlhomog-out/<command>`).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads; overrides `jobs` from the config.
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Solve the cell problems and report effective coefficients.
    Cell,
    /// Corrected-test-function residuals and dissipativity over the eps list.
    Residual,
    /// Monte-Carlo estimate of the effective diffusivity.
    OracleQ,
    /// Weak distance between heterogeneous and homogenized SPDE laws.
    Converge,
    /// Heterogeneous and homogenized Zakai filters against a particle filter.
    Zakai,
    /// Check the structural assumptions of a coefficient set.
    Validate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Cell => "cell",
            Command::Residual => "residual",
            Command::OracleQ => "oracle-q",
            Command::Converge => "converge",
            Command::Zakai => "zakai",
            Command::Validate => "validate",
        }
    }
}

/// Loads the config, applies flag overrides and runs the command inside a sized pool.
pub fn execute(cli: &Cli) -> Result<(Summary, PathBuf)> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(c) = &cfg.command {
        if c != cli.command.name() {
            return Err(Error::Config(format!("config is for `{c}`, not `{}`", cli.command.name())));
        }
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let jobs = cli.jobs.or(cfg.jobs).unwrap_or(1);
    if jobs == 0 {
        return Err(Error::Config("--jobs must be at least 1".into()));
    }
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("nlhomog-out").join(cli.command.name()));
    std::fs::create_dir_all(&out)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let summary = pool.install(|| match cli.command {
        Command::Cell => commands::cell(&cfg, &out),
        Command::Residual => commands::residual(&cfg, &out),
        Command::OracleQ => commands::oracle_q(&cfg, &out),
        Command::Converge => commands::converge(&cfg, &out),
        Command::Zakai => commands::zakai(&cfg, &out),
        Command::Validate => commands::validate(&cfg, &out),
    })?;
    summary.write(&out)?;
    Ok((summary, out))
}

/// Parses `args`, runs, prints verdicts and returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_PASS };
        }
    };
    match execute(&cli) {
        Ok((summary, out)) => {
            for v in &summary.verdicts {
                println!("{}", v.line());
            }
            println!("wrote {}", out.display());
            if summary.passed {
                EXIT_PASS
            } else {
                let failed: Vec<String> = summary
                    .verdicts
                    .iter()
                    .filter(|v| !v.passed)
                    .map(|v| format!("criterion {} {}", v.criterion, v.name))
                    .collect();
                eprintln!("acceptance failure: {}", failed.join("; "));
                EXIT_ACCEPTANCE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e.exit_code() {
                2 => EXIT_CONFIG,
                _ => EXIT_NUMERICAL,
            }
        }
    }
}
