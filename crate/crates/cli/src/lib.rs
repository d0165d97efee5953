//! Command-line driver: configuration, artifact persistence, plots and verbs.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod persist;
pub mod svg;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "ftcs",
    version,
    about = "Finite-time coherent sets from diffused Ulam transfer operators"
)]
pub struct Cli {
    /// Worker threads; all cores when absent.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Source {
    /// TOML run configuration.
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Built-in configuration.
    #[arg(long)]
    pub preset: Option<String>,
    /// Output directory; the configuration's `output.dir` when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunDirArg {
    /// Run directory written by `build`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Assemble P, p, q and M.
    Build(Source),
    /// Leading singular triples of M.
    Svd {
        #[command(flatten)]
        run: RunDirArg,
        /// Number of triples; the configured count when absent.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Optimal partition pair from the second singular triple.
    Extract(RunDirArg),
    /// Re-check the invariants of the stored artifacts.
    Verify(RunDirArg),
    /// Spectral gap and regularity across diffusion radii.
    Scale {
        #[command(flatten)]
        source: Source,
        /// Comma-separated radii; the configured list when absent.
        #[arg(long, value_delimiter = ',')]
        epsilons: Option<Vec<f64>>,
    },
    /// Compare against a rotated and translated frame.
    Objectivity(Source),
}

impl Source {
    fn resolve(&self) -> CliResult<(RunConfig, PathBuf)> {
        let config = match (&self.config, &self.preset) {
            (Some(path), None) => RunConfig::load(path)?,
            (None, Some(name)) => RunConfig::preset(name)?,
            (None, None) => {
                return Err(CliError::Usage(
                    "one of --config or --preset is required".into(),
                ))
            }
            (Some(_), Some(_)) => {
                return Err(CliError::Usage(
                    "--config and --preset are exclusive".into(),
                ))
            }
        };
        let out = self
            .out
            .clone()
            .or_else(|| config.output.dir.clone())
            .ok_or_else(|| {
                CliError::Usage("--out is required when the configuration has no output.dir".into())
            })?;
        Ok((config, out))
    }
}

fn init_threads(n: Option<usize>) -> CliResult<()> {
    if let Some(n) = n {
        if n == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        // A second initialisation in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    Ok(())
}

/// Runs one verb and returns its report for standard output.
pub fn execute(cli: Cli) -> CliResult<String> {
    match cli.command {
        Command::Build(source) => {
            let (config, out) = source.resolve()?;
            init_threads(cli.threads.or(config.output.threads))?;
            let dir = commands::build(&config, &out)?;
            Ok(format!(
                "built {} (config={})\n",
                dir.path.display(),
                dir.hash
            ))
        }
        Command::Svd { run, k } => {
            init_threads(cli.threads)?;
            let triples = commands::svd(&run.out, k)?;
            let mut s = String::from("index,sigma,residual\n");
            for (i, t) in triples.iter().enumerate() {
                s.push_str(&format!("{},{:.10},{:.3e}\n", i + 1, t.sigma, t.residual));
            }
            Ok(s)
        }
        Command::Extract(run) => {
            init_threads(cli.threads)?;
            let (part, bound) = commands::extract_partition(&run.out)?;
            Ok(format!(
                "rho = {:.6}  sigma_2 = {:.6}  slack = {:.3e}\nmu = [{:.6}, {:.6}]  nu = [{:.6}, {:.6}]\n",
                part.rho, bound.sigma2, bound.slack, part.mu[0], part.mu[1], part.nu[0], part.nu[1]
            ))
        }
        Command::Verify(run) => {
            init_threads(cli.threads)?;
            commands::verify(&run.out).map(|checks| commands::format_checks(&checks))
        }
        Command::Scale { source, epsilons } => {
            let (config, out) = source.resolve()?;
            init_threads(cli.threads.or(config.output.threads))?;
            let report = commands::scale(&config, &out, epsilons)?;
            let mut s = String::from("epsilon,sigma2,gap,holder_f,holder_g,width_f,width_g\n");
            for r in &report.rows {
                s.push_str(&format!(
                    "{},{:.8},{:.4e},{:.4e},{:.4e},{:.4},{:.4}\n",
                    r.epsilon, r.sigma2, r.gap, r.holder_f, r.holder_g, r.width_f, r.width_g
                ));
            }
            s.push_str(&format!("c_hat = {:.4}\n", report.c_hat));
            Ok(s)
        }
        Command::Objectivity(source) => {
            let (config, out) = source.resolve()?;
            init_threads(cli.threads.or(config.output.threads))?;
            let r = commands::objectivity(&config, &out)?;
            Ok(format!(
                "sigma_2: {:.8} -> {:.8} (delta {:.3e})\nrho: {:.6} -> {:.6}\njaccard = {:.4}  exact_match = {}\n",
                r.sigma2_original, r.sigma2_transformed, r.delta_sigma2, r.rho_original, r.rho_transformed, r.jaccard, r.exact_match
            ))
        }
    }
}

/// Parses `args`, runs the verb and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(report) => {
            print!("{report}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
