use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use slabtherm::commands::{self, Validator, EXIT_IO};
use slabtherm::{parse_config, Config, Error};

/// Stationary transport of interacting bosons through a disordered slab.
#[derive(Debug, Parser)]
#[command(name = "slabtherm", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Run configuration (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `out` from the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads, 0 for one per core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Overrides the Monte Carlo seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the interacting problem.
    Solve,
    /// Solve the non-interacting problem.
    Linear,
    /// Run one family of cross-checks: kernels, walk or collision.
    Validate { which: String },
    /// Solve once per value of a configuration key.
    Scan {
        param: String,
        /// Comma-separated values, ratios like 1/250 allowed.
        values: String,
        /// When scanning b, keep alpha b² at its configured value.
        #[arg(long)]
        fixed_collisions: bool,
    },
}

fn load(common: &Common) -> Result<(Config, PathBuf), Error> {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| Error::Invalid("--config is required".into()))?;
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.clone(),
        source: e,
    })?;
    let mut config = parse_config(&text)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    let out = common
        .out
        .clone()
        .or_else(|| config.out.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    Ok((config, out))
}

fn parse_values(text: &str) -> Result<Vec<f64>, Error> {
    let mut probe = Config::new(1.0, 0.0);
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|v| {
            probe.set("b", v)?;
            Ok(probe.b)
        })
        .collect()
}

fn run(cli: Cli) -> Result<i32, Error> {
    let (config, out) = load(&cli.common)?;
    let code = match cli.command {
        Command::Solve => {
            let s = commands::cmd_solve(&config, &out)?;
            for w in &s.warnings {
                eprintln!("warning: {w}");
            }
            if !s.converged {
                eprintln!("not converged after {} iterations", s.iterations);
            }
            s.exit_code()
        }
        Command::Linear => commands::cmd_linear(&config, &out)?.exit_code(),
        Command::Validate { which } => {
            let which: Validator = which.parse()?;
            let report = commands::cmd_validate(which, &config, &out)?;
            for c in &report.checks {
                println!(
                    "{} {} value={:e} limit={:e}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.value,
                    c.limit
                );
            }
            report.exit_code()
        }
        Command::Scan {
            param,
            values,
            fixed_collisions,
        } => {
            let values = parse_values(&values)?;
            let rows = commands::cmd_scan(&param, &values, &config, &out, fixed_collisions)?;
            if rows.iter().all(|r| r.summary.converged) {
                commands::EXIT_OK
            } else {
                commands::EXIT_FAILED
            }
        }
    };
    Ok(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_IO } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.common.threads)
        .build_global()
    {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_IO as u8);
    }
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_IO as u8)
        }
    }
}
