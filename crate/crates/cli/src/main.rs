use std::path::PathBuf;
use std::process::ExitCode;

use cavi_cli::output::write_all;
use cavi_cli::{run, Command, Overrides, RawConfig};
use clap::Parser;

/// Coordinate ascent variational inference experiments.
#[derive(Parser, Debug)]
#[command(version, about)]
struct Args {
    /// gaussian, gmm, probit, logit, altmin or scaling
    command: Command,
    /// key=value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, default_value = "cavi-out")]
    out: PathBuf,
    /// Number of replications
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn execute(args: &Args) -> cavi_cli::Result<bool> {
    let mut raw = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| cavi_cli::CliError::Io {
                path: path.display().to_string(),
                source,
            })?;
            RawConfig::parse(&text)?
        }
        None => RawConfig::default(),
    };
    Overrides {
        seed: args.seed,
        replications: args.reps,
        max_iter: args.max_iter,
        tol: args.tol,
    }
    .apply(&mut raw);
    let summary = run(args.command, &raw)?;
    write_all(&args.out, &summary.files)?;
    print!("{}", summary.render());
    Ok(summary.passed())
}
