use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use cantorscale::cli::{run, ExperimentConfig};
use cantorscale::error::Error;

/// Runs one experiment described by a JSON config.
#[derive(Parser, Debug)]
#[command(version, about)]
struct Args {
    /// Path to the experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Directory for the artifacts.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Worker threads; 0 picks the number of cores.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(args: &Args) -> Result<i32, Error> {
    if args.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(args.threads)
            .build_global()
            .map_err(|e| Error::Config { key: "--threads".into(), message: e.to_string() })?;
    }
    let text = std::fs::read_to_string(&args.config)?;
    let config = ExperimentConfig::from_json(&text)?;
    let outcome = run(&config, &args.out)?;
    println!("{}", outcome.summary);
    Ok(outcome.exit_code)
}
