use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use emtrace::sim::{diff_histogram, execute, parse_config, Heatmap, SimError};

#[derive(Parser)]
#[command(
    name = "emtrace",
    version,
    about = "mmWave EM ray tracing for dynamic scenes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation described by a config file.
    Run { config: PathBuf },
    /// Histogram of |a - b| / |a| between two heatmap CSVs.
    Diff {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = 20)]
        bins: usize,
        /// Write the histogram here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn read(path: &PathBuf) -> Result<String, SimError> {
    std::fs::read_to_string(path)
        .map_err(|e| SimError::config(None, format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<(), SimError> {
    match cli.command {
        Command::Run { config } => {
            let mut cfg = parse_config(&read(&config)?).map_err(|e| match e {
                SimError::Config { line, message } => SimError::Config {
                    line,
                    message: format!("{}: {message}", config.display()),
                },
                other => other,
            })?;
            cfg.apply_env_overrides(|k| std::env::var(k).ok())?;
            for f in execute(&cfg)? {
                println!("{}", f.display());
            }
        }
        Command::Diff { a, b, bins, out } => {
            let ga = Heatmap::from_csv(&read(&a)?)?;
            let gb = Heatmap::from_csv(&read(&b)?)?;
            let hist = diff_histogram(&ga, &gb, bins)?;
            match out {
                Some(p) => std::fs::write(&p, hist.to_csv())?,
                None => print!("{}", hist.to_csv()),
            }
            eprintln!(
                "{} cells compared, {} excluded (no signal)",
                hist.compared, hist.excluded
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("emtrace: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
